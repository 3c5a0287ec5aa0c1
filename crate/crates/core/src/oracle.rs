//! Brute-force reference on the full `2^N` Hilbert space.
//!
//! The Hamiltonian is assembled as a dense `2^N x 2^N` matrix straight from
//! the Pauli form of the model, the block with the initial state's excitation
//! number is diagonalized densely, and the battery entropy comes from an SVD
//! of the state reshaped to `2^N_B x 2^N_C`. Nothing here shares code with
//! the collective or sector engines; it exists to check them for `N <= 12`.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64 as C64;

use crate::dynamics::{entropy, DynamicsResult, Measurement, Recorder};
use crate::error::{invalid, Result};
use crate::model::CouplingTable;

/// Largest register the oracle accepts.
pub const MAX_QUBITS: usize = 14;

/// Dense `H = sum_m V_m n_m + sum_{m<n} J_mn (s+_m s-_n + s-_m s+_n)`; bit `m`
/// of a basis index is qubit `m`.
pub fn dense_hamiltonian(table: &CouplingTable) -> Result<DMatrix<f64>> {
    let n = table.n();
    if n > MAX_QUBITS {
        return Err(invalid("n", format!("oracle is limited to {MAX_QUBITS} qubits")));
    }
    let dim = 1usize << n;
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for x in 0..dim {
        for m in 0..n {
            if x >> m & 1 == 1 {
                h[(x, x)] += table.potential(m);
            }
        }
        for m in 0..n {
            for k in (m + 1)..n {
                // s+_m s-_k + h.c. swaps the two bits when they differ.
                if (x >> m & 1) != (x >> k & 1) {
                    let y = x ^ (1 << m) ^ (1 << k);
                    h[(y, x)] += table.coupling(m, k);
                }
            }
        }
    }
    Ok(h)
}

/// Kronecker-product assembly of the same Hamiltonian from 2x2 factors.
/// Slow; used to cross-check [`dense_hamiltonian`] on small registers.
pub fn kron_hamiltonian(table: &CouplingTable) -> DMatrix<f64> {
    let n = table.n();
    let id = DMatrix::<f64>::identity(2, 2);
    // |0> = empty, |1> = excited; raise maps 0 -> 1.
    let raise = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 1.0, 0.0]);
    let lower = raise.transpose();
    let number = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
    // Qubit 0 is the least significant bit, so it is the rightmost factor.
    let chain = |ops: &dyn Fn(usize) -> DMatrix<f64>| {
        let mut acc = DMatrix::<f64>::identity(1, 1);
        for site in (0..n).rev() {
            acc = acc.kronecker(&ops(site));
        }
        acc
    };
    let dim = 1 << n;
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for m in 0..n {
        h += chain(&|s| if s == m { number.clone() } else { id.clone() }) * table.potential(m);
    }
    for m in 0..n {
        for k in (m + 1)..n {
            let j = table.coupling(m, k);
            let up_down = chain(&|s| match s {
                s if s == m => raise.clone(),
                s if s == k => lower.clone(),
                _ => id.clone(),
            });
            h += (&up_down + up_down.transpose()) * j;
        }
    }
    h
}

/// Exact propagation in the initial state's excitation block.
pub struct DenseOracle {
    table: CouplingTable,
    /// Full-space indices of the block, ascending.
    block: Vec<usize>,
    eig: SymmetricEigen<f64, nalgebra::Dyn>,
    /// Eigenbasis components of the initial state.
    weights: Vec<f64>,
    energy0: f64,
}

impl DenseOracle {
    pub fn new(table: &CouplingTable) -> Result<Self> {
        let h = dense_hamiltonian(table)?;
        let n_exc = table.n_c() as u32;
        let block: Vec<usize> = (0..h.nrows()).filter(|x| x.count_ones() == n_exc).collect();
        // The block must be closed under H.
        for &x in &block {
            for y in 0..h.nrows() {
                if y.count_ones() != n_exc {
                    assert_eq!(h[(y, x)], 0.0, "H couples excitation sectors");
                }
            }
        }
        let sub = DMatrix::from_fn(block.len(), block.len(), |i, j| h[(block[i], block[j])]);
        let eig = sub.symmetric_eigen();
        let start = ((1usize << table.n_c()) - 1) << table.n_b();
        let row = block.iter().position(|&x| x == start).expect("initial state in block");
        let weights = (0..block.len()).map(|j| eig.eigenvectors[(row, j)]).collect();
        Ok(Self { table: table.clone(), block, eig, weights, energy0: h[(start, start)] })
    }

    pub fn block_dim(&self) -> usize {
        self.block.len()
    }

    pub fn energy0(&self) -> f64 {
        self.energy0
    }

    /// Full `2^N` state vector at time `t`.
    pub fn state(&self, t: f64) -> Vec<C64> {
        let dim = self.block.len();
        let mut full = vec![C64::new(0.0, 0.0); 1 << self.table.n()];
        let phases: Vec<C64> =
            (0..dim).map(|j| self.weights[j] * C64::from_polar(1.0, -self.eig.eigenvalues[j] * t)).collect();
        for (i, &x) in self.block.iter().enumerate() {
            full[x] = (0..dim).map(|j| phases[j] * self.eig.eigenvectors[(i, j)]).sum();
        }
        full
    }

    fn measure(&self, psi: &[C64]) -> Measurement {
        let t = &self.table;
        let n_b = t.n_b();
        let mut m = Measurement { norm_sqr: 0.0, e_b: 0.0, e_c: 0.0, n_b: 0.0, n_c: 0.0, energy: 0.0, s_vn: 0.0 };
        for &x in &self.block {
            let p = psi[x].norm_sqr();
            m.norm_sqr += p;
            for site in 0..t.n() {
                if x >> site & 1 == 1 {
                    if site < n_b {
                        m.e_b += p * t.potential(site);
                        m.n_b += p;
                    } else {
                        m.e_c += p * t.potential(site);
                        m.n_c += p;
                    }
                }
            }
        }
        // Energy from the eigen-expansion: constant in time.
        m.energy = self.weights.iter().zip(self.eig.eigenvalues.iter()).map(|(w, e)| w * w * e).sum();
        // psi[x] with x = battery + (charger << N_B) -> matrix (battery, charger).
        let rows = 1usize << n_b;
        let cols = 1usize << t.n_c();
        let mat = DMatrix::from_fn(rows, cols, |b, c| psi[b | (c << n_b)]);
        m.s_vn = entropy(mat.singular_values().iter().map(|s| s * s));
        m
    }

    pub fn evaluate(&self, times: &[f64]) -> DynamicsResult {
        let m0 = self.measure(&self.state(0.0));
        let k_max = self.table.n_b().min(self.table.n_c()) as f64;
        let mut rec = Recorder::new(&m0, self.table.n_c() as f64, k_max, times.len())
            .with_entropy_bound(crate::sector::entropy_ceiling(&self.table, self.table.n_c()));
        for &t in times {
            rec.push(t, &self.measure(&self.state(t)));
        }
        rec.finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::SystemSpec;

    #[test]
    fn bitwise_matches_kronecker() {
        let mut t = CouplingTable::from_spec(&SystemSpec::new(2, 3, 1.0, 0.3, 0.7, -0.4, 1.2).unwrap()).unwrap();
        t.set_coupling(0, 4, 0.25);
        let a = dense_hamiltonian(&t).unwrap();
        let b = kron_hamiltonian(&t);
        assert_eq!(a.nrows(), 32);
        assert!((a - b).amax() < 1e-15);
    }

    #[test]
    fn symmetric_block_for_two_plus_two() {
        // Restricted to the permutation-symmetric states this is
        // diag [0, 3, 2], offdiag [2, 2].
        let spec = SystemSpec::new(2, 2, 1.0, 0.0, 1.0, 1.0, 1.0).unwrap();
        let h = dense_hamiltonian(&CouplingTable::from_spec(&spec).unwrap()).unwrap();
        let dicke = |bits: &[usize]| {
            let mut v = DMatrix::<f64>::zeros(16, 1);
            for &b in bits {
                v[b] = 1.0 / (bits.len() as f64).sqrt();
            }
            v
        };
        let k0 = dicke(&[0b1100]);
        let k1 = dicke(&[0b0101, 0b0110, 0b1001, 0b1010]);
        let k2 = dicke(&[0b0011]);
        let el = |a: &DMatrix<f64>, b: &DMatrix<f64>| (a.transpose() * &h * b)[0];
        assert!((el(&k0, &k0) - 0.0).abs() < 1e-14);
        assert!((el(&k1, &k1) - 3.0).abs() < 1e-14);
        assert!((el(&k2, &k2) - 2.0).abs() < 1e-14);
        assert!((el(&k0, &k1) - 2.0).abs() < 1e-14);
        assert!((el(&k1, &k2) - 2.0).abs() < 1e-14);
    }

    #[test]
    fn oracle_conserves() {
        let t = CouplingTable::from_spec(&SystemSpec::homogeneous(3, 3, 1.0, 0.8).unwrap()).unwrap();
        let o = DenseOracle::new(&t).unwrap();
        assert_eq!(o.block_dim(), 20);
        let r = o.evaluate(&[0.0, 0.7, 3.1]);
        assert!(r.e_b[0].abs() < 1e-12);
        assert!(r.s_vn[0].abs() < 1e-12);
        assert!(r.diagnostics.max_norm_error < 1e-12);
        assert!(r.diagnostics.max_excitation_error < 1e-12);
    }
}
