//! General (disordered) model restricted to the fixed-excitation sector.
//!
//! Configurations are `u64` bit strings (bit `m` set = qubit `m` excited),
//! battery on the low-order bits. For a fixed popcount, ascending integer order
//! coincides with colexicographic order, so a configuration's ordinal is its
//! combinatorial rank and no hash map is needed.

mod entropy;
pub mod noise;

use std::sync::Arc;

use num_complex::Complex64 as C64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{DynamicsResult, Measurement, Observables, Recorder};
use crate::error::{invalid, Error, Result};
use crate::krylov::{self, Checkpoints, KrylovSettings, LinearOperator};
use crate::model::{CouplingTable, TimeGrid};

pub use entropy::{schmidt_spectrum, SchmidtBlocks};

/// Widest register the `u64` configuration encoding supports.
pub const MAX_QUBITS: usize = 62;

/// Pascal triangle up to `n`.
#[derive(Debug, Clone)]
pub(crate) struct Binomials {
    n: usize,
    table: Vec<u64>,
}

impl Binomials {
    pub(crate) fn new(n: usize) -> Self {
        let w = n + 1;
        let mut table = vec![0u64; w * w];
        for a in 0..=n {
            table[a * w] = 1;
            for b in 1..=a {
                table[a * w + b] = table[(a - 1) * w + b - 1] + if b < a { table[(a - 1) * w + b] } else { 0 };
            }
        }
        Self { n, table }
    }

    pub(crate) fn get(&self, a: usize, b: usize) -> u64 {
        if b > a || a > self.n {
            0
        } else {
            self.table[a * (self.n + 1) + b]
        }
    }

    /// Colex rank of `x` among bit strings with the same popcount.
    pub(crate) fn rank(&self, mut x: u64) -> u64 {
        let mut r = 0;
        let mut i = 1;
        while x != 0 {
            let pos = x.trailing_zeros() as usize;
            r += self.get(pos, i);
            i += 1;
            x &= x - 1;
        }
        r
    }

    pub(crate) fn unrank(&self, mut r: u64, ones: usize, width: usize) -> u64 {
        let mut x = 0u64;
        let mut k = ones;
        for pos in (0..width).rev() {
            if k == 0 {
                break;
            }
            let c = self.get(pos, k);
            if r >= c {
                r -= c;
                x |= 1 << pos;
                k -= 1;
            }
        }
        x
    }
}

/// Ascending list of `n`-bit configurations with exactly `n_exc` set bits.
#[derive(Debug, Clone)]
pub struct SectorBasis {
    n: usize,
    n_exc: usize,
    binom: Binomials,
    configs: Vec<u64>,
}

impl SectorBasis {
    pub fn new(n: usize, n_exc: usize) -> Result<Self> {
        Self::with_cap(n, n_exc, u64::MAX)
    }

    pub fn with_cap(n: usize, n_exc: usize, max_dim: u64) -> Result<Self> {
        if n == 0 || n > MAX_QUBITS {
            return Err(invalid("n", format!("{n} qubits outside 1..={MAX_QUBITS}")));
        }
        if n_exc > n {
            return Err(invalid("n_exc", format!("{n_exc} excitations exceed {n} qubits")));
        }
        let binom = Binomials::new(n);
        let dim = binom.get(n, n_exc);
        if dim > max_dim {
            return Err(Error::SectorTooLarge { dim, cap: max_dim });
        }
        let mut configs = Vec::with_capacity(dim as usize);
        if n_exc == 0 {
            configs.push(0);
        } else {
            // Gosper's hack walks same-popcount integers in ascending order.
            let mut x: u64 = (1u64 << n_exc) - 1;
            let limit = 1u64 << n;
            while x < limit {
                configs.push(x);
                let c = x & x.wrapping_neg();
                let r = x + c;
                x = (((r ^ x) >> 2) / c) | r;
            }
        }
        debug_assert_eq!(configs.len() as u64, dim);
        Ok(Self { n, n_exc, binom, configs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_exc(&self) -> usize {
        self.n_exc
    }

    pub fn dim(&self) -> usize {
        self.configs.len()
    }

    pub fn configs(&self) -> &[u64] {
        &self.configs
    }

    pub fn config(&self, index: usize) -> u64 {
        self.configs[index]
    }

    /// Ordinal of a configuration in the sector (must have `n_exc` bits).
    pub fn rank(&self, config: u64) -> usize {
        debug_assert_eq!(config.count_ones() as usize, self.n_exc);
        self.binom.rank(config) as usize
    }

    pub fn unrank(&self, index: usize) -> u64 {
        self.binom.unrank(index as u64, self.n_exc, self.n)
    }

    pub(crate) fn binomials(&self) -> &Binomials {
        &self.binom
    }
}

/// Memory limits for sector construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectorLimits {
    /// Largest admissible sector dimension.
    pub max_dim: u64,
    /// Above this many stored hops the matrix-vector product regenerates
    /// hops on the fly.
    pub max_stored_hops: u64,
}

impl Default for SectorLimits {
    fn default() -> Self {
        Self { max_dim: 4_000_000, max_stored_hops: 40_000_000 }
    }
}

#[derive(Debug, Clone)]
enum Hopping {
    /// CSR rows: neighbours of each configuration with their coupling.
    /// Couplings are stored as flat `m * n + k` indices into the table.
    Stored {
        row_ptr: Vec<usize>,
        cols: Vec<u32>,
        pairs: Vec<u16>,
    },
    OnTheFly,
}

/// `H = sum_m V_m n_m + sum_{m<n} J_mn (s+_m s-_n + h.c.)` on the sector.
#[derive(Debug, Clone)]
pub struct SparseHamiltonian {
    basis: Arc<SectorBasis>,
    table: CouplingTable,
    diagonal: Vec<f64>,
    hopping: Hopping,
}

/// Calls `f(target, m * n + k)` for every move of an excitation from set bit
/// `m` to clear bit `k` with nonzero coupling.
fn neighbours(table: &CouplingTable, basis: &SectorBasis, x: u64, mut f: impl FnMut(usize, usize)) {
    let n = basis.n();
    let mut set = x;
    while set != 0 {
        let m = set.trailing_zeros() as usize;
        set &= set - 1;
        for k in 0..n {
            if x >> k & 1 == 1 {
                continue;
            }
            if table.coupling(m, k) != 0.0 {
                f(basis.rank(x ^ (1 << m) ^ (1 << k)), m * n + k);
            }
        }
    }
}

impl SparseHamiltonian {
    pub fn basis(&self) -> &Arc<SectorBasis> {
        &self.basis
    }

    pub fn table(&self) -> &CouplingTable {
        &self.table
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    pub fn is_matrix_free(&self) -> bool {
        matches!(self.hopping, Hopping::OnTheFly)
    }

    pub fn stored_hops(&self) -> usize {
        match &self.hopping {
            Hopping::Stored { pairs, .. } => pairs.len(),
            Hopping::OnTheFly => 0,
        }
    }

    /// Calls `f(col, value)` for every off-diagonal entry of `row`.
    pub fn for_each_hop(&self, row: usize, mut f: impl FnMut(usize, f64)) {
        match &self.hopping {
            Hopping::Stored { row_ptr, cols, pairs } => {
                for idx in row_ptr[row]..row_ptr[row + 1] {
                    f(cols[idx] as usize, self.table.coupling_at(pairs[idx] as usize));
                }
            }
            Hopping::OnTheFly => neighbours(&self.table, &self.basis, self.basis.config(row), |col, pair| {
                f(col, self.table.coupling_at(pair))
            }),
        }
    }

    /// `<psi|H|psi>`.
    pub fn expectation(&self, amps: &[C64]) -> f64 {
        let mut y = vec![C64::new(0.0, 0.0); amps.len()];
        self.apply(amps, &mut y);
        amps.iter().zip(&y).map(|(a, b)| (a.conj() * b).re).sum()
    }
}

impl LinearOperator for SparseHamiltonian {
    fn dim(&self) -> usize {
        self.diagonal.len()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        if let Hopping::Stored { row_ptr, cols, pairs } = &self.hopping {
            let j = self.table.couplings_flat();
            y.par_iter_mut().enumerate().with_min_len(256).for_each(|(row, out)| {
                let (a, b) = (row_ptr[row], row_ptr[row + 1]);
                let mut acc = x[row] * self.diagonal[row];
                for (&c, &p) in cols[a..b].iter().zip(&pairs[a..b]) {
                    acc += x[c as usize] * j[p as usize];
                }
                *out = acc;
            });
            return;
        }
        y.par_iter_mut().enumerate().with_min_len(256).for_each(|(row, out)| {
            let mut acc = x[row] * self.diagonal[row];
            self.for_each_hop(row, |col, j| acc += x[col] * j);
            *out = acc;
        });
    }
}

/// Enumerates the sector with `n_exc` excitations and its Hamiltonian.
pub fn build_sector(table: &CouplingTable, n_exc: usize, limits: &SectorLimits) -> Result<SparseHamiltonian> {
    let n = table.n();
    let basis = Arc::new(SectorBasis::with_cap(n, n_exc, limits.max_dim)?);
    let diagonal: Vec<f64> = basis
        .configs()
        .iter()
        .map(|&x| (0..n).filter(|&m| x >> m & 1 == 1).map(|m| table.potential(m)).sum())
        .collect();
    let hops_per_row = (n_exc * (n - n_exc)) as u64;
    let hopping = if hops_per_row.saturating_mul(basis.dim() as u64) > limits.max_stored_hops {
        Hopping::OnTheFly
    } else {
        let rows: Vec<(Vec<u32>, Vec<u16>)> = basis
            .configs()
            .par_iter()
            .map(|&x| {
                let mut c = Vec::with_capacity(hops_per_row as usize);
                let mut v = Vec::with_capacity(hops_per_row as usize);
                neighbours(table, &basis, x, |col, pair| {
                    c.push(col as u32);
                    v.push(pair as u16);
                });
                (c, v)
            })
            .collect();
        let mut row_ptr = Vec::with_capacity(basis.dim() + 1);
        row_ptr.push(0);
        let mut cols = Vec::new();
        let mut pairs = Vec::new();
        for (c, v) in rows {
            cols.extend(c);
            pairs.extend(v);
            row_ptr.push(cols.len());
        }
        Hopping::Stored { row_ptr, cols, pairs }
    };
    Ok(SparseHamiltonian { basis, table: table.clone(), diagonal, hopping })
}

/// Complex amplitudes over a [`SectorBasis`].
#[derive(Debug, Clone)]
pub struct SectorState {
    basis: Arc<SectorBasis>,
    amps: Vec<C64>,
}

impl SectorState {
    /// Every charger bit set, battery empty (battery = the low `n_b` bits).
    pub fn charger_full(basis: Arc<SectorBasis>, n_b: usize) -> Self {
        let n = basis.n();
        let config = ((1u64 << (n - n_b)) - 1) << n_b;
        let mut amps = vec![C64::new(0.0, 0.0); basis.dim()];
        amps[basis.rank(config)] = C64::new(1.0, 0.0);
        Self { basis, amps }
    }

    pub fn from_amps(basis: Arc<SectorBasis>, amps: Vec<C64>) -> Result<Self> {
        if amps.len() != basis.dim() {
            return Err(Error::Dimension { expected: basis.dim(), got: amps.len() });
        }
        Ok(Self { basis, amps })
    }

    pub fn basis(&self) -> &Arc<SectorBasis> {
        &self.basis
    }

    pub fn amps(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Observables of one sector amplitude vector.
pub fn measure(h: &SparseHamiltonian, blocks: &SchmidtBlocks, amps: &[C64], obs: Observables) -> Result<Measurement> {
    let table = h.table();
    let n = table.n();
    let n_b = table.n_b();
    let basis = h.basis();
    let mut occupation = vec![0.0; n];
    let mut norm_sqr = 0.0;
    for (&x, c) in basis.configs().iter().zip(amps) {
        let p = c.norm_sqr();
        if p == 0.0 {
            continue;
        }
        norm_sqr += p;
        let mut bits = x;
        while bits != 0 {
            occupation[bits.trailing_zeros() as usize] += p;
            bits &= bits - 1;
        }
    }
    let (mut e_b, mut e_c, mut nb, mut nc) = (0.0, 0.0, 0.0, 0.0);
    for (m, occ) in occupation.iter().enumerate() {
        if m < n_b {
            e_b += table.potential(m) * occ;
            nb += occ;
        } else {
            e_c += table.potential(m) * occ;
            nc += occ;
        }
    }
    // Coarse passes skip the entropy and the extra matvec behind <H>.
    let (s_vn, energy) = match obs {
        Observables::All => (crate::dynamics::entropy(blocks.spectrum(amps)?), h.expectation(amps)),
        Observables::EnergyOnly => (f64::NAN, f64::NAN),
    };
    Ok(Measurement { norm_sqr, e_b, e_c, n_b: nb, n_c: nc, energy, s_vn })
}

/// Lanczos propagation of `state0` through the grid.
pub fn lanczos_propagate(
    state0: &SectorState,
    h: &SparseHamiltonian,
    grid: &TimeGrid,
    settings: KrylovSettings,
) -> Result<Vec<SectorState>> {
    let times = grid.times();
    let mut out = Vec::with_capacity(times.len());
    krylov::evolve(h, settings, state0.amps(), &times, |_, v| {
        out.push(SectorState { basis: state0.basis.clone(), amps: v.to_vec() });
        Ok(())
    })?;
    Ok(out)
}

/// Largest battery-charger entropy reachable from the charger-full state:
/// `ln(K + 1)` for uniform couplings, otherwise the log of the number of
/// battery configurations compatible with `n_exc`.
pub fn entropy_ceiling(table: &CouplingTable, n_exc: usize) -> f64 {
    let (n_b, n_c) = (table.n_b(), table.n_c());
    if table.as_uniform().is_some() {
        return ((n_b.min(n_c) + 1) as f64).ln();
    }
    let lo = n_exc.saturating_sub(n_c);
    let hi = n_b.min(n_exc);
    let mut binom = 1.0;
    let mut total = 0.0;
    for k in 0..=hi {
        if k > 0 {
            binom *= (n_b + 1 - k) as f64 / k as f64;
        }
        if k >= lo {
            total += binom;
        }
    }
    total.ln()
}

/// Observables of already-propagated sector states.
pub fn sector_observables(h: &SparseHamiltonian, states: &[SectorState], grid: &TimeGrid) -> Result<DynamicsResult> {
    let times = grid.times();
    if states.len() != times.len() {
        return Err(Error::Dimension { expected: times.len(), got: states.len() });
    }
    let blocks = SchmidtBlocks::new(h.basis(), h.table().n_b())?;
    let initial = SectorState::charger_full(h.basis().clone(), h.table().n_b());
    let m0 = measure(h, &blocks, initial.amps(), Observables::All)?;
    let t = h.table();
    let mut rec = Recorder::new(&m0, h.basis().n_exc() as f64, t.n_b().min(t.n_c()) as f64, times.len())
        .with_entropy_bound(entropy_ceiling(t, h.basis().n_exc()));
    for (time, s) in times.iter().zip(states) {
        rec.push(*time, &measure(h, &blocks, s.amps(), Observables::All)?);
    }
    Ok(rec.finish())
}

/// Streams Lanczos propagation from the charger-full state straight into a
/// [`DynamicsResult`] without keeping the states.
pub fn run(h: &SparseHamiltonian, settings: KrylovSettings, times: &[f64], obs: Observables) -> Result<DynamicsResult> {
    run_cached(h, settings, &Checkpoints::new(0), times, obs)
}

/// [`run`] resuming from states saved by earlier calls with the same cache.
pub fn run_cached(
    h: &SparseHamiltonian,
    settings: KrylovSettings,
    cache: &Checkpoints,
    times: &[f64],
    obs: Observables,
) -> Result<DynamicsResult> {
    let table = h.table();
    let blocks = SchmidtBlocks::new(h.basis(), table.n_b())?;
    let initial = SectorState::charger_full(h.basis().clone(), table.n_b());
    let m0 = measure(h, &blocks, initial.amps(), obs)?;
    let k_max = table.n_b().min(table.n_c()) as f64;
    let mut rec = Recorder::new(&m0, h.basis().n_exc() as f64, k_max, times.len())
        .with_entropy_bound(entropy_ceiling(table, h.basis().n_exc()));
    match obs {
        Observables::All => {
            cache.evolve(h, settings, initial.amps(), times, |i, v| {
                rec.push(times[i], &measure(h, &blocks, v, obs)?);
                Ok(())
            })?;
        }
        Observables::EnergyOnly => {
            let n_b = table.n_b();
            let n_exc = h.basis().n_exc() as f64;
            let mut w_nb = Vec::with_capacity(h.dim());
            let (mut w_eb, mut w_ec) = (Vec::new(), Vec::new());
            // With equal potentials inside each part both energies follow
            // from the battery count, which saves two projections per step.
            let flat = |r: std::ops::Range<usize>| {
                let v0 = table.potential(r.start);
                r.into_iter().all(|m| table.potential(m) == v0).then_some(v0)
            };
            let levels = flat(0..n_b).zip(flat(n_b..table.n()));
            for &x in h.basis().configs() {
                let (mut eb, mut nb, mut ec) = (0.0, 0.0, 0.0);
                let mut bits = x;
                while bits != 0 {
                    let m = bits.trailing_zeros() as usize;
                    if m < n_b {
                        eb += table.potential(m);
                        nb += 1.0;
                    } else {
                        ec += table.potential(m);
                    }
                    bits &= bits - 1;
                }
                w_nb.push(nb);
                if levels.is_none() {
                    w_eb.push(eb);
                    w_ec.push(ec);
                }
            }
            let weights: Vec<&[f64]> = if levels.is_some() { vec![&w_nb] } else { vec![&w_nb, &w_eb, &w_ec] };
            cache.evolve_diagonal(h, settings, initial.amps(), times, &weights, |i, q| {
                let n_c = n_exc * q[0] - q[1];
                let (e_b, e_c) = match levels {
                    Some((v_b, v_c)) => (v_b * q[1], v_c * n_c),
                    None => (q[2], q[3]),
                };
                let m = Measurement { norm_sqr: q[0], e_b, n_b: q[1], e_c, n_c, energy: f64::NAN, s_vn: f64::NAN };
                rec.push(times[i], &m);
                Ok(())
            })?;
        }
    }
    Ok(rec.finish())
}
