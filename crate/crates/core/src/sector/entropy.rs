//! Schmidt spectrum across the battery/charger cut.
//!
//! A sector configuration splits into battery bits `x & mask` and charger
//! bits `x >> n_b`. Amplitudes with `b` battery excitations form a
//! `C(N_B, b) x C(N_C, n_exc - b)` coefficient block; the reduced density
//! matrix of the battery is block diagonal, so its eigenvalues are the squared
//! singular values of every block.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;

use super::{Binomials, SectorBasis};
use crate::error::Result;

#[derive(Debug, Clone)]
pub struct SchmidtBlocks {
    /// Per basis index: (block, row, col).
    placement: Vec<(u32, u32, u32)>,
    shapes: Vec<(usize, usize)>,
}

impl SchmidtBlocks {
    pub fn new(basis: &SectorBasis, n_b: usize) -> Result<Self> {
        let n = basis.n();
        let n_c = n - n_b;
        let n_exc = basis.n_exc();
        let b_min = n_exc.saturating_sub(n_c);
        let b_max = n_exc.min(n_b);
        let binom: &Binomials = basis.binomials();
        let shapes: Vec<(usize, usize)> =
            (b_min..=b_max).map(|b| (binom.get(n_b, b) as usize, binom.get(n_c, n_exc - b) as usize)).collect();
        let mask = (1u64 << n_b) - 1;
        let placement = basis
            .configs()
            .iter()
            .map(|&x| {
                let xb = x & mask;
                let xc = x >> n_b;
                let b = xb.count_ones() as usize;
                ((b - b_min) as u32, binom.rank(xb) as u32, binom.rank(xc) as u32)
            })
            .collect();
        Ok(Self { placement, shapes })
    }

    /// Eigenvalues of the battery's reduced density matrix.
    pub fn spectrum(&self, amps: &[C64]) -> Result<Vec<f64>> {
        let mut blocks: Vec<DMatrix<C64>> = self.shapes.iter().map(|&(r, c)| DMatrix::zeros(r, c)).collect();
        for (&(blk, r, c), a) in self.placement.iter().zip(amps) {
            blocks[blk as usize][(r as usize, c as usize)] = *a;
        }
        let mut out = Vec::new();
        for m in blocks {
            if m.iter().all(|a| a.norm_sqr() == 0.0) {
                continue;
            }
            if m.nrows() == 1 || m.ncols() == 1 {
                out.push(m.iter().map(|a| a.norm_sqr()).sum());
                continue;
            }
            out.extend(m.singular_values().iter().map(|s| s * s));
        }
        Ok(out)
    }
}

/// Convenience wrapper: Schmidt weights of a single sector state.
pub fn schmidt_spectrum(basis: &SectorBasis, n_b: usize, amps: &[C64]) -> Result<Vec<f64>> {
    SchmidtBlocks::new(basis, n_b)?.spectrum(amps)
}
