//! Real symmetric tridiagonal eigensolver (implicit QL with Wilkinson-style
//! shifts, after the EISPACK `tql2` routine).
//!
//! Eigenvectors are stored one per row so that each Givens rotation touches two
//! contiguous slices.

use crate::error::{Error, Result};

const MAX_SWEEPS_PER_EIGENVALUE: usize = 60;

/// Eigenvalues in ascending order and the matching orthonormal eigenvectors.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    eigenvalues: Vec<f64>,
    /// `vectors[j * n + k]` is component `k` of eigenvector `j`.
    vectors: Vec<f64>,
}

impl SpectralDecomposition {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn eigenvector(&self, j: usize) -> &[f64] {
        let n = self.dim();
        &self.vectors[j * n..(j + 1) * n]
    }

    /// `U[k][j]`: component `k` of eigenvector `j`.
    pub fn component(&self, k: usize, j: usize) -> f64 {
        self.vectors[j * self.dim() + k]
    }

    /// Largest entry of `|U diag(lambda) U^T - T|` for the tridiagonal `T`.
    pub fn reconstruction_error(&self, diag: &[f64], offdiag: &[f64]) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for r in 0..n {
            for c in 0..n {
                let mut sum = 0.0;
                for j in 0..n {
                    sum += self.component(r, j) * self.eigenvalues[j] * self.component(c, j);
                }
                let want = if r == c {
                    diag[r]
                } else if r + 1 == c {
                    offdiag[r]
                } else if c + 1 == r {
                    offdiag[c]
                } else {
                    0.0
                };
                worst = worst.max((sum - want).abs());
            }
        }
        worst
    }

    /// Largest entry of `|U^T U - I|`.
    pub fn orthonormality_error(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for a in 0..n {
            for b in a..n {
                let dot: f64 = self.eigenvector(a).iter().zip(self.eigenvector(b)).map(|(x, y)| x * y).sum();
                let want = if a == b { 1.0 } else { 0.0 };
                worst = worst.max((dot - want).abs());
            }
        }
        worst
    }
}

/// Full eigendecomposition of the symmetric tridiagonal matrix with main
/// diagonal `diag` and first off-diagonal `offdiag`.
pub fn eigendecompose(diag: &[f64], offdiag: &[f64]) -> Result<SpectralDecomposition> {
    let n = diag.len();
    check_shape(n, offdiag.len())?;
    let mut d = diag.to_vec();
    let mut e = padded(offdiag, n);
    let mut z = vec![0.0; n * n];
    for i in 0..n {
        z[i * n + i] = 1.0;
    }
    ql_implicit(&mut d, &mut e, Some(&mut z))?;
    sort_pairs(&mut d, Some(&mut z));
    Ok(SpectralDecomposition { eigenvalues: d, vectors: z })
}

/// Eigenvalues only, ascending.
pub fn eigenvalues(diag: &[f64], offdiag: &[f64]) -> Result<Vec<f64>> {
    let n = diag.len();
    check_shape(n, offdiag.len())?;
    let mut d = diag.to_vec();
    let mut e = padded(offdiag, n);
    ql_implicit(&mut d, &mut e, None)?;
    sort_pairs(&mut d, None);
    Ok(d)
}

fn check_shape(n: usize, off: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Dimension { expected: 1, got: 0 });
    }
    if off + 1 != n {
        return Err(Error::Dimension { expected: n - 1, got: off });
    }
    Ok(())
}

fn padded(offdiag: &[f64], n: usize) -> Vec<f64> {
    let mut e = Vec::with_capacity(n);
    e.extend_from_slice(offdiag);
    e.push(0.0);
    e
}

fn ql_implicit(d: &mut [f64], e: &mut [f64], mut z: Option<&mut [f64]>) -> Result<()> {
    let n = d.len();
    let eps = f64::EPSILON;
    let mut shift_acc = 0.0;
    let mut tst1: f64 = 0.0;
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }
        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_SWEEPS_PER_EIGENVALUE {
                    return Err(Error::NoConvergence { index: l });
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (2.0 * e[l]);
                let mut r = p.hypot(1.0);
                if p < 0.0 {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().skip(l + 2) {
                    *di -= h;
                }
                shift_acc += h;

                p = d[m];
                let mut c = 1.0;
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = 0.0;
                let mut s2 = 0.0;
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    if let Some(z) = z.as_deref_mut() {
                        let (lo, hi) = z.split_at_mut((i + 1) * n);
                        let row_i = &mut lo[i * n..];
                        let row_next = &mut hi[..n];
                        for (zi, zn) in row_i.iter_mut().zip(row_next.iter_mut()) {
                            let t = *zn;
                            *zn = s * *zi + c * t;
                            *zi = c * *zi - s * t;
                        }
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += shift_acc;
        e[l] = 0.0;
    }
    Ok(())
}

fn sort_pairs(d: &mut [f64], z: Option<&mut [f64]>) {
    let n = d.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    let sorted: Vec<f64> = order.iter().map(|&i| d[i]).collect();
    d.copy_from_slice(&sorted);
    if let Some(z) = z {
        let mut out = vec![0.0; n * n];
        for (dst, &src) in order.iter().enumerate() {
            out[dst * n..(dst + 1) * n].copy_from_slice(&z[src * n..(src + 1) * n]);
        }
        z.copy_from_slice(&out);
    }
}
