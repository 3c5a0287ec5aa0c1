//! Time maxima of `E_B` and `P_B`.
//!
//! The coarse argmax of a sampled series is refined by re-evaluating the
//! dynamics on a 10x denser grid spanning the two neighbouring samples,
//! zooming repeatedly, and finishing with a three-point parabolic vertex.

use serde::{Deserialize, Serialize};

use crate::analytic::{MaxKind, MaxRecord};
use crate::dynamics::DynamicsResult;
use crate::error::{Error, Result};

/// Relative tolerance under which two sample values count as tied.
pub const TIE_RTOL: f64 = 1e-9;

/// Sub-samples per coarse interval in each refinement pass.
pub const ZOOM_FACTOR: usize = 10;

/// Column of a dynamics table that can be maximized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Column {
    Energy,
    Power,
}

impl Column {
    pub fn of(self, r: &DynamicsResult) -> &[f64] {
        match self {
            Column::Energy => &r.e_b,
            Column::Power => &r.p_b,
        }
    }

    fn kind(self) -> MaxKind {
        match self {
            Column::Energy => MaxKind::Energy,
            Column::Power => MaxKind::Power,
        }
    }
}

/// Earliest index whose value is within [`TIE_RTOL`] of the maximum.
pub fn coarse_argmax(values: &[f64]) -> Option<usize> {
    let best = values.iter().copied().filter(|v| !v.is_nan()).fold(f64::NEG_INFINITY, f64::max);
    if !best.is_finite() {
        return None;
    }
    let cut = best - TIE_RTOL * best.abs();
    values.iter().position(|&v| v >= cut)
}

/// A located maximum with the other observables at that instant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub record: MaxRecord,
    pub eta_b: f64,
    pub s_vn: f64,
    pub s_vn_norm: f64,
    /// The coarse maximum sat on the last sample.
    pub window_limited: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaximaPair {
    pub energy: Peak,
    pub power: Peak,
}

impl MaximaPair {
    pub fn window_limited(&self) -> bool {
        self.energy.window_limited || self.power.window_limited
    }

    /// Fails with [`Error::WindowLimited`] when either maximum is on the edge.
    pub fn require_interior(self) -> Result<Self> {
        for p in [&self.energy, &self.power] {
            if p.window_limited {
                return Err(Error::WindowLimited { time: p.record.time });
            }
        }
        Ok(self)
    }
}

fn peak_at(r: &DynamicsResult, i: usize, col: Column, window_limited: bool) -> Peak {
    Peak {
        record: MaxRecord { value: col.of(r)[i], time: r.t[i], kind: col.kind() },
        eta_b: r.eta_b[i],
        s_vn: r.s_vn[i],
        s_vn_norm: r.s_vn_norm[i],
        window_limited,
    }
}

fn locate(r: &DynamicsResult, col: Column) -> Result<(usize, bool)> {
    if r.len() < 3 {
        return Err(Error::InvalidParameter { name: "samples", reason: format!("need at least 3, got {}", r.len()) });
    }
    let i = coarse_argmax(col.of(r))
        .ok_or_else(|| Error::InvalidParameter { name: "samples", reason: "no finite values".into() })?;
    Ok((i, i + 1 == r.len()))
}

/// Vertex offset of the parabola through three equally spaced samples,
/// clamped to one spacing.
fn parabola_offset(y0: f64, y1: f64, y2: f64, h: f64) -> f64 {
    let curv = y0 - 2.0 * y1 + y2;
    if curv >= 0.0 {
        return 0.0;
    }
    (0.5 * h * (y0 - y2) / curv).clamp(-h, h)
}

/// Maxima from the samples alone: coarse argmax plus a parabolic estimate
/// of the peak height (never below the best sample). Window-limited maxima
/// are flagged, not rejected.
pub fn find_maxima(r: &DynamicsResult) -> Result<MaximaPair> {
    let one = |col: Column| -> Result<Peak> {
        let (i, edge) = locate(r, col)?;
        let mut peak = peak_at(r, i, col, edge);
        if i > 0 && !edge {
            let y = col.of(r);
            let h = 0.5 * (r.t[i + 1] - r.t[i - 1]);
            let off = parabola_offset(y[i - 1], y[i], y[i + 1], h);
            let b = (y[i + 1] - y[i - 1]) / (2.0 * h);
            let c = (y[i - 1] - 2.0 * y[i] + y[i + 1]) / (2.0 * h * h);
            let vertex = y[i] + b * off + c * off * off;
            if vertex > peak.record.value {
                peak.record.value = vertex;
                peak.record.time = r.t[i] + off;
            }
        }
        Ok(peak)
    };
    Ok(MaximaPair { energy: one(Column::Energy)?, power: one(Column::Power)? })
}

/// Maxima refined by re-evaluating the dynamics through `eval` (which maps
/// an ascending time list to a table). `zooms` dense passes are made around
/// each coarse maximum before the parabolic step.
pub fn refine_maxima(
    coarse: &DynamicsResult,
    eval: &dyn Fn(&[f64]) -> Result<DynamicsResult>,
    zooms: usize,
) -> Result<MaximaPair> {
    let one = |col: Column| -> Result<Peak> {
        let (i, edge) = locate(coarse, col)?;
        let mut best = peak_at(coarse, i, col, edge);
        if i == 0 || edge {
            return Ok(best);
        }
        let (mut lo, mut hi) = (coarse.t[i - 1], coarse.t[i + 1]);
        for _ in 0..zooms {
            let n = 2 * ZOOM_FACTOR + 1;
            let times: Vec<f64> = (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect();
            let fine = eval(&times)?;
            // Within one peak the plain argmax is wanted, not the tie rule.
            let j = col
                .of(&fine)
                .iter()
                .enumerate()
                .fold(ZOOM_FACTOR, |b, (k, &v)| if v > col.of(&fine)[b] { k } else { b });
            if col.of(&fine)[j] > best.record.value {
                best = peak_at(&fine, j, col, false);
            }
            let step = (hi - lo) / (n - 1) as f64;
            let centre = fine.t[j];
            lo = (centre - step).max(coarse.t[i - 1]);
            hi = (centre + step).min(coarse.t[i + 1]);
            if hi - lo <= 4.0 * f64::EPSILON * centre.abs() {
                break;
            }
        }
        // Parabola through the final bracket.
        let mid = 0.5 * (lo + hi);
        let h = 0.5 * (hi - lo);
        if h > 0.0 {
            let three = eval(&[lo, mid, hi])?;
            let y = col.of(&three);
            let off = parabola_offset(y[0], y[1], y[2], h);
            if off != 0.0 {
                let vertex = eval(&[mid + off])?;
                if col.of(&vertex)[0] > best.record.value {
                    best = peak_at(&vertex, 0, col, false);
                }
            }
            if y[1] > best.record.value {
                best = peak_at(&three, 1, col, false);
            }
        }
        Ok(best)
    };
    Ok(MaximaPair { energy: one(Column::Energy)?, power: one(Column::Power)? })
}
