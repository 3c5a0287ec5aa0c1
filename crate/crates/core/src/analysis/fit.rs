//! Power-law fits `y = exp(c) x^alpha` by least squares on `(ln x, ln y)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub alpha: f64,
    pub alpha_stderr: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// `[x_min, x_max]` of the points used.
    pub range: [f64; 2],
}

pub fn fit_power_law(points: &[(f64, f64)]) -> Result<FitResult> {
    if points.len() < 3 {
        return Err(Error::Fit(format!("need at least 3 points, got {}", points.len())));
    }
    if let Some(&(x, y)) = points.iter().find(|(x, y)| !(*x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(Error::Fit(format!("non-positive or non-finite point ({x}, {y})")));
    }
    let n = points.len() as f64;
    let lx: Vec<f64> = points.iter().map(|p| p.0.ln()).collect();
    let ly: Vec<f64> = points.iter().map(|p| p.1.ln()).collect();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= 1e-24 * n {
        return Err(Error::Fit("x values span no range".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ly.iter().map(|y| (y - my).powi(2)).sum();
    let alpha = sxy / sxx;
    let intercept = my - alpha * mx;
    let ssr: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - alpha * x).powi(2)).sum();
    let alpha_stderr = (ssr / (n - 2.0) / sxx).sqrt();
    let r_squared = if syy > 0.0 { (1.0 - ssr / syy).clamp(0.0, 1.0) } else { 1.0 };
    let (lo, hi) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    Ok(FitResult { alpha, alpha_stderr, intercept, r_squared, range: [lo, hi] })
}

/// Fits only the points with `lo <= x <= hi`.
pub fn fit_power_law_in(points: &[(f64, f64)], lo: f64, hi: f64) -> Result<FitResult> {
    let subset: Vec<(f64, f64)> = points.iter().copied().filter(|p| p.0 >= lo && p.0 <= hi).collect();
    fit_power_law(&subset)
}

/// Segment boundaries as fractions of `N_B` for the fixed-battery sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentBounds {
    /// Segment one: `N_C <= small * N_B`.
    pub small: f64,
    /// Segment two: `near * N_B <= N_C <= N_B`.
    pub near: f64,
}

impl Default for SegmentBounds {
    fn default() -> Self {
        Self { small: 0.2, near: 0.8 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoSegmentFit {
    pub small: FitResult,
    pub near: FitResult,
}

/// Separate fits below and approaching resonance for points `(N_C, y)` at
/// fixed `n_b`.
pub fn fit_two_segment(points: &[(f64, f64)], n_b: f64, bounds: SegmentBounds) -> Result<TwoSegmentFit> {
    Ok(TwoSegmentFit {
        small: fit_power_law_in(points, 0.0, bounds.small * n_b)?,
        near: fit_power_law_in(points, bounds.near * n_b, n_b)?,
    })
}
