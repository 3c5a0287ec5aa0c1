//! Parameter sweeps: one maxima record per point, with adaptive time windows.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::maxima::{find_maxima, refine_maxima, MaximaPair};
use crate::analytic::{hp_maxima, HpParams};
use crate::dynamics::Observables;
use crate::engine::{Engine, EngineOptions, EngineRegistry, Model};
use crate::error::{invalid, Error, Result};
use crate::model::{CouplingTable, SystemSpec};
use crate::sector::noise::{perturb_couplings, realization_seed};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    /// Vary `N_C` at fixed base `N_B`.
    ChargerSize,
    /// Vary `N_B = N_C` together; the point value is the per-part size.
    TotalSize,
    /// Vary `(J_C, delta V)` at fixed sizes, `V_B` held.
    JcDvGrid,
    /// Vary the coupling-noise half-width (one realization per point).
    NoiseAmplitude,
}

impl FromStr for Axis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "charger_size" => Ok(Axis::ChargerSize),
            "total_size" => Ok(Axis::TotalSize),
            "jc_dv_grid" => Ok(Axis::JcDvGrid),
            "noise_amplitude" => Ok(Axis::NoiseAmplitude),
            other => Err(invalid("axis", format!("unknown axis `{other}`"))),
        }
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::ChargerSize => "charger_size",
            Axis::TotalSize => "total_size",
            Axis::JcDvGrid => "jc_dv_grid",
            Axis::NoiseAmplitude => "noise_amplitude",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointValue {
    Size(u64),
    Grid { j_c: f64, delta_v: f64 },
    Noise(f64),
}

impl PointValue {
    /// Parses a point for `axis`: an integer size, `jc:dv`, or a half-width.
    pub fn parse(axis: Axis, s: &str) -> Result<Self> {
        let s = s.trim();
        let real = |x: &str| -> Result<f64> {
            x.trim().parse::<f64>().map_err(|_| invalid("points", format!("`{x}` is not a number")))
        };
        match axis {
            Axis::ChargerSize | Axis::TotalSize => s
                .parse::<u64>()
                .map(PointValue::Size)
                .map_err(|_| invalid("points", format!("`{s}` is not a qubit count"))),
            Axis::JcDvGrid => {
                let (a, b) = s.split_once(':').ok_or_else(|| invalid("points", format!("`{s}` is not `jc:dv`")))?;
                Ok(PointValue::Grid { j_c: real(a)?, delta_v: real(b)? })
            }
            Axis::NoiseAmplitude => Ok(PointValue::Noise(real(s)?)),
        }
    }

    fn sort_key(&self) -> (f64, f64) {
        match *self {
            PointValue::Size(n) => (n as f64, 0.0),
            PointValue::Grid { j_c, delta_v } => (j_c, delta_v),
            PointValue::Noise(d) => (d, 0.0),
        }
    }
}

impl fmt::Display for PointValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PointValue::Size(n) => write!(f, "{n}"),
            PointValue::Grid { j_c, delta_v } => write!(f, "{j_c}:{delta_v}"),
            PointValue::Noise(d) => write!(f, "{d}"),
        }
    }
}

/// How long to propagate each point and how finely.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowPolicy {
    pub n_samples: usize,
    /// Fixed initial window; `None` uses [`default_window`].
    pub t_max: Option<f64>,
    /// Largest allowed growth of the window by doubling.
    pub max_extension: f64,
    /// Dense re-evaluation passes around each maximum.
    pub zooms: usize,
}

impl Default for WindowPolicy {
    fn default() -> Self {
        Self { n_samples: 1000, t_max: None, max_extension: 8.0, zooms: 3 }
    }
}

/// Ten HP energy-maximum times when the HP solution oscillates, otherwise
/// `50 / max(|g|, |delta V|, 1e-6)`.
pub fn default_window(spec: &SystemSpec) -> f64 {
    match hp_maxima(&HpParams::from_spec(spec)) {
        Ok((e, _)) => 10.0 * e.time,
        Err(_) => 50.0 / spec.g().abs().max(spec.delta_v().abs()).max(1e-6),
    }
}

/// Maxima of one engine, doubling the window while either maximum sits on
/// its right edge.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointOutcome {
    pub maxima: MaximaPair,
    pub t_window: f64,
}

pub fn maxima_with_window(engine: &dyn Engine, t0: f64, policy: &WindowPolicy) -> Result<PointOutcome> {
    if policy.n_samples < 3 {
        return Err(invalid("n_samples", "need at least 3 samples"));
    }
    let mut t_window = t0;
    let step = t0 / (policy.n_samples - 1) as f64;
    let times: Vec<f64> = (0..policy.n_samples).map(|i| step * i as f64).collect();
    let mut coarse = engine.evaluate_with(&times, Observables::EnergyOnly)?;
    loop {
        let rough = find_maxima(&coarse)?;
        if rough.window_limited() {
            if t_window * 2.0 <= t0 * policy.max_extension * (1.0 + 1e-12) {
                // Only the new half is propagated; the spacing is kept.
                let done = coarse.len() - 1;
                let more: Vec<f64> = (1..=done).map(|k| step * (done + k) as f64).collect();
                coarse.append(engine.evaluate_with(&more, Observables::EnergyOnly)?);
                t_window *= 2.0;
                continue;
            }
            rough.require_interior()?;
        }
        let eval = |ts: &[f64]| engine.evaluate_with(ts, Observables::EnergyOnly);
        let mut maxima = refine_maxima(&coarse, &eval, policy.zooms)?;
        // Fill in the entropy at the two maxima.
        let mut at = [maxima.energy.record.time, maxima.power.record.time];
        let swap = at[0] > at[1];
        if swap {
            at.swap(0, 1);
        }
        let full = engine.evaluate_with(&at, Observables::All)?;
        let (ie, ip) = if swap { (1, 0) } else { (0, 1) };
        for (peak, i) in [(&mut maxima.energy, ie), (&mut maxima.power, ip)] {
            peak.eta_b = full.eta_b[i];
            peak.s_vn = full.s_vn[i];
            peak.s_vn_norm = full.s_vn_norm[i];
        }
        return Ok(PointOutcome { maxima, t_window });
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPlan {
    pub base: SystemSpec,
    pub axis: Axis,
    pub points: Vec<PointValue>,
    pub window: WindowPolicy,
    /// Registered engine name or `auto`.
    pub engine: String,
    pub options: EngineOptions,
    /// Master seed for the noise axis.
    pub seed: u64,
}

impl SweepPlan {
    pub fn new(base: SystemSpec, axis: Axis, points: Vec<PointValue>) -> Self {
        Self {
            base,
            axis,
            points,
            window: WindowPolicy::default(),
            engine: "auto".into(),
            options: EngineOptions::default(),
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.points.is_empty() {
            return Err(invalid("points", "a sweep needs at least one point"));
        }
        for p in &self.points {
            let ok = matches!(
                (self.axis, p),
                (Axis::ChargerSize | Axis::TotalSize, PointValue::Size(_))
                    | (Axis::JcDvGrid, PointValue::Grid { .. })
                    | (Axis::NoiseAmplitude, PointValue::Noise(_))
            );
            if !ok {
                return Err(invalid("points", format!("point `{p}` does not belong to axis {}", self.axis)));
            }
        }
        for w in self.points.windows(2) {
            let (a, b) = (w[0].sort_key(), w[1].sort_key());
            if a.partial_cmp(&b) != Some(std::cmp::Ordering::Less) {
                return Err(invalid(
                    "points",
                    format!("points must be strictly increasing: `{}` then `{}`", w[0], w[1]),
                ));
            }
        }
        Ok(())
    }

    /// The model at one point.
    pub fn model_at(&self, index: usize) -> Result<(Model, SystemSpec)> {
        let mut spec = self.base;
        match self.points[index] {
            PointValue::Size(n) => {
                spec.n_c = n;
                if self.axis == Axis::TotalSize {
                    spec.n_b = n;
                }
                spec.validate()?;
                Ok((Model::Uniform(spec), spec))
            }
            PointValue::Grid { j_c, delta_v } => {
                spec.j_c = j_c;
                spec.v_c = spec.v_b - delta_v;
                spec.validate()?;
                Ok((Model::Uniform(spec), spec))
            }
            PointValue::Noise(dj) => {
                let base = CouplingTable::from_spec(&spec)?;
                let (table, _) = perturb_couplings(&base, dj, realization_seed(self.seed, 0, index as u64))?;
                Ok((Model::Table(table), spec))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub index: usize,
    pub point: PointValue,
    /// Engine failures are kept per point.
    pub outcome: std::result::Result<PointOutcome, String>,
}

fn run_point(plan: &SweepPlan, registry: &EngineRegistry, index: usize) -> Result<PointOutcome> {
    let (model, spec) = plan.model_at(index)?;
    let engine = registry.create(&plan.engine, &model, &plan.options)?;
    let t0 = plan.window.t_max.unwrap_or_else(|| default_window(&spec));
    maxima_with_window(engine.as_ref(), t0, &plan.window)
}

/// Runs every point on `jobs` worker threads; rows come back in point order.
pub fn run_sweep(plan: &SweepPlan, jobs: usize) -> Result<Vec<SweepRow>> {
    plan.validate()?;
    let registry = EngineRegistry::builtin();
    let work = || -> Vec<SweepRow> {
        (0..plan.points.len())
            .into_par_iter()
            .with_max_len(1)
            .map(|i| SweepRow {
                index: i,
                point: plan.points[i],
                outcome: run_point(plan, &registry, i).map_err(|e| e.to_string()),
            })
            .collect()
    };
    with_jobs(jobs, work)
}

/// Runs `f` inside a dedicated pool of `jobs` threads.
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool =
        rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().map_err(|e| invalid("jobs", e.to_string()))?;
    Ok(pool.install(f))
}

/// `count` sizes geometrically spaced over `[lo, hi]`, rounded and deduplicated.
pub fn log_sizes(lo: u64, hi: u64, count: usize) -> Vec<u64> {
    if count <= 1 || lo == hi {
        return vec![lo];
    }
    let ratio = (hi as f64 / lo as f64).ln();
    let mut out: Vec<u64> =
        (0..count).map(|i| (lo as f64 * (ratio * i as f64 / (count - 1) as f64).exp()).round() as u64).collect();
    out.dedup();
    out
}
