//! Coupling-noise ensembles over `N_B = N_C` sizes.
//!
//! Every `(delta_j, size, realization)` run is independent and seeded by
//! [`realization_seed`]; the same realization index at different sizes uses
//! the same seed, so per-realization exponents can be fitted across sizes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{fit_power_law, FitResult};
use super::sweep::{default_window, maxima_with_window, with_jobs, WindowPolicy};
use crate::engine::{EngineOptions, EngineRegistry, Model};
use crate::error::{invalid, Result};
use crate::model::{CouplingTable, SystemSpec};
use crate::sector::noise::{perturb_couplings, realization_seed};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStat {
    pub mean: f64,
    /// Standard error of the mean (sample standard deviation / sqrt n).
    pub sem: f64,
    pub n_realizations: usize,
}

impl EnsembleStat {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: f64::NAN, sem: f64::NAN, n_realizations: 0 };
        }
        // Offsetting by the first sample keeps identical samples exact.
        let mean = xs[0] + xs.iter().map(|x| x - xs[0]).sum::<f64>() / n as f64;
        let sem = if n < 2 {
            0.0
        } else {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        Self { mean, sem, n_realizations: n }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoisePlan {
    /// Template for potentials and couplings; sizes come from `sizes`.
    pub base: SystemSpec,
    /// Per-part sizes, `N_B = N_C`.
    pub sizes: Vec<u64>,
    pub delta_j: Vec<f64>,
    pub realizations: usize,
    pub seed: u64,
    pub window: WindowPolicy,
    pub engine: String,
    pub options: EngineOptions,
}

impl NoisePlan {
    pub fn new(base: SystemSpec, sizes: Vec<u64>, delta_j: Vec<f64>, realizations: usize, seed: u64) -> Self {
        Self {
            base,
            sizes,
            delta_j,
            realizations,
            seed,
            window: WindowPolicy::default(),
            engine: "full".into(),
            options: EngineOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.realizations < 2 {
            return Err(invalid("realizations", "need at least 2"));
        }
        if self.sizes.is_empty() || self.delta_j.is_empty() {
            return Err(invalid("sizes", "need at least one size and one delta_j"));
        }
        if self.delta_j.iter().any(|d| !(d.is_finite() && *d >= 0.0)) {
            return Err(invalid("delta_j", "entries must be finite and non-negative"));
        }
        Ok(())
    }
}

/// One run of the ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RealizationRecord {
    pub delta_j: f64,
    pub size: u64,
    pub realization: usize,
    pub seed: u64,
    pub draws: u64,
    pub e_max: f64,
    pub p_max: f64,
    pub t_e: f64,
    pub t_p: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleCell {
    pub delta_j: f64,
    pub size: u64,
    pub energy: EnsembleStat,
    pub power: EnsembleStat,
}

/// Exponents for one noise amplitude.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentSummary {
    pub delta_j: f64,
    /// Fit of the ensemble means against size.
    pub energy_fit: Option<FitResult>,
    pub power_fit: Option<FitResult>,
    /// Spread of the per-realization exponents.
    pub alpha_energy: EnsembleStat,
    pub alpha_power: EnsembleStat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub runs: Vec<RealizationRecord>,
    pub cells: Vec<EnsembleCell>,
    pub exponents: Vec<ExponentSummary>,
}

fn run_one(plan: &NoisePlan, registry: &EngineRegistry, d: usize, size: u64, r: usize) -> RealizationRecord {
    let delta_j = plan.delta_j[d];
    let seed = realization_seed(plan.seed, r as u64, d as u64);
    let mut rec = RealizationRecord {
        delta_j,
        size,
        realization: r,
        seed,
        draws: 0,
        e_max: f64::NAN,
        p_max: f64::NAN,
        t_e: f64::NAN,
        t_p: f64::NAN,
        error: None,
    };
    let outcome = (|| -> Result<()> {
        let spec = SystemSpec { n_b: size, n_c: size, ..plan.base };
        spec.validate()?;
        let (table, noise) = perturb_couplings(&CouplingTable::from_spec(&spec)?, delta_j, seed)?;
        rec.draws = noise.draws;
        let engine = registry.create(&plan.engine, &Model::Table(table), &plan.options)?;
        let t0 = plan.window.t_max.unwrap_or_else(|| default_window(&spec));
        let out = maxima_with_window(engine.as_ref(), t0, &plan.window)?;
        rec.e_max = out.maxima.energy.record.value;
        rec.t_e = out.maxima.energy.record.time;
        rec.p_max = out.maxima.power.record.value;
        rec.t_p = out.maxima.power.record.time;
        Ok(())
    })();
    if let Err(e) = outcome {
        rec.error = Some(e.to_string());
    }
    rec
}

pub fn noise_ensemble(plan: &NoisePlan, jobs: usize) -> Result<NoiseReport> {
    plan.validate()?;
    let registry = EngineRegistry::builtin();
    let mut tasks = Vec::new();
    for d in 0..plan.delta_j.len() {
        for &size in &plan.sizes {
            for r in 0..plan.realizations {
                tasks.push((d, size, r));
            }
        }
    }
    let runs: Vec<RealizationRecord> = with_jobs(jobs, || {
        tasks.par_iter().with_max_len(1).map(|&(d, size, r)| run_one(plan, &registry, d, size, r)).collect()
    })?;
    Ok(summarize(plan, runs))
}

fn summarize(plan: &NoisePlan, runs: Vec<RealizationRecord>) -> NoiseReport {
    let ok = |r: &&RealizationRecord| r.error.is_none();
    let mut cells = Vec::new();
    let mut exponents = Vec::new();
    for &dj in &plan.delta_j {
        let mut mean_e = Vec::new();
        let mut mean_p = Vec::new();
        for &size in &plan.sizes {
            let sel: Vec<&RealizationRecord> =
                runs.iter().filter(|r| r.delta_j == dj && r.size == size).filter(ok).collect();
            let energy = EnsembleStat::from_samples(&sel.iter().map(|r| r.e_max).collect::<Vec<_>>());
            let power = EnsembleStat::from_samples(&sel.iter().map(|r| r.p_max).collect::<Vec<_>>());
            mean_e.push((size as f64, energy.mean));
            mean_p.push((size as f64, power.mean));
            cells.push(EnsembleCell { delta_j: dj, size, energy, power });
        }
        let mut alpha_e = Vec::new();
        let mut alpha_p = Vec::new();
        for r in 0..plan.realizations {
            let line: Vec<&RealizationRecord> =
                runs.iter().filter(|x| x.delta_j == dj && x.realization == r).filter(ok).collect();
            if line.len() != plan.sizes.len() {
                continue;
            }
            let pts = |f: fn(&RealizationRecord) -> f64| line.iter().map(|x| (x.size as f64, f(x))).collect::<Vec<_>>();
            if let Ok(fit) = fit_power_law(&pts(|x| x.e_max)) {
                alpha_e.push(fit.alpha);
            }
            if let Ok(fit) = fit_power_law(&pts(|x| x.p_max)) {
                alpha_p.push(fit.alpha);
            }
        }
        exponents.push(ExponentSummary {
            delta_j: dj,
            energy_fit: fit_power_law(&mean_e).ok(),
            power_fit: fit_power_law(&mean_p).ok(),
            alpha_energy: EnsembleStat::from_samples(&alpha_e),
            alpha_power: EnsembleStat::from_samples(&alpha_p),
        });
    }
    NoiseReport { runs, cells, exponents }
}
