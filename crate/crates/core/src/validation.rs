//! Built-in self-test: cross-engine and closed-form checks that run in a few
//! seconds.

use serde::Serialize;

use crate::analysis::fit_power_law;
use crate::analytic::{hp_dynamics, hp_maxima, parallel_series, power_coefficient, power_root, HpParams};
use crate::collective::{self, CollectiveHamiltonian, PropagatorRegistry};
use crate::dynamics::{ConservationTolerances, DynamicsResult};
use crate::engine::{EngineOptions, EngineRegistry, Model};
use crate::error::Result;
use crate::krylov::KrylovSettings;
use crate::model::{CouplingTable, PairSpec, SystemSpec};
use crate::oracle::DenseOracle;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    /// Measured deviation (or value) against `tolerance`.
    pub value: f64,
    pub tolerance: f64,
}

impl Check {
    fn below(name: impl Into<String>, value: f64, tolerance: f64) -> Self {
        Self { name: name.into(), passed: value <= tolerance, value, tolerance }
    }
}

/// Largest absolute difference in `E_B`, `eta_B` and `S_vN` between two
/// runs on the same times.
pub fn max_deviation(a: &DynamicsResult, b: &DynamicsResult) -> f64 {
    let cols = |r: &DynamicsResult| [r.e_b.clone(), r.eta_b.clone(), r.s_vn.clone()];
    cols(a)
        .iter()
        .zip(cols(b).iter())
        .flat_map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q).abs()))
        .fold(0.0, f64::max)
}

fn grid(t_max: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| t_max * i as f64 / (n - 1) as f64).collect()
}

fn engines_vs_oracle(n: u64, delta_v: f64) -> Result<Vec<Check>> {
    let spec = SystemSpec::homogeneous(n, n, 1.0, delta_v)?;
    let times = grid(10.0, 101);
    let reg = EngineRegistry::builtin();
    let opts = EngineOptions::default();
    let oracle = DenseOracle::new(&CouplingTable::from_spec(&spec)?)?.evaluate(&times);
    let coll = reg.create("collective", &Model::Uniform(spec), &opts)?.evaluate(&times)?;
    let full = reg.create("full", &Model::Uniform(spec), &opts)?.evaluate(&times)?;
    let tag = format!("n={n} dv={delta_v}");
    let cons = full.diagnostics.check(&ConservationTolerances::default(), n as f64, 10.0).is_ok()
        && coll.diagnostics.check(&ConservationTolerances::default(), n as f64, 10.0).is_ok();
    Ok(vec![
        Check::below(format!("collective vs dense oracle, {tag}"), max_deviation(&coll, &oracle), 1e-8),
        Check::below(format!("full sector vs dense oracle, {tag}"), max_deviation(&full, &oracle), 1e-8),
        Check { name: format!("conservation, {tag}"), passed: cons, value: 0.0, tolerance: 0.0 },
    ])
}

fn pair_vs_closed_form() -> Result<Check> {
    let pair = PairSpec { j_pair: 0.7, v_b: 1.0, v_c: 0.4, n_pairs: 1 };
    let times = grid(10.0, 201);
    let exact = parallel_series(&pair, &times);
    let full = EngineRegistry::builtin()
        .create("full", &Model::Table(CouplingTable::from_spec(&pair.as_system())?), &EngineOptions::default())?
        .evaluate(&times)?;
    let dev = exact.e_b.iter().zip(&full.e_b).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    Ok(Check::below("two-qubit sector vs parallel closed form", dev, 1e-9))
}

fn spectral_vs_krylov() -> Result<Check> {
    let spec = SystemSpec::homogeneous(50, 50, 1.0, 0.0)?;
    let h = std::sync::Arc::new(CollectiveHamiltonian::build(&spec)?);
    let reg = PropagatorRegistry::builtin();
    let times = grid(10.0, 101);
    let s = collective::run(&h, reg.create("spectral", h.clone(), &KrylovSettings::default())?.as_ref(), &times)?;
    let k = collective::run(&h, reg.create("krylov", h.clone(), &KrylovSettings::default())?.as_ref(), &times)?;
    Ok(Check::below("spectral vs krylov, n=50", max_deviation(&s, &k), 1e-8))
}

fn hp_short_time() -> Result<Check> {
    let spec = SystemSpec::homogeneous(20, 2000, 1.0, -8.0)?;
    let p = HpParams::from_spec(&spec);
    let (e, _) = hp_maxima(&p)?;
    let times: Vec<f64> = grid(e.time, 101).into_iter().skip(1).collect();
    let coll = EngineRegistry::builtin()
        .create("collective", &Model::Uniform(spec), &EngineOptions::default())?
        .evaluate(&times)?;
    let dev = times
        .iter()
        .zip(&coll.e_b)
        .map(|(&t, &num)| (hp_dynamics(&p, t).0 - num).abs() / num.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    Ok(Check::below("hp vs collective before the first maximum", dev, 0.05))
}

pub fn run_all() -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for n in [2, 3] {
        for dv in [-8.0, 0.0, 0.8] {
            out.extend(engines_vs_oracle(n, dv)?);
        }
    }
    out.push(pair_vs_closed_form()?);
    out.push(spectral_vs_krylov()?);
    out.push(hp_short_time()?);
    let x = power_root();
    out.push(Check::below("power root rounds to 2.33", (((x * 100.0).round() / 100.0) - 2.33).abs(), 1e-12));
    let c = power_coefficient();
    out.push(Check::below("power coefficient truncates to 1.44", ((c * 100.0).trunc() / 100.0 - 1.44).abs(), 1e-12));
    let sq: Vec<(f64, f64)> = (1..=6).map(|i| (i as f64, (i * i) as f64)).collect();
    out.push(Check::below("fit of y = x^2", (fit_power_law(&sq)?.alpha - 2.0).abs(), 1e-12));
    Ok(out)
}
