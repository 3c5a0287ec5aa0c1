//! Sampled time series produced by every engine, plus the conserved-quantity
//! bookkeeping collected along the way.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which observables to compute at each sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observables {
    All,
    /// Skip the entanglement entropy (reported as NaN).
    EnergyOnly,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// `max |<psi|psi> - 1|`.
    pub max_norm_error: f64,
    /// `<H>` of the initial state.
    pub energy_reference: f64,
    /// `max |<H>(t) - <H>(0)|`.
    pub max_energy_drift: f64,
    /// `max |n_B(t) + n_C(t) - n_exc|` in excitation units.
    pub max_excitation_error: f64,
    /// Largest violation of `0 <= S_vN <= ln(K + 1)` (zero when respected).
    pub entropy_bound_violation: f64,
}

/// Pass/fail thresholds for [`Diagnostics::check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConservationTolerances {
    pub norm: f64,
    /// Relative to `max(|<H>(0)|, 1)`.
    pub energy: f64,
    /// Relative to `max(n_exc, 1)`.
    pub excitation: f64,
    pub entropy: f64,
}

impl Default for ConservationTolerances {
    fn default() -> Self {
        Self { norm: 1e-10, energy: 1e-9, excitation: 1e-9, entropy: 1e-10 }
    }
}

impl Diagnostics {
    pub fn check(&self, tol: &ConservationTolerances, n_exc: f64, t_span: f64) -> Result<()> {
        let per_time = t_span.max(1.0);
        let fail = |what: &str, got: f64, allowed: f64| {
            Err(Error::InvalidParameter {
                name: "conservation",
                reason: format!("{what} violated: {got:e} > {allowed:e}"),
            })
        };
        if self.max_norm_error > tol.norm * per_time {
            return fail("norm", self.max_norm_error, tol.norm * per_time);
        }
        let e_allowed = tol.energy * self.energy_reference.abs().max(1.0) * per_time;
        if self.max_energy_drift > e_allowed {
            return fail("energy", self.max_energy_drift, e_allowed);
        }
        let x_allowed = tol.excitation * n_exc.max(1.0);
        if self.max_excitation_error > x_allowed {
            return fail("excitation number", self.max_excitation_error, x_allowed);
        }
        if self.entropy_bound_violation > tol.entropy {
            return fail("entropy bounds", self.entropy_bound_violation, tol.entropy);
        }
        Ok(())
    }
}

/// Columns of the dynamics table, one entry per sample time.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct DynamicsResult {
    pub t: Vec<f64>,
    pub e_b: Vec<f64>,
    pub e_c: Vec<f64>,
    pub p_b: Vec<f64>,
    pub eta_b: Vec<f64>,
    pub s_vn: Vec<f64>,
    pub s_vn_norm: Vec<f64>,
    pub e_total: Vec<f64>,
    pub diagnostics: Diagnostics,
}

impl DynamicsResult {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Appends the samples of a later run of the same model.
    pub fn append(&mut self, later: DynamicsResult) {
        self.t.extend(later.t);
        self.e_b.extend(later.e_b);
        self.e_c.extend(later.e_c);
        self.p_b.extend(later.p_b);
        self.eta_b.extend(later.eta_b);
        self.s_vn.extend(later.s_vn);
        self.s_vn_norm.extend(later.s_vn_norm);
        self.e_total.extend(later.e_total);
        let (d, l) = (&mut self.diagnostics, later.diagnostics);
        d.max_norm_error = d.max_norm_error.max(l.max_norm_error);
        d.max_energy_drift = d.max_energy_drift.max(l.max_energy_drift);
        d.max_excitation_error = d.max_excitation_error.max(l.max_excitation_error);
        d.entropy_bound_violation = d.entropy_bound_violation.max(l.entropy_bound_violation);
    }
}

/// Raw per-sample measurements handed to a [`Recorder`].
#[derive(Debug, Clone, Copy)]
pub struct Measurement {
    pub norm_sqr: f64,
    pub e_b: f64,
    pub e_c: f64,
    /// Battery excitation count `sum_{m in B} <n_m>`.
    pub n_b: f64,
    /// Charger excitation count.
    pub n_c: f64,
    pub energy: f64,
    pub s_vn: f64,
}

/// Accumulates measurements into a [`DynamicsResult`].
#[derive(Debug)]
pub struct Recorder {
    e_b0: f64,
    energy0: f64,
    n_exc: f64,
    k_max: f64,
    s_max: f64,
    s_bound: f64,
    out: DynamicsResult,
}

impl Recorder {
    /// `initial` is the measurement on the `t = 0` state; `k_max` is
    /// `min(N_B, N_C)`.
    pub fn new(initial: &Measurement, n_exc: f64, k_max: f64, capacity: usize) -> Self {
        let mut out = DynamicsResult::default();
        for col in [
            &mut out.t,
            &mut out.e_b,
            &mut out.e_c,
            &mut out.p_b,
            &mut out.eta_b,
            &mut out.s_vn,
            &mut out.s_vn_norm,
            &mut out.e_total,
        ] {
            col.reserve(capacity);
        }
        out.diagnostics.energy_reference = initial.energy;
        let s_max = (k_max + 1.0).ln();
        Self { e_b0: initial.e_b, energy0: initial.energy, n_exc, k_max, s_max, s_bound: s_max, out }
    }

    /// Replaces the `ln(K + 1)` entropy ceiling used by the diagnostics; the
    /// normalised column keeps `ln(K + 1)`.
    pub fn with_entropy_bound(mut self, bound: f64) -> Self {
        self.s_bound = bound;
        self
    }

    pub fn push(&mut self, t: f64, m: &Measurement) {
        let o = &mut self.out;
        o.t.push(t);
        o.e_b.push(m.e_b);
        o.e_c.push(m.e_c);
        o.p_b.push(if t == 0.0 { 0.0 } else { (m.e_b - self.e_b0) / t });
        o.eta_b.push(m.n_b / self.k_max);
        o.s_vn.push(m.s_vn);
        o.s_vn_norm.push(if self.s_max > 0.0 { m.s_vn / self.s_max } else { 0.0 });
        o.e_total.push(m.energy);
        let d = &mut o.diagnostics;
        d.max_norm_error = d.max_norm_error.max((m.norm_sqr - 1.0).abs());
        d.max_energy_drift = d.max_energy_drift.max((m.energy - self.energy0).abs());
        d.max_excitation_error = d.max_excitation_error.max((m.n_b + m.n_c - self.n_exc).abs());
        if !m.s_vn.is_nan() {
            let over = (m.s_vn - self.s_bound).max(0.0);
            let under = (-m.s_vn).max(0.0);
            d.entropy_bound_violation = d.entropy_bound_violation.max(over).max(under);
        }
    }

    pub fn finish(self) -> DynamicsResult {
        self.out
    }
}

/// `-sum p ln p` with `0 ln 0 = 0`; tiny negative round-off is clamped.
pub fn entropy<I: IntoIterator<Item = f64>>(probs: I) -> f64 {
    probs.into_iter().filter(|&p| p > 0.0).map(|p| -p * p.ln()).sum::<f64>().max(0.0)
}
