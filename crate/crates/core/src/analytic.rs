//! Closed-form references: the parallel battery (independent pairs), the
//! antiferromagnetic Holstein–Primakoff (HP) quadratic model, and the large-N
//! scaling laws that follow from it.
//!
//! Both the pair and the HP energies have the shape
//! `E(t) = 2 a (1 - cos(s t)) / s^2`, whose average power `E/t` peaks where
//! `tan(x/2) = x`, `x = s t`. That root is computed once by bisection.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::dynamics::{entropy, Diagnostics, DynamicsResult};
use crate::error::{Error, Result};
use crate::model::{PairSpec, SystemSpec};

/// Relative width of the critical band around `omega^2 = 4 g^2`.
pub const CRITICAL_RTOL: f64 = 1e-12;

/// Ratio used for the "much greater than" regime checks of [`hp_scaling`].
pub const ASYMPTOTIC_RATIO: f64 = 10.0;

/// Root of `tan(x/2) = x` between 2 and pi (about 2.3311).
pub fn power_root() -> f64 {
    static ROOT: OnceLock<f64> = OnceLock::new();
    *ROOT.get_or_init(|| {
        // sin(x/2) - x cos(x/2) is negative at 2 and positive at pi.
        let f = |x: f64| (x / 2.0).sin() - x * (x / 2.0).cos();
        let (mut lo, mut hi) = (2.0f64, std::f64::consts::PI);
        loop {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break mid;
            }
            if f(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
    })
}

/// `2 (1 - cos x*) / x*` (about 1.4489): peak of `(1 - cos x) / x` times two.
pub fn power_coefficient() -> f64 {
    let x = power_root();
    4.0 * (x / 2.0).sin().powi(2) / x
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaxKind {
    Energy,
    Power,
}

/// A maximum over time and the earliest time it is reached.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MaxRecord {
    pub value: f64,
    pub time: f64,
    pub kind: MaxKind,
}

/// `(E_B, P_B, S_vN)` of `n_pairs` independent pairs at time `t`.
pub fn parallel_dynamics(pair: &PairSpec, t: f64) -> (f64, f64, f64) {
    let (b, a) = pair_populations(pair, t);
    let n = pair.n_pairs as f64;
    let e = n * pair.v_b * b;
    let p = if t == 0.0 { 0.0 } else { e / t };
    (e, p, n * entropy([a, b]))
}

/// `(B, A)`: probability that a pair has swapped its excitation, and its
/// complement `cos^2(Ot/2) + (dV/O)^2 sin^2(Ot/2)`.
pub fn pair_populations(pair: &PairSpec, t: f64) -> (f64, f64) {
    let omega = pair.omega();
    if omega == 0.0 {
        return (0.0, 1.0);
    }
    let s2 = (omega * t / 2.0).sin().powi(2);
    let b = 4.0 * pair.j_pair * pair.j_pair / (omega * omega) * s2;
    let a = 1.0 - s2 + (pair.delta_v() / omega).powi(2) * s2;
    (b, a)
}

pub fn parallel_maxima(pair: &PairSpec) -> Result<(MaxRecord, MaxRecord)> {
    if pair.j_pair == 0.0 && pair.delta_v() == 0.0 {
        return Err(Error::DegeneratePair);
    }
    let omega = pair.omega();
    let scale = pair.n_pairs as f64 * pair.v_b * pair.j_pair * pair.j_pair;
    let energy =
        MaxRecord { value: 4.0 * scale / (omega * omega), time: std::f64::consts::PI / omega, kind: MaxKind::Energy };
    let power =
        MaxRecord { value: power_coefficient() * scale / omega, time: power_root() / omega, kind: MaxKind::Power };
    Ok((energy, power))
}

/// Sampled parallel-battery series in the dynamics table layout. `eta_B`
/// is the swapped fraction; entropy is normalized by `N_B ln 2`.
pub fn parallel_series(pair: &PairSpec, times: &[f64]) -> DynamicsResult {
    let n = pair.n_pairs as f64;
    let s_max = n * 2f64.ln();
    let mut out = DynamicsResult::default();
    for &t in times {
        let (e, p, s) = parallel_dynamics(pair, t);
        let (b, _) = pair_populations(pair, t);
        out.t.push(t);
        out.e_b.push(e);
        out.e_c.push(n * pair.v_c * (1.0 - b));
        out.p_b.push(p);
        out.eta_b.push(b);
        out.s_vn.push(s);
        out.s_vn_norm.push(s / s_max);
        out.e_total.push(n * pair.v_c);
    }
    out.diagnostics = Diagnostics { energy_reference: n * pair.v_c, ..Diagnostics::default() };
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `omega^2 > 4 g^2`: bounded oscillation.
    Oscillatory,
    Critical,
    /// `omega^2 < 4 g^2`: exponential growth.
    Hyperbolic,
}

/// Parameters of `H = omega a^dag a + g (a^dag b^dag + a b) + V_C N_C`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HpParams {
    pub omega: f64,
    pub g: f64,
    pub v_b: f64,
    pub v_c_times_nc: f64,
    pub regime: Regime,
}

impl HpParams {
    pub fn new(omega: f64, g: f64, v_b: f64, v_c_times_nc: f64) -> Self {
        let w2 = omega * omega;
        let g2 = 4.0 * g * g;
        let gap = w2 - g2;
        let regime = if gap.abs() <= CRITICAL_RTOL * w2.max(g2) {
            Regime::Critical
        } else if gap > 0.0 {
            Regime::Oscillatory
        } else {
            Regime::Hyperbolic
        };
        Self { omega, g, v_b, v_c_times_nc, regime }
    }

    pub fn from_spec(spec: &SystemSpec) -> Self {
        Self::new(spec.omega(), spec.g(), spec.v_b, spec.v_c * spec.n_c as f64)
    }

    /// `omega^2 - 4 g^2`.
    pub fn gap(&self) -> f64 {
        self.omega * self.omega - 4.0 * self.g * self.g
    }
}

/// `(E_B, P_B)` of the HP model at time `t`; the charger offset `V_C N_C`
/// is not included in `E_B`.
pub fn hp_dynamics(p: &HpParams, t: f64) -> (f64, f64) {
    let gv = p.g * p.g * p.v_b;
    let e = match p.regime {
        Regime::Critical => gv * t * t,
        Regime::Oscillatory => {
            let gap = p.gap();
            4.0 * gv * (gap.sqrt() * t / 2.0).sin().powi(2) / gap
        }
        Regime::Hyperbolic => {
            let gap = -p.gap();
            4.0 * gv * (gap.sqrt() * t / 2.0).sinh().powi(2) / gap
        }
    };
    (e, if t == 0.0 { 0.0 } else { e / t })
}

pub fn hp_maxima(p: &HpParams) -> Result<(MaxRecord, MaxRecord)> {
    if p.regime != Regime::Oscillatory {
        return Err(Error::NotOscillatory("hp_maxima"));
    }
    let gap = p.gap();
    let s = gap.sqrt();
    let gv = p.g * p.g * p.v_b;
    let energy = MaxRecord { value: 4.0 * gv / gap, time: std::f64::consts::PI / s, kind: MaxKind::Energy };
    let power = MaxRecord { value: power_coefficient() * gv / s, time: power_root() / s, kind: MaxKind::Power };
    Ok((energy, power))
}

/// HP series in the dynamics table layout. `eta_B = E_B / (V_B K)`; the
/// model has no entropy, so `S_vN` columns are NaN.
pub fn hp_series(p: &HpParams, k_max: u64, times: &[f64]) -> DynamicsResult {
    let mut out = DynamicsResult::default();
    for &t in times {
        let (e, pw) = hp_dynamics(p, t);
        out.t.push(t);
        out.e_b.push(e);
        out.e_c.push(p.v_c_times_nc - e);
        out.p_b.push(pw);
        out.eta_b.push(e / (p.v_b * k_max as f64));
        out.s_vn.push(f64::NAN);
        out.s_vn_norm.push(f64::NAN);
        out.e_total.push(p.v_c_times_nc);
    }
    out.diagnostics.energy_reference = p.v_c_times_nc;
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetBranch {
    /// `4 J N_B >> delta V > 0`.
    Positive,
    /// `4 J N_B << -delta V`.
    Negative,
}

/// Leading large-`N_B` behaviour of the HP maxima.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ScalingPrediction {
    Asymptotic { branch: OffsetBranch, e_exp: f64, p_exp: f64, t_exp: f64, e_max: f64, p_max: f64, t_e: f64, t_p: f64 },
    NoPrediction { reason: String },
}

/// Asymptotic exponents and prefactors for equal parts with equal couplings.
pub fn hp_scaling(spec: &SystemSpec) -> ScalingPrediction {
    let none = |reason: &str| ScalingPrediction::NoPrediction { reason: reason.to_string() };
    if spec.n_b != spec.n_c {
        return none("requires N_B = N_C");
    }
    if !(spec.j_b == spec.j_c && spec.j_c == spec.j_bc) || spec.j_bc <= 0.0 {
        return none("requires J_B = J_C = J_BC > 0");
    }
    let j = spec.j_bc;
    let n = spec.n_b as f64;
    let dv = spec.delta_v();
    let v = spec.v_b;
    let jn = j * n;
    let pi = std::f64::consts::PI;
    let (c, x) = (power_coefficient(), power_root());
    if dv > 0.0 && 4.0 * jn >= ASYMPTOTIC_RATIO * dv {
        let s = (4.0 * jn * dv).sqrt();
        ScalingPrediction::Asymptotic {
            branch: OffsetBranch::Positive,
            e_exp: 1.0,
            p_exp: 1.5,
            t_exp: -0.5,
            e_max: jn * v / dv,
            p_max: 0.5 * c * jn.powf(1.5) * v / dv.sqrt(),
            t_e: pi / s,
            t_p: x / s,
        }
    } else if dv < 0.0 && -dv >= ASYMPTOTIC_RATIO * 4.0 * jn {
        let a = dv.abs();
        ScalingPrediction::Asymptotic {
            branch: OffsetBranch::Negative,
            e_exp: 2.0,
            p_exp: 2.0,
            t_exp: 0.0,
            e_max: 4.0 * jn * jn * v / (a * a),
            p_max: c * jn * jn * v / a,
            t_e: pi / a,
            t_p: x / a,
        }
    } else {
        none("delta V is outside both asymptotic regimes")
    }
}
