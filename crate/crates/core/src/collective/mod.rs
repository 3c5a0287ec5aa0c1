//! Uniform-coupling model in the two-large-spin sector.
//!
//! With uniform couplings the battery and charger each act as a single large
//! spin. Starting from `|S_B^z = -N_B/2, S_C^z = +N_C/2>` and conserving the
//! total `S^z`, the reachable states are
//! `|k> = |S_B^z = -N_B/2 + k, S_C^z = N_C/2 - k>` for `k = 0..=K`,
//! `K = min(N_B, N_C)`: `k` excitations moved from the charger into the
//! battery. Ladder algebra gives the tridiagonal matrix
//!
//! ```text
//! <k|H|k>   = V_B k + V_C (N_C - k) + J_B k (N_B - k) + J_C k (N_C - k)
//! <k+1|H|k> = J_BC (k + 1) sqrt((N_B - k)(N_C - k))
//! ```
//!
//! Each `|k>` is a product of Dicke states, so it is also the Schmidt basis of
//! the battery/charger cut and the entropy is `-sum |c_k|^2 ln |c_k|^2`.

mod propagate;

use std::sync::Arc;

use num_complex::Complex64 as C64;

use crate::dynamics::{entropy, DynamicsResult, Measurement, Recorder};
use crate::error::{Error, Result};
use crate::krylov::LinearOperator;
use crate::model::{SystemSpec, TimeGrid};
use crate::tridiag::{self, SpectralDecomposition};

pub use propagate::{KrylovPropagator, Method, Propagator, PropagatorRegistry, SpectralPropagator, SPECTRAL_MAX_DIM};

/// Real symmetric tridiagonal Hamiltonian on `|k>`, `k = 0..=K`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveHamiltonian {
    spec: SystemSpec,
    diag: Vec<f64>,
    offdiag: Vec<f64>,
}

impl CollectiveHamiltonian {
    pub fn build(spec: &SystemSpec) -> Result<Self> {
        spec.validate()?;
        let k_max = spec.k_max();
        let (nb, nc) = (spec.n_b as f64, spec.n_c as f64);
        let diag = (0..=k_max)
            .map(|k| {
                let k = k as f64;
                spec.v_b * k + spec.v_c * (nc - k) + spec.j_b * k * (nb - k) + spec.j_c * k * (nc - k)
            })
            .collect();
        let offdiag = (0..k_max)
            .map(|k| {
                let k = k as f64;
                spec.j_bc * (k + 1.0) * ((nb - k) * (nc - k)).sqrt()
            })
            .collect();
        Ok(Self { spec: *spec, diag, offdiag })
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn offdiag(&self) -> &[f64] {
        &self.offdiag
    }

    /// `<psi|H|psi>`.
    pub fn expectation(&self, amps: &[C64]) -> f64 {
        let mut e: f64 = self.diag.iter().zip(amps).map(|(d, c)| d * c.norm_sqr()).sum();
        for (k, o) in self.offdiag.iter().enumerate() {
            e += 2.0 * o * (amps[k].conj() * amps[k + 1]).re;
        }
        e
    }

    pub fn eigendecompose(&self) -> Result<SpectralDecomposition> {
        tridiag::eigendecompose(&self.diag, &self.offdiag)
    }
}

impl LinearOperator for CollectiveHamiltonian {
    fn dim(&self) -> usize {
        self.diag.len()
    }

    fn apply(&self, x: &[C64], y: &mut [C64]) {
        let n = self.diag.len();
        let (d, o) = (&self.diag, &self.offdiag);
        if n == 1 {
            y[0] = x[0] * d[0];
            return;
        }
        y[0] = x[0] * d[0] + x[1] * o[0];
        for k in 1..n - 1 {
            y[k] = x[k - 1] * o[k - 1] + x[k] * d[k] + x[k + 1] * o[k];
        }
        y[n - 1] = x[n - 2] * o[n - 2] + x[n - 1] * d[n - 1];
    }
}

/// Amplitudes `c_k` over the collective basis.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectiveState {
    spec: SystemSpec,
    amps: Vec<C64>,
}

impl CollectiveState {
    pub fn initial(spec: &SystemSpec) -> Self {
        let mut amps = vec![C64::new(0.0, 0.0); spec.k_max() as usize + 1];
        amps[0] = C64::new(1.0, 0.0);
        Self { spec: *spec, amps }
    }

    pub fn from_amps(spec: &SystemSpec, amps: Vec<C64>) -> Result<Self> {
        let want = spec.k_max() as usize + 1;
        if amps.len() != want {
            return Err(Error::Dimension { expected: want, got: amps.len() });
        }
        Ok(Self { spec: *spec, amps })
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    pub fn amps(&self) -> &[C64] {
        &self.amps
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amps.iter().map(|c| c.norm_sqr()).sum()
    }
}

/// Observables of a single amplitude vector.
pub fn measure(h: &CollectiveHamiltonian, amps: &[C64]) -> Measurement {
    let spec = h.spec();
    let nc = spec.n_c as f64;
    let mut norm_sqr = 0.0;
    let mut n_b = 0.0;
    for (k, c) in amps.iter().enumerate() {
        let p = c.norm_sqr();
        norm_sqr += p;
        n_b += k as f64 * p;
    }
    let n_c = nc * norm_sqr - n_b;
    Measurement {
        norm_sqr,
        e_b: spec.v_b * n_b,
        e_c: spec.v_c * n_c,
        n_b,
        n_c,
        energy: h.expectation(amps),
        s_vn: entropy(amps.iter().map(|c| c.norm_sqr())),
    }
}

/// Runs `propagator` from `|k = 0>` through `times` and records observables.
pub fn run(h: &CollectiveHamiltonian, propagator: &dyn Propagator, times: &[f64]) -> Result<DynamicsResult> {
    let state0 = CollectiveState::initial(h.spec());
    run_from(h, propagator, &state0, times)
}

pub fn run_from(
    h: &CollectiveHamiltonian,
    propagator: &dyn Propagator,
    state0: &CollectiveState,
    times: &[f64],
) -> Result<DynamicsResult> {
    let spec = h.spec();
    let m0 = measure(h, state0.amps());
    let mut rec = Recorder::new(&m0, spec.n_c as f64, spec.k_max() as f64, times.len());
    propagator.evolve(state0.amps(), times, &mut |i, amps| {
        rec.push(times[i], &measure(h, amps));
        Ok(())
    })?;
    Ok(rec.finish())
}

/// Amplitude vectors at every grid time.
pub fn propagate(
    state0: &CollectiveState,
    h: &CollectiveHamiltonian,
    grid: &TimeGrid,
    propagator: &dyn Propagator,
) -> Result<Vec<CollectiveState>> {
    if state0.amps().len() != h.dim() {
        return Err(Error::Dimension { expected: h.dim(), got: state0.amps().len() });
    }
    let times = grid.times();
    let mut out = Vec::with_capacity(times.len());
    propagator.evolve(state0.amps(), &times, &mut |_, amps| {
        out.push(CollectiveState { spec: state0.spec, amps: amps.to_vec() });
        Ok(())
    })?;
    Ok(out)
}

/// Observables of already-propagated states.
pub fn observables(h: &CollectiveHamiltonian, states: &[CollectiveState], grid: &TimeGrid) -> Result<DynamicsResult> {
    let times = grid.times();
    if states.len() != times.len() {
        return Err(Error::Dimension { expected: times.len(), got: states.len() });
    }
    let spec = h.spec();
    let m0 = measure(h, CollectiveState::initial(spec).amps());
    let mut rec = Recorder::new(&m0, spec.n_c as f64, spec.k_max() as f64, times.len());
    for (t, s) in times.iter().zip(states) {
        rec.push(*t, &measure(h, s.amps()));
    }
    Ok(rec.finish())
}

/// Shared handle used by the propagators.
pub type SharedHamiltonian = Arc<CollectiveHamiltonian>;
