use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use num_complex::Complex64 as C64;
use serde_json::json;

use super::CollectiveHamiltonian;
use crate::error::{Error, Result};
use crate::krylov::{Checkpoints, KrylovSettings};
use crate::tridiag::SpectralDecomposition;

/// Largest collective dimension propagated spectrally under [`Method::Auto`].
pub const SPECTRAL_MAX_DIM: usize = 1024;

/// Time propagation strategy for the collective chain.
pub trait Propagator: Send + Sync {
    fn name(&self) -> &'static str;

    /// Evolves `amps0` (at time zero) to each of `times` and hands every
    /// resulting amplitude vector to `visit`.
    fn evolve(&self, amps0: &[C64], times: &[f64], visit: &mut dyn FnMut(usize, &[C64]) -> Result<()>) -> Result<()>;

    /// Settings recorded in run manifests.
    fn settings(&self) -> serde_json::Value;
}

/// `c(t) = U exp(-i Lambda t) U^T c(0)` from a full eigendecomposition.
pub struct SpectralPropagator {
    dec: SpectralDecomposition,
}

impl SpectralPropagator {
    pub fn new(h: &CollectiveHamiltonian) -> Result<Self> {
        Ok(Self { dec: h.eigendecompose()? })
    }

    pub fn decomposition(&self) -> &SpectralDecomposition {
        &self.dec
    }
}

// Eigencomponents with smaller weight contribute below round-off.
const NEGLIGIBLE_WEIGHT: f64 = 1e-17;

impl Propagator for SpectralPropagator {
    fn name(&self) -> &'static str {
        "spectral"
    }

    fn evolve(&self, amps0: &[C64], times: &[f64], visit: &mut dyn FnMut(usize, &[C64]) -> Result<()>) -> Result<()> {
        let n = self.dec.dim();
        if amps0.len() != n {
            return Err(Error::Dimension { expected: n, got: amps0.len() });
        }
        let weights: Vec<(usize, C64)> = (0..n)
            .map(|j| {
                let v = self.dec.eigenvector(j);
                (j, v.iter().zip(amps0).map(|(u, c)| c * u).sum::<C64>())
            })
            .filter(|(_, w)| w.norm() > NEGLIGIBLE_WEIGHT)
            .collect();
        let mut out = vec![C64::new(0.0, 0.0); n];
        for (i, &t) in times.iter().enumerate() {
            out.iter_mut().for_each(|x| *x = C64::new(0.0, 0.0));
            for &(j, w) in &weights {
                let coeff = w * C64::from_polar(1.0, -self.dec.eigenvalues()[j] * t);
                for (o, u) in out.iter_mut().zip(self.dec.eigenvector(j)) {
                    *o += coeff * u;
                }
            }
            visit(i, &out)?;
        }
        Ok(())
    }

    fn settings(&self) -> serde_json::Value {
        json!({ "method": "spectral", "dim": self.dec.dim() })
    }
}

/// Adaptive Lanczos stepping on the tridiagonal matrix.
///
/// On the chain the matvec is far cheaper than reorthogonalizing against the
/// basis, so the plain three-term recurrence is used; it agrees with the
/// fully reorthogonalized run to round-off at the default tolerance.
pub struct KrylovPropagator {
    h: Arc<CollectiveHamiltonian>,
    settings: KrylovSettings,
    checkpoints: Checkpoints,
}

impl KrylovPropagator {
    pub fn new(h: Arc<CollectiveHamiltonian>, settings: KrylovSettings) -> Result<Self> {
        settings.validate()?;
        let settings = KrylovSettings { full_reorthogonalization: false, ..settings };
        Ok(Self { h, settings, checkpoints: Checkpoints::default() })
    }
}

impl Propagator for KrylovPropagator {
    fn name(&self) -> &'static str {
        "krylov"
    }

    fn evolve(&self, amps0: &[C64], times: &[f64], visit: &mut dyn FnMut(usize, &[C64]) -> Result<()>) -> Result<()> {
        self.checkpoints.evolve(self.h.as_ref(), self.settings, amps0, times, |i, v| visit(i, v))?;
        Ok(())
    }

    fn settings(&self) -> serde_json::Value {
        json!({
            "method": "krylov",
            "dim": self.h.dim(),
            "max_krylov_dim": self.settings.max_dim,
            "tolerance": self.settings.tolerance,
        })
    }
}

/// User-facing method selector; `Auto` picks spectral up to
/// [`SPECTRAL_MAX_DIM`] and Krylov beyond.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Method {
    Auto,
    Named(String),
}

impl Method {
    pub fn resolve(&self, dim: usize) -> &str {
        match self {
            Method::Auto if dim <= SPECTRAL_MAX_DIM => "spectral",
            Method::Auto => "krylov",
            Method::Named(name) => name,
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "auto" => Method::Auto,
            other => Method::Named(other.to_string()),
        })
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Auto => write!(f, "auto"),
            Method::Named(n) => write!(f, "{n}"),
        }
    }
}

pub type PropagatorFactory = fn(Arc<CollectiveHamiltonian>, &KrylovSettings) -> Result<Box<dyn Propagator>>;

/// Name -> constructor table for collective propagators.
pub struct PropagatorRegistry {
    factories: BTreeMap<&'static str, PropagatorFactory>,
}

impl PropagatorRegistry {
    pub fn empty() -> Self {
        Self { factories: BTreeMap::new() }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("spectral", |h, _| Ok(Box::new(SpectralPropagator::new(&h)?)));
        r.register("krylov", |h, s| Ok(Box::new(KrylovPropagator::new(h, *s)?)));
        r
    }

    pub fn register(&mut self, name: &'static str, factory: PropagatorFactory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn create(
        &self,
        name: &str,
        h: Arc<CollectiveHamiltonian>,
        settings: &KrylovSettings,
    ) -> Result<Box<dyn Propagator>> {
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| Error::UnknownStrategy { kind: "propagator", name: name.to_string() })?;
        factory(h, settings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collective::CollectiveState;
    use crate::model::SystemSpec;

    #[test]
    fn auto_threshold() {
        assert_eq!(Method::Auto.resolve(SPECTRAL_MAX_DIM), "spectral");
        assert_eq!(Method::Auto.resolve(SPECTRAL_MAX_DIM + 1), "krylov");
        assert_eq!("krylov".parse::<Method>().unwrap().resolve(3), "krylov");
    }

    #[test]
    fn unknown_name() {
        let spec = SystemSpec::homogeneous(2, 2, 1.0, 0.0).unwrap();
        let h = Arc::new(CollectiveHamiltonian::build(&spec).unwrap());
        let r = PropagatorRegistry::builtin();
        assert!(matches!(r.create("euler", h, &KrylovSettings::default()), Err(Error::UnknownStrategy { .. })));
    }

    #[test]
    fn spectral_and_krylov_agree_at_fifty() {
        let spec = SystemSpec::homogeneous(50, 50, 1.0, 0.0).unwrap();
        let h = Arc::new(CollectiveHamiltonian::build(&spec).unwrap());
        let times: Vec<f64> = (0..=200).map(|i| i as f64 * 0.05).collect();
        let s0 = CollectiveState::initial(&spec);
        let r = PropagatorRegistry::builtin();
        let mut spectral = Vec::new();
        r.create("spectral", h.clone(), &KrylovSettings::default())
            .unwrap()
            .evolve(s0.amps(), &times, &mut |_, a| {
                spectral.push(a.to_vec());
                Ok(())
            })
            .unwrap();
        let mut worst: f64 = 0.0;
        r.create("krylov", h, &KrylovSettings::default())
            .unwrap()
            .evolve(s0.amps(), &times, &mut |i, a| {
                for (x, y) in a.iter().zip(&spectral[i]) {
                    worst = worst.max((x - y).norm());
                }
                Ok(())
            })
            .unwrap();
        assert!(worst < 1e-8, "max amplitude deviation {worst:e}");
    }
}
