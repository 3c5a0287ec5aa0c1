//! Name-addressable dynamics engines.
//!
//! An [`Engine`] is bound to one model at construction (so expensive set-up
//! such as an eigendecomposition or a sector build happens once) and then
//! evaluated on arbitrary ascending time lists.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::collective::{self, CollectiveHamiltonian, Method, Propagator, PropagatorRegistry};
use crate::dynamics::{DynamicsResult, Observables};
use crate::error::{Error, Result};
use crate::krylov::{Checkpoints, KrylovSettings, LinearOperator};
use crate::model::{CouplingTable, SystemSpec};
use crate::sector::{self, SectorLimits, SparseHamiltonian};

/// A model in either of its two representations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Model {
    Uniform(SystemSpec),
    Table(CouplingTable),
}

impl Model {
    pub fn n_b(&self) -> u64 {
        match self {
            Model::Uniform(s) => s.n_b,
            Model::Table(t) => t.n_b() as u64,
        }
    }

    pub fn n_c(&self) -> u64 {
        match self {
            Model::Uniform(s) => s.n_c,
            Model::Table(t) => t.n_c() as u64,
        }
    }

    pub fn k_max(&self) -> u64 {
        self.n_b().min(self.n_c())
    }

    /// The uniform spec, if the model has one.
    pub fn as_uniform(&self) -> Option<SystemSpec> {
        match self {
            Model::Uniform(s) => Some(*s),
            Model::Table(t) => t.as_uniform(),
        }
    }

    pub fn to_table(&self) -> Result<CouplingTable> {
        match self {
            Model::Uniform(s) => CouplingTable::from_spec(s),
            Model::Table(t) => Ok(t.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EngineOptions {
    /// Collective propagator choice.
    pub method: Method,
    /// Collective Krylov propagator.
    pub krylov: KrylovSettings,
    /// Sparse-sector Lanczos.
    pub sector_krylov: KrylovSettings,
    pub sector: SectorLimits,
}

impl Default for EngineOptions {
    fn default() -> Self {
        Self {
            method: Method::Auto,
            krylov: KrylovSettings::default(),
            sector_krylov: KrylovSettings::sparse(),
            sector: SectorLimits::default(),
        }
    }
}

pub trait Engine: Send + Sync {
    fn name(&self) -> &'static str;

    /// Observables at each of the ascending `times`, starting from the
    /// charger-full state at `t = 0`.
    fn evaluate_with(&self, times: &[f64], obs: Observables) -> Result<DynamicsResult>;

    fn evaluate(&self, times: &[f64]) -> Result<DynamicsResult> {
        self.evaluate_with(times, Observables::All)
    }

    /// Settings recorded in run manifests.
    fn settings(&self) -> serde_json::Value;
}

pub struct CollectiveEngine {
    h: Arc<CollectiveHamiltonian>,
    propagator: Box<dyn Propagator>,
}

impl CollectiveEngine {
    pub fn new(spec: &SystemSpec, options: &EngineOptions) -> Result<Self> {
        Self::with_propagators(spec, options, &PropagatorRegistry::builtin())
    }

    pub fn with_propagators(spec: &SystemSpec, options: &EngineOptions, registry: &PropagatorRegistry) -> Result<Self> {
        let h = Arc::new(CollectiveHamiltonian::build(spec)?);
        let name = options.method.resolve(h.dim());
        let propagator = registry.create(name, h.clone(), &options.krylov)?;
        Ok(Self { h, propagator })
    }

    pub fn hamiltonian(&self) -> &CollectiveHamiltonian {
        &self.h
    }

    pub fn propagator(&self) -> &dyn Propagator {
        self.propagator.as_ref()
    }
}

impl Engine for CollectiveEngine {
    fn name(&self) -> &'static str {
        "collective"
    }

    fn evaluate_with(&self, times: &[f64], _obs: Observables) -> Result<DynamicsResult> {
        collective::run(&self.h, self.propagator.as_ref(), times)
    }

    fn settings(&self) -> serde_json::Value {
        json!({ "engine": "collective", "propagator": self.propagator.settings() })
    }
}

pub struct FullSectorEngine {
    h: SparseHamiltonian,
    krylov: KrylovSettings,
    checkpoints: Checkpoints,
}

impl FullSectorEngine {
    pub fn new(table: &CouplingTable, options: &EngineOptions) -> Result<Self> {
        options.sector_krylov.validate()?;
        let h = sector::build_sector(table, table.n_c(), &options.sector)?;
        Ok(Self { h, krylov: options.sector_krylov, checkpoints: Checkpoints::default() })
    }

    pub fn hamiltonian(&self) -> &SparseHamiltonian {
        &self.h
    }
}

impl Engine for FullSectorEngine {
    fn name(&self) -> &'static str {
        "full"
    }

    fn evaluate_with(&self, times: &[f64], obs: Observables) -> Result<DynamicsResult> {
        sector::run_cached(&self.h, self.krylov, &self.checkpoints, times, obs)
    }

    fn settings(&self) -> serde_json::Value {
        json!({
            "engine": "full",
            "sector_dim": self.h.dim(),
            "matrix_free": self.h.is_matrix_free(),
            "max_krylov_dim": self.krylov.max_dim,
            "tolerance": self.krylov.tolerance,
            "full_reorthogonalization": self.krylov.full_reorthogonalization,
        })
    }
}

pub type EngineFactory = fn(&Model, &EngineOptions) -> Result<Box<dyn Engine>>;

/// Name -> constructor table. `auto` is resolved by [`EngineRegistry::create`]
/// rather than registered: collective when the model is uniform, full
/// otherwise.
pub struct EngineRegistry {
    factories: BTreeMap<&'static str, EngineFactory>,
}

impl EngineRegistry {
    pub fn empty() -> Self {
        Self { factories: BTreeMap::new() }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("collective", |model, opts| {
            let spec = model.as_uniform().ok_or_else(|| Error::InvalidParameter {
                name: "engine",
                reason: "the collective engine needs uniform couplings".into(),
            })?;
            Ok(Box::new(CollectiveEngine::new(&spec, opts)?))
        });
        r.register("full", |model, opts| Ok(Box::new(FullSectorEngine::new(&model.to_table()?, opts)?)));
        r
    }

    pub fn register(&mut self, name: &'static str, factory: EngineFactory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    /// Name `auto` picks per the model; anything else is looked up.
    pub fn resolve<'a>(&self, name: &'a str, model: &Model) -> &'a str {
        match name {
            "auto" if model.as_uniform().is_some() => "collective",
            "auto" => "full",
            other => other,
        }
    }

    pub fn create(&self, name: &str, model: &Model, options: &EngineOptions) -> Result<Box<dyn Engine>> {
        let name = self.resolve(name, model);
        let factory = self
            .factories
            .get(name)
            .ok_or_else(|| Error::UnknownStrategy { kind: "engine", name: name.to_string() })?;
        factory(model, options)
    }
}
