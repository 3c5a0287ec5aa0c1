//! Simulation and analysis toolkit for the multi-qubit battery-charger model.
//!
//! A set of `N_B` battery qubits and `N_C` charger qubits with onsite
//! potentials and all-to-all exchange couplings starts from the product state
//! with every charger qubit excited and every battery qubit empty. The crate
//! provides:
//!
//! - [`collective`]: exact dynamics of the uniform-coupling model in the
//!   two-large-spin sector, a `(min(N_B, N_C) + 1)`-dimensional tridiagonal
//!   problem that reaches tens of thousands of qubits;
//! - [`sector`]: sparse Lanczos dynamics of the disordered model in the full
//!   fixed-excitation sector;
//! - [`analytic`]: closed-form parallel-battery and Holstein–Primakoff results;
//! - [`analysis`]: maxima extraction, sweeps, noise ensembles and power-law fits;
//! - [`engine`]: the runtime registry tying engines and propagators to names.

pub mod analysis;
pub mod analytic;
pub mod collective;
pub mod config;
pub mod dynamics;
pub mod engine;
pub mod error;
pub mod io;
pub mod krylov;
pub mod model;
pub mod oracle;
pub mod sector;
pub mod tridiag;
pub mod validation;

pub use error::{Error, Result};
pub use model::{CouplingTable, PairSpec, Spacing, SystemSpec, TimeGrid};
