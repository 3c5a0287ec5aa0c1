use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("config line {line}: {reason}")]
    Config { line: usize, reason: String },

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("missing required key `{0}`")]
    MissingKey(&'static str),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("eigensolver failed to converge for eigenvalue {index}")]
    NoConvergence { index: usize },

    #[error("krylov step failed: residual {residual:e} above tolerance at t = {time} (step {step:e})")]
    KrylovTolerance { time: f64, step: f64, residual: f64 },

    #[error("sector dimension {dim} exceeds the configured cap {cap}")]
    SectorTooLarge { dim: u64, cap: u64 },

    #[error("maximum is window-limited at t = {time}")]
    WindowLimited { time: f64 },

    #[error("{0} requires the oscillatory regime (omega^2 > 4 g^2)")]
    NotOscillatory(&'static str),

    #[error("degenerate pair: J_pair = 0 and delta V = 0")]
    DegeneratePair,

    #[error("fit error: {0}")]
    Fit(String),

    #[error("unknown {kind} `{name}`")]
    UnknownStrategy { kind: &'static str, name: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
