use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("matrix is not Hermitian (asymmetry {asym:.3e})")]
    NotHermitian { asym: f64 },
    #[error("matrix has negative spectrum (min eigenvalue {min:.3e})")]
    NegativeSpectrum { min: f64 },
    #[error("ill-conditioned solve (condition estimate {cond:.3e})")]
    IllConditioned { cond: f64 },
    #[error("point outside the domain: {0}")]
    DomainViolation(String),
    #[error("range violation: inner map norm {norm:.6} is not below the outer radius {radius:.6}")]
    RangeViolation { norm: f64, radius: f64 },
    #[error("no convergence after {iters} iterations (last change {delta:.3e})")]
    NoConvergence { iters: usize, delta: f64 },
    #[error("not a row isometry on the safe subspace (defect {defect:.3e})")]
    NotRowIsometry { defect: f64 },
    #[error("contract violation: {0}")]
    ContractViolation(String),
    #[error("tuple is not commuting (commutator norm {norm:.3e})")]
    NotCommuting { norm: f64 },
    #[error("unknown suite '{0}'")]
    UnknownSuite(String),
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error("invalid input field '{field}': {msg}")]
    Parse { field: String, msg: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn parse(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Parse { field: field.into(), msg: msg.into() }
    }
}
