use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {path}: {reason}")]
    Invalid { path: String, reason: String },

    #[error("{what}: expected length {expected}, found {found}")]
    ShapeMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("confinement-induced resonance: 1D coupling denominator {denominator} is not positive")]
    ResonancePole { denominator: f64 },

    #[error("orbital density matrix is singular beyond regularization (condition number {condition:e})")]
    SingularDensity { condition: f64 },

    #[error("step size underflow at t = {time}: h = {step:e}")]
    StepUnderflow { time: f64, step: f64 },

    #[error("propagation failed at t = {time}: {reason}")]
    Propagation { time: f64, reason: String },

    #[error("relaxation did not converge within tau = {tau} (last |dE/dtau| = {rate:e})")]
    RelaxationNotConverged {
        tau: f64,
        rate: f64,
        energies: Vec<f64>,
    },

    #[error("eigensolver did not converge: residual {residual:e} after {iterations} iterations")]
    EigenNotConverged { residual: f64, iterations: usize },

    #[error("configuration space of {size} states exceeds the cap of {cap}")]
    CapExceeded { size: usize, cap: usize },

    #[error("config line {line}: {key}: {reason}")]
    Config {
        line: usize,
        key: String,
        reason: String,
    },

    #[error("bad snapshot format: {0}")]
    Format(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing input: {0}")]
    Missing(String),

    #[error("{source} (last checkpoint: {checkpoint})")]
    RunFailed {
        checkpoint: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn invalid(path: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Invalid {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag used by the CLI's JSON-lines log.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Invalid { .. } => "invalid",
            Error::ShapeMismatch { .. } => "shape_mismatch",
            Error::ResonancePole { .. } => "resonance_pole",
            Error::SingularDensity { .. } => "singular_density",
            Error::StepUnderflow { .. } => "step_underflow",
            Error::Propagation { .. } => "propagation",
            Error::RelaxationNotConverged { .. } => "relaxation_not_converged",
            Error::EigenNotConverged { .. } => "eigen_not_converged",
            Error::CapExceeded { .. } => "cap_exceeded",
            Error::Config { .. } => "config",
            Error::Format(_) => "format",
            Error::Io { .. } => "io",
            Error::Missing(_) => "missing",
            Error::RunFailed { source, .. } => source.kind(),
        }
    }
}
