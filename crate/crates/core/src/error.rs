use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Every semantic violation found while validating a configuration.
    #[error("invalid configuration: {}", .0.join("; "))]
    InvalidConfig(Vec<String>),

    #[error("config syntax error at line {line}, column {column}: {message}")]
    ConfigSyntax {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("equilibrium solver did not converge after {iterations} iterations (residual force {residual:.3e})")]
    SolverFailure { iterations: usize, residual: f64 },

    #[error("transverse trap too weak: A[{ion},{ion}] = {diagonal:.6e} <= 0 (ion index 1-based)")]
    TrapTooWeak { ion: usize, diagonal: f64 },

    #[error("coupling matrix is not positive definite (smallest eigenvalue {min_eigenvalue:.6e})")]
    UnstableChain { min_eigenvalue: f64 },

    #[error("no ion is coupled to a bath; the chain has no steady state")]
    NoDamping,

    #[error("drift matrix is nearly defective (eigenvector condition {condition:.3e}); perturb the damping rates slightly")]
    DefectiveSpectrum { condition: f64 },

    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("steady state is ill-conditioned: min Re(λα+λβ) = {min_sum_real:.3e}")]
    IllConditionedSteadyState { min_sum_real: f64 },

    #[error("Lyapunov system is singular; no steady state exists")]
    NoSteadyState,

    #[error("negative temperature {value:.6e} at ion {ion}")]
    NegativeTemperature { ion: usize, value: f64 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization error: {0}")]
    Serialization(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from user input rather than numerics.
    pub fn is_config_error(&self) -> bool {
        matches!(
            self,
            Error::InvalidArgument(_)
                | Error::InvalidConfig(_)
                | Error::ConfigSyntax { .. }
                | Error::NoDamping
                | Error::Io { .. }
                | Error::Serialization(_)
        )
    }
}
