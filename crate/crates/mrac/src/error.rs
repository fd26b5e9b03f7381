//! Error type shared by every module of the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Matrix or vector dimensions do not agree.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// An argument violates a precondition (non-positive gain, rank-deficient
    /// matrix, out-of-range scalar, ...).
    #[error("invalid argument: {0}")]
    Argument(String),

    /// A matrix required to be Schur-stable has spectral radius >= 1.
    #[error("matrix is not Schur-stable (spectral radius {rho:.6})")]
    NotSchurStable { rho: f64 },

    /// A matrix required to be symmetric positive-definite is not.
    #[error("matrix is not symmetric positive-definite: {0}")]
    NotSymmetricPd(String),

    /// An iterative solver hit its iteration cap.
    #[error("{what} did not converge within {iterations} iterations")]
    Convergence { what: &'static str, iterations: usize },

    /// Adaptive-law gains violate the admissibility conditions.
    #[error("gain condition violated: {0}")]
    GainCondition(String),

    /// The closed-loop state left the divergence guard.
    #[error("trajectory diverged at step {step} (state norm {norm:.3e})")]
    Diverged { step: usize, norm: f64 },

    /// A Lyapunov certificate monitor tripped in fail-fast mode.
    #[error("Lyapunov certificate breach at step {step}: dV = {dv:.6e} > bound {bound:.6e}")]
    CertificateBreach { step: usize, dv: f64, bound: f64 },

    /// Configuration file or override problem.
    #[error("config error: {0}")]
    Config(String),

    /// I/O failure, annotated with the path involved.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn dimension(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
