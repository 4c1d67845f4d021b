use thiserror::Error;

/// Errors raised across model construction, spectral analysis, simulation and verification.
#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("model is not supercritical (lambda_1 = {0})")]
    NotSupercritical(f64),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("simulation diverged: {0}")]
    SimulationDiverged(String),

    #[error("no convergence: {0}")]
    NoConvergence(String),

    #[error("manifest mismatch: {0}")]
    ManifestMismatch(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors that stem from numerics rather than from user input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            Error::Numerical(_)
                | Error::NotSupercritical(_)
                | Error::SimulationDiverged(_)
                | Error::NoConvergence(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
