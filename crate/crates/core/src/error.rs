//! Error type shared by all modules.

use thiserror::Error;

#[derive(Error, Debug)]
pub enum GlError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("boundary condition mismatch: {0}")]
    BcMismatch(String),

    #[error(
        "flux quantization violated: R^2 = {r_squared} but 2*pi*N = {expected} for N = {n_flux}"
    )]
    QuantizationViolation {
        r_squared: f64,
        expected: f64,
        n_flux: u32,
    },

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("eigensolver did not converge: {0}")]
    EigenNonConvergence(String),

    #[error("minimizer did not converge: {0}")]
    MinimizeNonConvergence(String),

    #[error("spectral hypothesis violated: {0}")]
    HypothesisViolation(String),

    #[error("geometry violation: {0}")]
    Geometry(String),

    #[error("infeasible schedule: {0}")]
    InfeasibleSchedule(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("field file format: {0}")]
    FileFormat(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, GlError>;
