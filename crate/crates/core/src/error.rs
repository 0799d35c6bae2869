use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("quadrature did not converge (achieved residual {residual:.3e}, tolerance {tolerance:.3e})")]
    QuadratureNonConvergence { residual: f64, tolerance: f64 },

    #[error("symmetric eigen-decomposition failed: {0}")]
    Diagonalization(String),

    #[error("energy window [{lo}, {hi}] is not covered by the retained basis (mode energies span [{min}, {max}])")]
    WindowNotCovered { lo: f64, hi: f64, min: f64, max: f64 },

    #[error("band selection is empty: no in-window pair within cutoff {cutoff:.6e}")]
    EmptyBand { cutoff: f64 },

    #[error("resistor network has no bonds in the window")]
    EmptyNetwork,

    #[error("iterative solver stopped after {iterations} iterations with relative residual {residual:.3e}")]
    SolverNonConvergence { iterations: usize, residual: f64 },

    #[error("all band elements are zero; sparsity is undefined")]
    AllZeroBand,

    #[error("geometric average {geometric:.6e} exceeds algebraic average {algebraic:.6e}")]
    MomentOrder { algebraic: f64, geometric: f64 },

    #[error("band has vanishing geometric average; a log-normal twin cannot be matched")]
    ZeroGeometricAverage,

    #[error("value outside the domain of `{function}`: {reason}")]
    Domain { function: &'static str, reason: String },
}

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter { name, reason: reason.into() }
}
