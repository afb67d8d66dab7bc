use thiserror::Error;

/// Errors raised while building models, configurations and chains.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid geometry: {0}")]
    Geometry(String),

    #[error("center rate must be 1/2 (got {0})")]
    CenterRate(f64),

    #[error("kernel not irreducible: support generates {reached} of {sites} sites")]
    Reducible { reached: usize, sites: usize },

    #[error("invalid kernel: {0}")]
    Kernel(String),

    #[error("invalid profile: {0}")]
    Profile(String),

    #[error("invalid configuration: {0}")]
    Configuration(String),

    #[error("invalid dual state: {0}")]
    DualState(String),

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("state space too large: {states} states exceeds cap {cap}")]
    CapExceeded { states: usize, cap: usize },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("config parse error: {0}")]
    Parse(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
