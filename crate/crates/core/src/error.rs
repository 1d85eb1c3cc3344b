use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter lies outside the region where a formula is defined.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("infeasible set: {0}")]
    Infeasible(String),

    #[error("point lies outside the set by {violation:e}")]
    NotInSet { violation: f64 },

    #[error("iteration diverged at k = {iteration} (|x| = {norm:e})")]
    Divergence { iteration: usize, norm: f64 },

    #[error("iteration cap of {cap} reached with residual {residual:e}")]
    IterationCap { cap: usize, residual: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("instance file: {0}")]
    Instance(String),
}

pub(crate) fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}
