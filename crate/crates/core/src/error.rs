use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("matrix log outside the principal branch (||g - I||_F = {norm:.4} >= 1); subdivide the increment")]
    OutsidePrincipalBranch { norm: f64 },

    #[error("point lies outside the coordinate chart (distance {distance:.4} > radius {radius:.4}); shorten the step")]
    OutsideChart { distance: f64, radius: f64 },

    #[error("point on the orbit-type boundary: {0}")]
    Boundary(String),

    #[error("step halving exhausted after {0} levels")]
    StepHalving(u32),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("numerical accuracy check failed: {0}")]
    Accuracy(String),

    #[error("insufficient samples: {0}")]
    InsufficientSamples(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("malformed data: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
