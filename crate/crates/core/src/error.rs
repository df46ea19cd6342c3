use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("surface normal is not unit length (norm = {norm})")]
    NormalNotUnit { norm: f64 },

    #[error("curvature must be finite and non-negative, got {0}")]
    NegativeCurvature(f64),

    #[error("depth point cloud is empty")]
    EmptyCloud,

    #[error("at least one Monte Carlo sample is required")]
    EmptySamples,

    #[error("gaussian id mismatch: {left} vs {right}")]
    IdMismatch { left: u64, right: u64 },

    #[error("grid specs differ: {0}")]
    GridMismatch(String),

    #[error("degenerate bounds: {0}")]
    DegenerateBounds(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid scene object #{index}: {reason}")]
    InvalidObject { index: usize, reason: String },

    #[error("invalid scene: {0}")]
    InvalidScene(String),

    #[error("invalid camera frame: {0}")]
    InvalidFrame(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("malformed file: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
