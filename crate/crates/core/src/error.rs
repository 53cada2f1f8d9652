use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid window: {0}")]
    InvalidWindow(String),

    #[error("point ({x}, {y}) lies outside the window")]
    PointOutsideWindow { x: f64, y: f64 },

    #[error("duplicate point ({x}, {y})")]
    DuplicatePoint { x: f64, y: f64 },

    #[error("{0}")]
    TooFewPoints(String),

    #[error("erosion by {0} leaves an empty window")]
    EmptyErosion(f64),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point ({x}, {y}) outside the required domain")]
    OutsideDomain { x: f64, y: f64 },

    #[error("model cannot be simulated: {0}")]
    NotSimulable(String),

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("fit did not converge after {iterations} iterations (scaled gradient {gradient:.3e})")]
    NonConvergence { iterations: usize, gradient: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("too many failed replicates: {dropped} of {total}")]
    TooManyDropped { dropped: usize, total: usize },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
