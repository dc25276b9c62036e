use thiserror::Error;

/// Errors raised by the model, analysis and harness layers.
#[derive(Debug, Error)]
pub enum SosError {
    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("boundary condition does not cover boundary site ({0}, {1})")]
    MissingBoundarySite(i64, i64),

    #[error("boundary condition lists ({0}, {1}) which is not on the outer boundary")]
    ExtraBoundarySite(i64, i64),

    #[error("height {height} at site {site} outside admissible window [{lo}, {hi}]")]
    Inadmissible {
        site: usize,
        height: i32,
        lo: i32,
        hi: i32,
    },

    #[error("operation not available in {0} mode")]
    WrongMode(&'static str),

    #[error("state space of {states} states exceeds cap {cap}")]
    CapExceeded { states: u128, cap: usize },

    #[error("not a contour of the configuration: {0}")]
    NotAContour(String),

    #[error("site set is not contained in the level set: {0}")]
    NotInLevelSet(String),

    #[error("path uses a transition with zero probability at step {0}")]
    ZeroProbabilityEdge(usize),

    #[error("path between good states leaves the good set")]
    PathLeavesGoodSet,

    #[error("eigensolver failed: {0}")]
    Eigen(String),

    #[error("domain must be square for this operation, got {0}x{1}")]
    NotSquare(usize, usize),

    #[error("invalid schedule: {0}")]
    InvalidSchedule(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SosError>;
