use thiserror::Error;

/// Errors produced by the simulation and design pipeline.
#[derive(Debug, Error)]
pub enum HoloError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid medium: {0}")]
    InvalidMedium(String),

    #[error("invalid source: {0}")]
    InvalidSource(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: expected {expected:?}, found {found:?}")]
    ShapeMismatch {
        expected: Vec<usize>,
        found: Vec<usize>,
    },

    #[error("index {index} on axis {axis} lies inside the absorbing layer or outside the grid")]
    IndexInAbsorber { axis: usize, index: usize },

    #[error("axis {axis} out of range for a {ndim}-dimensional grid")]
    AxisOutOfRange { axis: usize, ndim: usize },

    #[error("region at offset {offset:?} with shape {shape:?} does not fit in grid {grid:?}")]
    OutOfBounds {
        offset: Vec<usize>,
        shape: Vec<usize>,
        grid: Vec<usize>,
    },

    #[error("{stage} solve did not converge: residual {residual:.3e} after {iterations} iterations")]
    NonConvergence {
        stage: SolveStage,
        residual: f64,
        iterations: usize,
        history: Vec<f64>,
    },

    #[error("zero norm: {0}")]
    ZeroNorm(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("singular system (condition estimate {condition:.3e})")]
    Singular { condition: f64 },

    #[error("problem too large for dense oracle: {cells} cells (limit {limit})")]
    TooLarge { cells: usize, limit: usize },

    #[error("{0}")]
    Format(String),

    #[error("config: {0}")]
    Config(String),

    #[error("unknown config key `{key}`{}", suggestion.as_ref().map(|s| format!(" (did you mean `{s}`?)")).unwrap_or_default())]
    UnknownKey {
        key: String,
        suggestion: Option<String>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Which linear solve inside a gradient evaluation failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStage {
    Forward,
    Adjoint,
}

impl std::fmt::Display for SolveStage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SolveStage::Forward => f.write_str("forward"),
            SolveStage::Adjoint => f.write_str("adjoint"),
        }
    }
}

pub type Result<T> = std::result::Result<T, HoloError>;
