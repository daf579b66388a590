use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("jet parameter beta = {0} outside [0, 2/3]")]
    BetaOutOfRange(f64),

    #[error("unknown model `{0}` (expected jet-additive, jet-multiplicative, linear3d or lorenz)")]
    UnknownModel(String),

    #[error("non-finite state at step {step}")]
    BlowUp { step: usize },

    #[error("too few samples: {rows} regression rows for {columns} basis columns")]
    TooFewSamples { rows: usize, columns: usize },

    #[error("design matrix is rank deficient; dependent columns: {labels:?}")]
    RankDeficient {
        columns: Vec<usize>,
        labels: Vec<String>,
    },

    #[error("noise cross-talk above tolerance {tolerance:e}: {entries:?}")]
    CrossTalk {
        tolerance: f64,
        /// (noise row label, component index, value)
        entries: Vec<(String, usize, f64)>,
    },

    #[error("unsupported noise structure: {0}")]
    NoiseStructure(String),

    #[error("saddle search failed: {0}")]
    SaddleSearch(String),

    #[error("unknown boundary label `{0}`")]
    UnknownLabel(String),

    #[error("singular discrete operator: {0}")]
    Singular(String),

    #[error("linear solver did not converge after {iterations} iterations (relative residual {residual:e})")]
    NoConvergence {
        iterations: usize,
        residual: f64,
        history: Vec<f64>,
    },

    #[error("start point {0:?} is not inside the domain")]
    NotInterior(Vec<f64>),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
