use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("exact enumeration over 2^{bits} points exceeds the cap of {cap} evaluations")]
    TooLargeForExact { bits: usize, cap: u64 },

    #[error("relevant index set is empty")]
    EmptyIndexSet,

    #[error("gate {gate} at layer {layer}, position {position} is not one of AND, OR, NAND, NOR")]
    UnsupportedGate {
        layer: usize,
        position: usize,
        gate: String,
    },

    #[error("precondition violated: {0}")]
    PreconditionViolated(String),

    #[error("initialization scale {scale} exceeds the bound {bound}")]
    ScaleTooLarge { scale: f64, bound: f64 },

    #[error("batch is empty")]
    EmptyBatch,

    #[error("invalid parameter: {0}")]
    InvalidRange(String),

    #[error("local correlation violated at level {level}, position {position}: zero correlation on an influencing node")]
    LcaViolated { level: usize, position: usize },

    #[error("non-finite loss at layer {layer}, step {step}")]
    NonFiniteLoss { layer: usize, step: usize },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("matrix too large: {0}")]
    TooLarge(String),

    #[error("malformed input: {0}")]
    Parse(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
