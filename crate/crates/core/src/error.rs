use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpnError {
    #[error("syntax error at byte {pos}: {msg}")]
    Syntax { pos: usize, msg: String },

    #[error("scope error: {0}")]
    Scope(String),

    #[error("weight error: {0}")]
    Weight(String),

    #[error("dimension error: expected {expected} coordinates, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("leaf index {index} out of range (model has {leaves} leaves)")]
    Index { index: usize, leaves: usize },

    #[error("invalid leaf binding: {0}")]
    Binding(String),

    #[error("support mismatch: {0}")]
    Support(String),

    #[error("joint grid of {size} points exceeds the cap of {cap}")]
    Size { size: u128, cap: u128 },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("structures differ")]
    Structure,

    #[error("not a point of the probability simplex: {0}")]
    Simplex(String),

    #[error("insufficient samples: need {needed}, have {have}")]
    InsufficientSamples { needed: usize, have: usize },

    #[error("degenerate sample: {0}")]
    DegenerateSample(String),

    #[error("leaf {leaf} could not be encoded: {reason}")]
    LeafEncodeFailure { leaf: usize, reason: String },

    #[error("message layout mismatch: {0}")]
    Layout(String),

    #[error("bitstream error: {0}")]
    Bitstream(String),

    #[error("candidate count {count} exceeds cap {cap}")]
    CapExceeded { count: u128, cap: u128 },

    #[error("candidate set is empty")]
    EmptyCandidateSet,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, SpnError>;

impl From<std::io::Error> for SpnError {
    fn from(e: std::io::Error) -> Self {
        SpnError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for SpnError {
    fn from(e: serde_json::Error) -> Self {
        SpnError::Config(e.to_string())
    }
}
