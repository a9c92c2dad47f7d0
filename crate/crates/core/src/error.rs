use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EinconvError {
    #[error("dimension mismatch for label `{label}`: {left} vs {right}")]
    DimMismatch {
        label: String,
        left: usize,
        right: usize,
    },
    #[error("label `{0}` appears in no operand")]
    UnknownLabel(String),
    #[error("label `{label}` repeated in operand {operand}")]
    SelfLoop { operand: usize, label: String },
    #[error("data length {got} does not match shape product {expected}")]
    DataLength { expected: usize, got: usize },
    #[error("operand {0} does not match its expression label set")]
    OperandMismatch(usize),
    #[error("wrong operand count: expected {expected}, got {got}")]
    OperandCount { expected: usize, got: usize },
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("missing rank `{0}`")]
    MissingRank(String),
    #[error("even filter size {0}")]
    EvenFilter(usize),
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("candidate cap {cap} exceeded after {partial} candidates")]
    Overflow { cap: u64, partial: u64 },
    #[error("idx: bad magic {0:#010x}")]
    BadMagic(u32),
    #[error("idx: truncated file")]
    Truncated,
    #[error("idx: dimension overflow")]
    DimOverflow,
    #[error("training diverged at epoch {epoch}, step {step}: loss {loss}")]
    Divergence { epoch: usize, step: usize, loss: f64 },
    #[error("invalid network: {0}")]
    Network(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error("unevaluated individual {0}")]
    Unevaluated(usize),
    #[error("io: {0}")]
    Io(String),
    #[error("parse: {0}")]
    Parse(String),
}

impl From<std::io::Error> for EinconvError {
    fn from(e: std::io::Error) -> Self {
        EinconvError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for EinconvError {
    fn from(e: serde_json::Error) -> Self {
        EinconvError::Parse(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, EinconvError>;
