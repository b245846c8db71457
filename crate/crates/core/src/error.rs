use thiserror::Error;

/// Errors raised by graph construction, model assembly and probability computation.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum QcmError {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        found: usize,
    },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),

    #[error("unknown edge `{0}`")]
    UnknownEdge(String),

    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("edge subset is cyclic: {0}")]
    CyclicSubset(String),

    #[error("graph has {size} {what}, above the enumeration cap of {cap}; raise the cap to enumerate")]
    CapExceeded {
        what: &'static str,
        size: usize,
        cap: usize,
    },

    #[error("invalid separation query: {0}")]
    InvalidQuery(String),

    #[error("unknown variable `{0}`")]
    UnknownVariable(String),

    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("graph is cyclic; use cyclic_probability for cyclic models")]
    CyclicGraph,

    #[error("total edge dimension {total} exceeds the cap of {cap} (override with QCM_DIM_CAP)")]
    DimensionCap { total: u128, cap: u128 },

    #[error("invalid teleportation protocol: {0}")]
    InvalidProtocol(String),

    #[error("invalid functional model: {0}")]
    InvalidFunctional(String),

    #[error("linear algebra failure: {0}")]
    Numeric(String),
}

pub type Result<T> = std::result::Result<T, QcmError>;
