use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty hierarchy: no edges found")]
    EmptyHierarchy,

    #[error("line {line}: cycle detected through node `{node}`")]
    Cycle { line: usize, node: String },

    #[error("line {line}: second root `{second}` (first root is `{first}`)")]
    MultipleRoots {
        line: usize,
        first: String,
        second: String,
    },

    #[error("hierarchy has no root")]
    NoRoot,

    #[error("line {line}: node `{name}` already has a parent (declared on line {first_line})")]
    DuplicateChild {
        line: usize,
        name: String,
        first_line: usize,
    },

    #[error("hierarchy needs at least 2 leaf classes, found {found}")]
    TooFewClasses { found: usize },

    #[error("line {line}, column {column}: {message}")]
    Malformed {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("node index {index} out of range (tree has {len} nodes)")]
    InvalidNode { index: usize, len: usize },

    #[error("class index {index} out of range (K = {classes})")]
    InvalidClass { index: usize, classes: usize },

    #[error("depth {depth} out of range (maximum leaf depth is {max})")]
    DepthOutOfRange { depth: usize, max: usize },

    #[error("probability at position {index} is invalid: {value}")]
    InvalidProbability { index: usize, value: f64 },

    #[error("probabilities sum to {sum}, outside tolerance of 1")]
    NotNormalized { sum: f64 },

    #[error("row {row}: {source}")]
    Row {
        row: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("class order mismatch: {0}")]
    ClassOrderMismatch(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("k = {k} out of range 1..={max}")]
    KOutOfRange { k: usize, max: usize },

    #[error("bin count must be at least 1")]
    InvalidBins,

    #[error("temperature must be positive and finite, got {0}")]
    InvalidTemperature(f64),

    #[error("{0} is empty")]
    Empty(&'static str),

    #[error("invalid cost matrix: {0}")]
    InvalidCostMatrix(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn malformed(line: usize, column: usize, message: impl Into<String>) -> Self {
        Error::Malformed {
            line,
            column,
            message: message.into(),
        }
    }
}
