use std::path::PathBuf;

/// Errors raised by games, coefficient tables, estimators and model bridges.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected} agents, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("agent {agent} out of range for {n} agents")]
    AgentOutOfRange { agent: usize, n: usize },

    #[error("order of explanation k={k} outside 1..={n}")]
    InvalidOrder { k: usize, n: usize },

    #[error("coalition of size {size} exceeds order of explanation k={k}")]
    CoalitionTooLarge { size: usize, k: usize },

    #[error("exact enumeration supports at most {max} agents (got {n}); use the sampler instead")]
    ExactGuard { n: usize, max: usize },

    #[error("agent count {n} outside supported range 1..={max}")]
    UnsupportedAgentCount { n: usize, max: usize },

    #[error("unknown {what} `{name}`")]
    Unknown { what: &'static str, name: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("game worth of the empty coalition must be 0, got {0}")]
    NonZeroEmptyWorth(String),

    #[error("cannot parse number `{0}`")]
    ParseNumber(String),

    #[error("non-finite value {0} cannot enter an exact computation")]
    NonFinite(f64),

    #[error("{path}: {message}")]
    File { path: PathBuf, message: String },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("model failed on row {row}: {source}")]
    ModelRow {
        row: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("instance {instance:?} not present in prediction table")]
    MissingInstance { instance: Vec<f64> },

    #[error("model protocol error: {message} (last line: {last_line:?})")]
    Protocol {
        message: String,
        last_line: Option<String>,
    },

    #[error("model process timed out after {seconds:.1}s (last line: {last_line:?})")]
    Timeout {
        seconds: f64,
        last_line: Option<String>,
    },

    #[error("model process exited: {status} (last line: {last_line:?})")]
    ProcessExited {
        status: String,
        last_line: Option<String>,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
