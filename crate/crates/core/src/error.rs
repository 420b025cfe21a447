use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("qubit index {qubit} out of range for {n_qubits}-qubit register")]
    QubitOutOfRange { qubit: usize, n_qubits: usize },

    #[error("state is not normalized (norm^2 = {0})")]
    NotNormalized(f64),

    #[error("invalid gate: {0}")]
    InvalidGate(String),

    #[error("invalid device profile: {0}")]
    InvalidProfile(String),

    #[error("circuit needs {circuit} qubits but device has {device}")]
    TooManyQubits { circuit: usize, device: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid counts table: {0}")]
    InvalidCounts(String),

    #[error("unknown metric `{0}`")]
    UnknownMetric(String),

    #[error("no shared circuits between compared sessions")]
    NoSharedCircuits,

    #[error("non-finite value in field `{0}`")]
    NonFinite(String),

    #[error("key error: {0}")]
    Key(String),

    #[error("artifact already redacted")]
    AlreadyRedacted,

    #[error("malformed artifact: {0}")]
    MalformedArtifact(String),

    #[error("artifact rejected: {0}")]
    Rejected(String),

    #[error("chain link mismatch for device `{device}`: expected prev {expected}, got {actual}")]
    ChainLink {
        device: String,
        expected: String,
        actual: String,
    },

    #[error("duplicate session `{session}` for device `{device}`")]
    DuplicateSession { device: String, session: String },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
