use std::path::PathBuf;

/// Errors produced anywhere in the tuning pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        context: &'static str,
        expected: Vec<usize>,
        actual: Vec<usize>,
    },

    #[error("invalid shape {shape:?}: {reason}")]
    InvalidShape { shape: Vec<usize>, reason: String },

    #[error("non-finite value produced by primitive `{primitive}`")]
    NonFinite { primitive: String },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("value out of range: {0}")]
    OutOfRange(String),

    #[error("frame count {frames} violates (T-1) mod 8 = 0; nearest valid lengths are {lower} and {upper}")]
    TemporalConstraint { frames: usize, lower: usize, upper: usize },

    #[error("bad magic in {path}: expected {expected:?}")]
    BadMagic { path: PathBuf, expected: &'static str },

    #[error("truncated payload in {path}: expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("manifest {path}, record {record}: {message}")]
    Manifest {
        path: PathBuf,
        record: usize,
        message: String,
    },

    #[error("missing file referenced by manifest: {0}")]
    MissingFile(PathBuf),

    #[error("text context is frozen and cannot be mutated")]
    Frozen,

    #[error("invalid config value for `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("survey: {0}")]
    Survey(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
