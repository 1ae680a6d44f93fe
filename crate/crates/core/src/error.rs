use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: malformed file: {reason}")]
    MalformedFile { path: PathBuf, reason: String },

    #[error("{path}: value out of range: {reason}")]
    ValueOutOfRange { path: PathBuf, reason: String },

    #[error("{path}: timestamps are not strictly increasing (at {timestamp})")]
    NonMonotonicTime { path: PathBuf, timestamp: f64 },

    #[error("world contains no landmarks")]
    EmptyWorld,

    #[error("need at least 3 points with radial velocity, got {0}")]
    InsufficientDoppler(usize),

    #[error("ego-velocity estimate is not valid")]
    InvalidEstimate,

    #[error("expected {expected} motions for {scans} scans, got {got}")]
    MotionCountMismatch {
        scans: usize,
        expected: usize,
        got: usize,
    },

    #[error("no NDT cell has enough weighted points")]
    EmptyMap,

    #[error("no trajectory segment of length {0} m")]
    NoOverlap(f64),

    #[error("time alignment failed: {0}")]
    TimeAlignmentFailure(String),

    #[error("insufficient input: {0}")]
    InsufficientInput(String),

    #[error("config: missing key `{0}`")]
    MissingConfigKey(String),

    #[error("config: unknown key `{0}`")]
    UnknownConfigKey(String),

    #[error("config: invalid value for `{key}`: {reason}")]
    InvalidConfigValue { key: String, reason: String },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

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

    pub(crate) fn malformed(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::MalformedFile {
            path: path.into(),
            reason: reason.into(),
        }
    }

    pub(crate) fn out_of_range(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::ValueOutOfRange {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
