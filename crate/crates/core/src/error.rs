use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed WAV: {0}")]
    MalformedWav(String),
    #[error("unsupported audio format: {0}")]
    UnsupportedFormat(String),
    #[error("audio contains no samples")]
    EmptyAudio,
    #[error("invalid audio clip: {0}")]
    InvalidClip(String),
    #[error("clip too short: need at least {needed} samples, got {actual}")]
    ClipTooShort { needed: usize, actual: usize },
    #[error("length {0} is not a power of two >= 2")]
    NotPowerOfTwo(usize),
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
    #[error("non-finite loss at epoch {epoch}, step {step}")]
    NonFiniteLoss { epoch: usize, step: usize },
    #[error("malformed model file: {0}")]
    MalformedModelFile(String),
    #[error("malformed feature cache: {0}")]
    MalformedFeatureCache(String),
    #[error("no feature vectors to score")]
    EmptyFeatures,
    #[error("evaluation needs both normal and abnormal entries ({n_normal} normal, {n_abnormal} abnormal)")]
    SingleClassOnly { n_normal: usize, n_abnormal: usize },
    #[error("unparsable filename: {0}")]
    UnparsableFilename(String),
    #[error("scheme {0} selects no entries")]
    EmptySubset(String),
    #[error("abnormal entry {0} assigned to the train split")]
    AbnormalInTrain(String),
    #[error("malformed manifest: {0}")]
    MalformedManifest(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numeric pipeline itself rather than of its inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFiniteLoss { .. })
    }
}
