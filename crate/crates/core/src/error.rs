use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unknown CFA pattern {0:?}")]
    UnknownPattern(String),

    #[error("odd image dimensions {height}x{width}; Bayer images need full 2x2 cells")]
    OddDimensions { height: usize, width: usize },

    #[error("invalid image: {0}")]
    InvalidImage(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("malformed {format} file: {reason}")]
    Malformed { format: &'static str, reason: String },

    #[error("format {format} cannot hold a {kind} image")]
    FormatMismatch { format: &'static str, kind: &'static str },

    #[error("invalid sidecar metadata: {0}")]
    Sidecar(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid pipeline: {0}")]
    Pipeline(String),

    #[error("stage {0} cannot be inverted")]
    NonInvertible(String),

    #[error("singular matrix (|det| = {0:e})")]
    SingularMatrix(f64),

    #[error("curve is not strictly increasing on [0, 1]: {0}")]
    NonMonotone(String),

    #[error("invalid distribution: {0}")]
    Distribution(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("PNG decoding failed: {0}")]
    PngDecode(#[from] png::DecodingError),

    #[error("PNG encoding failed: {0}")]
    PngEncode(#[from] png::EncodingError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
