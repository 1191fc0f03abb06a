use std::path::PathBuf;

/// Broad failure class, used for CLI exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Runtime,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid calibration: {0}")]
    InvalidCalibration(String),
    #[error("degenerate homography: {0}")]
    DegenerateHomography(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("mask has no nonzero entries")]
    EmptyMask,
    #[error("view set is empty")]
    EmptyViews,
    #[error("dataset contains a single class")]
    SingleClass,
    #[error("ground truth is empty")]
    EmptyGroundTruth,
    #[error("frame {got} does not follow frame {expected_after}")]
    NonConsecutiveFrame { expected_after: u64, got: u64 },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid data: {0}")]
    Data(String),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Config(_) | Error::InvalidCalibration(_) => ErrorKind::Config,
            Error::File { .. }
            | Error::Data(_)
            | Error::Json(_)
            | Error::Csv(_)
            | Error::Image(_)
            | Error::EmptyGroundTruth
            | Error::SingleClass => ErrorKind::Data,
            _ => ErrorKind::Runtime,
        }
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File { path: path.into(), source }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
