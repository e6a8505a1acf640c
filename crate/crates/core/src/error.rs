use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid scale divisor {divisor} for a {width}x{height} image")]
    InvalidScale {
        divisor: usize,
        width: usize,
        height: usize,
    },
    #[error("region of interest does not intersect the frame")]
    EmptyRoi,
    #[error("image is {width}x{height}, at least {min}x{min} required")]
    ImageTooSmall {
        width: usize,
        height: usize,
        min: usize,
    },
    #[error("buffer of {len} values does not match {width}x{height}")]
    DimensionMismatch {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("invalid scene: {0}")]
    InvalidSpec(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },
    #[error("dataset error: {0}")]
    DatasetFormat(String),
    #[error("no outcomes to aggregate")]
    EmptyInput,
    #[error("image codec error: {0}")]
    Codec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Failures of the conic fit and the conic reductions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum FitError {
    #[error("at least 5 points are needed, got {0}")]
    TooFewPoints(usize),
    #[error("points admit no ellipse solution")]
    DegenerateFit,
    #[error("conic is not an ellipse")]
    NotAnEllipse,
}

impl From<image::ImageError> for Error {
    fn from(e: image::ImageError) -> Self {
        Error::Codec(e.to_string())
    }
}
