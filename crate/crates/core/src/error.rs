use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("unrecognized image format")]
    UnsupportedFormat,
    #[error("corrupt image stream: {0}")]
    CorruptStream(String),
    #[error("image has a zero dimension")]
    ZeroDimension,
    #[error("pixel buffer length {len} does not match {width}x{height}")]
    DimensionMismatch { width: usize, height: usize, len: usize },
    #[error("plane contains a non-finite value")]
    NonFiniteValue,
    #[error("blur extent {extent} too large (limit {limit})")]
    ExtentTooLarge { extent: u32, limit: u32 },
    #[error("image {width}x{height} is too small for the {operator} operator")]
    ImageTooSmall { width: usize, height: usize, operator: &'static str },
    #[error("singular value iteration did not converge within {cap} steps")]
    ConvergenceFailure { cap: usize },
    #[error("all singular values are zero")]
    ZeroSpectrum,
    #[error("spectrum is identically zero")]
    ZeroImage,
    #[error("training set needs at least two rows")]
    EmptyTrainingSet,
    #[error("training labels contain a single class")]
    SingleClassTraining,
    #[error("training loss became non-finite")]
    NonFiniteLoss,
    #[error("feature parameter mismatch: {0}")]
    ParamMismatch(String),
    #[error("feature `{0}` is not available in this row")]
    MissingFeature(&'static str),
    #[error("path not found: {}", .0.display())]
    PathNotFound(PathBuf),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable variant name, used as the `error` field of report rows.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::UnsupportedFormat => "UnsupportedFormat",
            Error::CorruptStream(_) => "CorruptStream",
            Error::ZeroDimension => "ZeroDimension",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::NonFiniteValue => "NonFiniteValue",
            Error::ExtentTooLarge { .. } => "ExtentTooLarge",
            Error::ImageTooSmall { .. } => "ImageTooSmall",
            Error::ConvergenceFailure { .. } => "ConvergenceFailure",
            Error::ZeroSpectrum => "ZeroSpectrum",
            Error::ZeroImage => "ZeroImage",
            Error::EmptyTrainingSet => "EmptyTrainingSet",
            Error::SingleClassTraining => "SingleClassTraining",
            Error::NonFiniteLoss => "NonFiniteLoss",
            Error::ParamMismatch(_) => "ParamMismatch",
            Error::MissingFeature(_) => "MissingFeature",
            Error::PathNotFound(_) => "PathNotFound",
            Error::InvalidArgument(_) => "InvalidArgument",
            Error::Io(_) => "Io",
            Error::Csv(_) => "Csv",
            Error::Json(_) => "Json",
        }
    }
}
