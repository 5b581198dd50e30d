use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by the statistic pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("image {width}x{height} is smaller than crop size {size}")]
    TooSmall {
        width: usize,
        height: usize,
        size: usize,
    },

    #[error("no decodable images under {0}")]
    EmptyCorpus(PathBuf),

    #[error("image has zero mean luminance")]
    ZeroMeanImage,

    #[error("degenerate sample: {0}")]
    DegenerateSample(&'static str),

    #[error("histogram edges must be strictly increasing and finite")]
    BadEdges,

    #[error("histograms have mismatched edges")]
    MismatchedEdges,

    #[error("empty histogram list")]
    EmptyList,

    #[error("sigma must be positive and finite, got {0}")]
    BadSigma(f64),

    #[error("image {width}x{height} is smaller than kernel side {kernel}")]
    ImageSmallerThanKernel {
        width: usize,
        height: usize,
        kernel: usize,
    },

    #[error("no strictly positive samples")]
    NoPositiveSamples,

    #[error("need at least {needed} positive samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("root finder did not converge: {0}")]
    NoConvergence(&'static str),

    #[error("filter side must be at least 2, got {0}")]
    BadSide(usize),

    #[error("insufficient support for fit: {0}")]
    InsufficientSupport(String),

    #[error("power spectrum needs a square power-of-two image, got {width}x{height}")]
    NonSquareImage { width: usize, height: usize },

    #[error("base frequency {0} is not on the frequency grid")]
    BaseFreqOffGrid(f64),

    #[error("impulse period {period} exceeds image size {size}")]
    PeriodExceedsImage { period: usize, size: usize },

    #[error("bad configuration: {0}")]
    BadConfig(String),

    #[error("every image in the corpus failed")]
    AllImagesFailed,

    #[error("analysis configs differ in: {}", .0.join(", "))]
    ConfigMismatch(Vec<String>),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command line front end.
    ///
    /// 2 = bad input data, 3 = bad configuration, 4 = internal failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Decode { .. }
            | Error::TooSmall { .. }
            | Error::EmptyCorpus(_)
            | Error::AllImagesFailed
            | Error::Io { .. }
            | Error::Json(_)
            | Error::Csv(_)
            | Error::ZeroMeanImage
            | Error::NonSquareImage { .. }
            | Error::ImageSmallerThanKernel { .. } => 2,
            Error::BadSigma(_)
            | Error::BadSide(_)
            | Error::BadConfig(_)
            | Error::ConfigMismatch(_)
            | Error::BaseFreqOffGrid(_)
            | Error::PeriodExceedsImage { .. }
            | Error::BadEdges => 3,
            _ => 4,
        }
    }

    /// Short machine-readable error kind.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Decode { .. } => "DecodeError",
            Error::TooSmall { .. } => "TooSmall",
            Error::EmptyCorpus(_) => "EmptyCorpus",
            Error::ZeroMeanImage => "ZeroMeanImage",
            Error::DegenerateSample(_) => "DegenerateSample",
            Error::BadEdges => "BadEdges",
            Error::MismatchedEdges => "MismatchedEdges",
            Error::EmptyList => "EmptyList",
            Error::BadSigma(_) => "BadSigma",
            Error::ImageSmallerThanKernel { .. } => "ImageSmallerThanKernel",
            Error::NoPositiveSamples => "NoPositiveSamples",
            Error::TooFewSamples { .. } => "TooFewSamples",
            Error::NoConvergence(_) => "NoConvergence",
            Error::BadSide(_) => "BadSide",
            Error::InsufficientSupport(_) => "InsufficientSupport",
            Error::NonSquareImage { .. } => "NonSquareImage",
            Error::BaseFreqOffGrid(_) => "BaseFreqOffGrid",
            Error::PeriodExceedsImage { .. } => "PeriodExceedsImage",
            Error::BadConfig(_) => "BadConfig",
            Error::AllImagesFailed => "AllImagesFailed",
            Error::ConfigMismatch(_) => "ConfigMismatch",
            Error::Io { .. } => "IoError",
            Error::Json(_) => "JsonError",
            Error::Csv(_) => "CsvError",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
