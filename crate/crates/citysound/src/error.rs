//! Crate-wide error type.
//!
//! One enum covers every failure mode of the pipeline; the CLI maps it onto
//! process exit codes (1 usage, 2 data, 3 numeric).

use std::path::PathBuf;
use thiserror::Error;

/// Errors produced anywhere in the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed file or header (WAV chunks, cache magic, manifest layout).
    #[error("format error: {0}")]
    Format(String),

    /// Well-formed input the pipeline does not handle (e.g. 32-bit float WAV).
    #[error("unsupported input: {0}")]
    Unsupported(String),

    /// Token outside the fixed scene/city vocabularies.
    #[error("unknown vocabulary token: {0}")]
    Vocabulary(String),

    /// Referenced audio file does not exist.
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),

    /// Manifest metadata disagrees with the filename-derived metadata.
    #[error("inconsistent metadata: {0}")]
    Consistency(String),

    /// A (scene, city) stratum is too small or absent for the requested split.
    #[error("stratum error: {0}")]
    Stratum(String),

    /// An operation that needs data received none.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// Tensor or matrix dimensions do not conform.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// Mel filterbank cannot be realised at the requested FFT resolution.
    #[error("resolution error: {0}")]
    Resolution(String),

    /// Invalid configuration value.
    #[error("config error: {0}")]
    Config(String),

    /// Batch too small for the requested mode (batch norm needs >= 2 to train).
    #[error("batch size error: {0}")]
    BatchSize(String),

    /// Non-finite value where the numerics must stay finite.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// Prediction matrix does not match the label scheme an operation expects.
    #[error("scheme mismatch: {0}")]
    Scheme(String),

    /// Class index outside the scheme's range.
    #[error("index out of range: {0}")]
    Index(String),

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit code the CLI reports for this error.
    ///
    /// 1 = usage error, 2 = data error, 3 = numeric failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Numeric(_) => 3,
            _ => 2,
        }
    }
}

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
