//! Error type shared by every module in the crate.

use thiserror::Error;

/// Everything that can go wrong between reading a waveform and emitting an
/// alarm decision. Variants are grouped by the stage that raises them so a
/// caller (the CLI in particular) can map them to coarse outcome classes
/// without string matching.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed CSV record. `line` is 1-based and counts the header.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Timestamps are missing, non-increasing, or not on a uniform grid.
    #[error("sampling error: {0}")]
    Sampling(String),

    /// An input that must contain data is empty.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// A configuration value is out of its documented range.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A requested time interval falls outside the data or is empty.
    #[error("time range error: {0}")]
    Range(String),

    /// Not enough samples or columns for the requested operation.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// Matrix or vector dimensions do not line up.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// An input value is NaN or infinite.
    #[error("non-finite input: {0}")]
    NonFinite(String),

    /// The least-squares normal equations are rank deficient beyond what the
    /// ridge term can rescue, typically because the signal is constant.
    #[error("singular fit: {0}")]
    SingularFit(String),

    /// A numeric routine failed to converge or produced a non-finite result.
    #[error("numeric error: {0}")]
    Numeric(String),

    /// Spectrum confinement needs a diagonalizable, well-conditioned
    /// eigenvector basis and did not get one.
    #[error("confinement error: {0}")]
    Confinement(String),

    /// A model and a waveform (or two waveforms) disagree on sampling or
    /// dimensions in a way that makes them unusable together.
    #[error("incompatible inputs: {0}")]
    Incompatible(String),

    /// Serialized model or configuration that does not describe a valid object.
    #[error("invalid file: {0}")]
    InvalidFile(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
