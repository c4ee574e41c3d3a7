use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// Grid step coarser than half a wavelength.
    #[error("sampling violation: {0}")]
    Sampling(String),

    /// Points or regions that are empty, inverted or outside the grid.
    #[error("geometry error: {0}")]
    Geometry(String),

    /// Beam, codebook or search parameters outside their domain.
    #[error("parameter error: {0}")]
    Parameter(String),

    /// An oracle was asked for something it cannot model (e.g. obstacles).
    #[error("unsupported oracle: {0}")]
    UnsupportedOracle(String),

    /// Malformed numeric input such as non-finite probabilities.
    #[error("input error: {0}")]
    Input(String),

    #[error("dataset size error: {0}")]
    Size(String),

    #[error("format error: {0}")]
    Format(#[from] FormatError),

    #[error("weights error: {0}")]
    Weights(#[from] WeightsError),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Failures reading the binary record and field-dump containers.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("record {index}: label {label} out of range (< {bound})")]
    LabelOutOfRange { index: usize, label: usize, bound: usize },
    #[error("inconsistent header: {0}")]
    Header(String),
}

/// Failures loading or validating a network weights container.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum WeightsError {
    #[error("bad magic: expected \"AMPW0001\", found {0:?}")]
    BadMagic(String),
    #[error("unsupported weights version {0}")]
    UnsupportedVersion(u32),
    #[error("tensor {name}: expected shape {expected:?}, found {found:?}")]
    Shape { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("tensor {0} contains a non-finite value")]
    NonFinite(String),
    #[error("tensor {0} is missing")]
    Missing(String),
    #[error("unexpected tensor {0}")]
    Unexpected(String),
    #[error("invalid descriptor: {0}")]
    Descriptor(String),
    #[error("architecture mismatch: {0}")]
    Mismatch(String),
    #[error("batch-norm variance in {0} is negative")]
    NegativeVariance(String),
    #[error("truncated weights file: {0}")]
    Truncated(String),
}
