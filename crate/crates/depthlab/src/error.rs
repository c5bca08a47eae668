//! Crate-wide error type.
//!
//! Every fallible operation in the crate returns [`Error`]; the variants map
//! one-to-one onto the failure modes of the individual modules so callers can
//! match on exactly the condition they care about.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A depth map whose valid values are all equal (no usable range).
    #[error("degenerate depth map: all valid values are equal")]
    DegenerateDepth,

    /// A depth map with no valid pixels at all.
    #[error("empty depth map: no valid pixels")]
    EmptyDepth,

    /// An operation received a map in the wrong unit convention.
    #[error("unit mismatch: expected {expected}, got {got}")]
    UnitMismatch { expected: String, got: String },

    /// Malformed file contents (bad header, truncated payload, ...).
    #[error("format error: {0}")]
    Format(String),

    /// Filesystem failure, with the offending path when known.
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    /// Raster dimensions incompatible with the requested operation.
    #[error("shape error: {0}")]
    Shape(String),

    /// A scalar argument outside its documented range.
    #[error("range error: {0}")]
    Range(String),

    /// Invalid hyperparameter or configuration value.
    #[error("config error: {0}")]
    Config(String),

    /// Affine fitting cannot proceed: the source raster has zero variance.
    #[error("degenerate source: zero variance over jointly valid pixels")]
    DegenerateSource,

    /// Affine fitting cannot proceed: fewer than two jointly valid pixels.
    #[error("insufficient overlap: fewer than two jointly valid pixels")]
    InsufficientOverlap,

    /// The degradation oracle was asked to predict without a ground-truth map.
    #[error("missing ground truth: the degradation oracle needs a reference depth map")]
    MissingGroundTruth,

    /// A masked loss was evaluated against an all-zero mask.
    #[error("empty mask: no valid elements to average over")]
    EmptyMask,

    /// A named checkpoint required by an evaluation run does not exist.
    #[error("missing checkpoint: {0}")]
    MissingCheckpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
