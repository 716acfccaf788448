//! Crate-wide error type.
//!
//! Malformed container files map to distinct variants (`BadMagic`,
//! `UnsupportedVersion`, `DigestMismatch`, `Truncated`, `CorruptData`) so
//! callers can tell corruption classes apart.

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Input contained NaN or infinite values, or an intermediate overflowed.
    #[error("non-finite value encountered in {context}")]
    NonFinite { context: &'static str },

    /// Buffer length does not match the declared dimensions.
    #[error("dimension mismatch: {rows}x{cols} needs {expected} values, got {found}")]
    InvalidDimensions {
        rows: usize,
        cols: usize,
        expected: usize,
        found: usize,
    },

    /// Two tensors that must share a shape do not.
    #[error("shape mismatch: expected {expected_rows}x{expected_cols}, found {found_rows}x{found_cols}")]
    ShapeMismatch {
        expected_rows: usize,
        expected_cols: usize,
        found_rows: usize,
        found_cols: usize,
    },

    /// A vector length does not match what the consumer requires.
    #[error("length mismatch in {context}: expected {expected}, got {found}")]
    LengthMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },

    /// A ternary code outside {-1, 0, +1}.
    #[error("invalid ternary code {value} at ({row}, {col})")]
    InvalidCode { value: i8, row: usize, col: usize },

    /// A packed buffer holds the reserved bit pattern 0b10 in an occupied
    /// slot, or nonzero padding.
    #[error("corrupt packed data at byte {byte_offset}, slot {slot}")]
    CorruptData { byte_offset: usize, slot: usize },

    /// A scale is zero, negative, or non-finite.
    #[error("invalid scale {value} at group {group}")]
    InvalidScale { value: f32, group: usize },

    /// Calibration was asked to run with no samples.
    #[error("calibration sample set is empty")]
    EmptySampleSet,

    /// The layer-selection pattern failed to compile.
    #[error("invalid layer pattern {pattern:?}: {source}")]
    InvalidPattern {
        pattern: String,
        source: regex::Error,
    },

    /// Configuration field outside its valid range.
    #[error("invalid config: {reason}")]
    InvalidConfig { reason: String },

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// Two tensors with the same name in one checkpoint.
    #[error("duplicate tensor name {name:?}")]
    NameCollision { name: String },

    /// The file does not start with the container magic.
    #[error("bad magic {found:?}, not a TQCK checkpoint")]
    BadMagic { found: [u8; 4] },

    /// The container version is newer than this build understands.
    #[error("unsupported checkpoint version {found}")]
    UnsupportedVersion { found: u32 },

    /// A stored digest does not match the bytes on disk.
    #[error("digest mismatch in {region}")]
    DigestMismatch { region: String },

    /// A region or field extends past the end of the file.
    #[error("truncated or out-of-bounds region: {what}")]
    Truncated { what: String },

    /// An index entry is structurally invalid.
    #[error("invalid record {name:?}: {reason}")]
    InvalidRecord { name: String, reason: String },

    /// Lookup of a tensor that is not in the checkpoint.
    #[error("no tensor named {name:?} in checkpoint")]
    TensorNotFound { name: String },
}
