use thiserror::Error;

/// Errors surfaced by the sketch, estimator and support routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid group: {0}")]
    InvalidGroup(String),
    #[error("group too large: total size {0} exceeds 2^31")]
    TooLarge(u128),
    #[error("group mismatch: {0}")]
    GroupMismatch(String),
    #[error("invalid sketch configuration: {0}")]
    InvalidConfig(String),
    #[error("cannot combine sketches: {0}")]
    CannotCombine(String),
    #[error("corrupt sketch: {0}")]
    CorruptSketch(String),
    #[error("integer register overflow at cell {cell}, column {column}")]
    Overflow { cell: i64, column: usize },
    #[error("domain error: {0}")]
    Domain(String),
    #[error("quadrature did not converge: {0}")]
    Quadrature(String),
    #[error("invalid characteristic table: {0}")]
    InvalidRhat(String),
    #[error("residue {j} out of range for modulus {p}")]
    OutOfRange { j: u64, p: u64 },
    #[error("no singleton samples were detected")]
    NoSamples,
    #[error("every sampling level is occupied; the sketch is too small for this cardinality")]
    Saturated,
}

pub type Result<T> = std::result::Result<T, Error>;
