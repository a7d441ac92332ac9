//! Error taxonomy shared by every stage of the pipeline.
//!
//! Container parsing keeps one variant per failure class (magic, version,
//! truncation, checksum, semantic invariants) so callers and tests can tell
//! a damaged file from a well-formed file describing an invalid pyramid.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid pyramid: {0}")]
    InvalidPyramid(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported container version {found} (expected {expected})")]
    VersionMismatch { expected: u16, found: u16 },

    #[error("truncated container: needed {needed} more bytes at offset {offset}")]
    Truncated { offset: usize, needed: usize },

    #[error("container has {extra} trailing bytes")]
    TrailingBytes { extra: usize },

    #[error("checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    ChecksumMismatch { stored: u64, computed: u64 },

    #[error("phi {phi} outside [{min}, {max}]")]
    PhiOutOfRange { phi: f64, min: f64, max: f64 },

    #[error("non-finite input at scale {scale}, element {index}")]
    NonFiniteInput { scale: usize, index: usize },

    #[error("corrupt bitstream: {0}")]
    CorruptBitstream(String),

    #[error("symbol count mismatch: header says {expected}, decoded {actual}")]
    SymbolCountMismatch { expected: u64, actual: u64 },

    #[error("not enough usable samples: have {have}, need {need}")]
    InsufficientSamples { have: usize, need: usize },

    #[error("degenerate fit design: {0}")]
    DegenerateDesign(String),

    #[error("correlation undefined: {0}")]
    CorrelationUndefined(String),

    #[error("infeasible rate target: {0}")]
    InfeasibleTarget(String),

    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error(
        "curves do not overlap in accuracy: [{test_lo}, {test_hi}] vs [{anchor_lo}, {anchor_hi}]"
    )]
    NoOverlap {
        test_lo: f64,
        test_hi: f64,
        anchor_lo: f64,
        anchor_hi: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("failed to parse {path}: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
