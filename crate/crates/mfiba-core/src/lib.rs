//! Multiscale feature compression with importance-driven bit allocation.

pub mod allocator;
pub mod codec;
pub mod container;
pub mod crc64;
pub mod error;
pub mod eval;
pub mod fsutil;
mod linalg;
pub mod mfip;
pub mod pyramid;
pub mod rdmodel;
pub mod synth;
pub mod task;

pub use error::{Error, Result};
