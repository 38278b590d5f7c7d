//! Lightweight two-stage SDR-to-HDR reconstruction.
//!
//! The crate bundles the network ([`net`]), a camera-pipeline degradation
//! simulator ([`degrade`]), raster I/O ([`imageio`]), desk-scale training
//! ([`train`]), metrics and benchmarking ([`eval`]) and the command-line
//! front end ([`cli`]).

pub mod cli;
pub mod degrade;
mod error;
pub mod eval;
pub mod image;
pub mod imageio;
pub mod kv;
pub mod net;
pub mod train;

pub use error::{Error, Result};
pub use image::{CodeImage, Domain, Image};
pub use kv::KeyValues;
pub use lhdr_tensor as tensor;
