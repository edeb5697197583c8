//! File formats, parallel orchestration and the command line around `layer-core`.
//!
//! Volumes, masks and checkpoints use small little-endian binary formats;
//! reports are JSON envelopes with published schemas plus flat CSV tables.

pub mod checkpoint;
pub mod cli;
mod error;
pub mod format;
pub mod manifest;
pub mod output;
pub mod pipeline;
pub mod svg;

pub use error::{Error, Result};
