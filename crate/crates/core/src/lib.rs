//! Layer-wise occlusion explainability for volumetric classifiers.
//!
//! The crate quantifies how anatomical layers of a 3-D volume drive a
//! classifier's logit. It contains the voxel and mask types, a synthetic
//! layered phantom generator, the scorer contract with an analytic and a
//! trainable implementation, the curriculum / re-weighting training loop,
//! the single- and multi-layer saliency engine, insertion/deletion
//! faithfulness metrics, a statistics kernel and hierarchical prediction
//! aggregation.
//!
//! Everything here is pure computation over in-memory data and builds
//! without `std`; file formats, parallel orchestration and the command line
//! live in the companion `layer` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod aggregate;
pub mod carn;
pub mod cohort;
mod error;
pub mod faithfulness;
pub mod math;
pub mod phantom;
pub mod rng;
pub mod saliency;
pub mod scorer;
pub mod stats;
pub mod volume;

pub use error::{Error, Result};
pub use volume::{Layer, LayerMaskSet, LayerSet, Modality, MultiVolume, VolumeGrid};
