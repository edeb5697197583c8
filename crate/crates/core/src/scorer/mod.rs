//! The classifier contract consumed by the explainability code.

mod adam;
mod analytic;
mod mlp;

pub use adam::{adam_step, AdamConfig, OptimizerState};
pub use analytic::AnalyticScorer;
pub use mlp::{MlpArch, Pooling, TrainableScorer, MlpTrace};

use alloc::vec::Vec;

use crate::error::bail;
use crate::math::sigmoid;
use crate::volume::MultiVolume;
use crate::Result;

/// Gradient of the logit with respect to every voxel, one vector per channel.
pub type InputGradient = Vec<Vec<f64>>;

/// Maps a (possibly multimodal) volume to a raw logit.
///
/// `score` must be a pure function of the input and fixed parameters.
pub trait Scorer {
    fn score(&self, input: &MultiVolume) -> Result<f64>;

    fn probability(&self, input: &MultiVolume) -> Result<f64> {
        self.score(input).map(sigmoid)
    }

    fn has_input_gradient(&self) -> bool {
        false
    }

    fn input_gradient(&self, _input: &MultiVolume) -> Result<InputGradient> {
        bail!(Capability, "scorer does not expose input gradients")
    }
}

impl<S: Scorer + ?Sized> Scorer for &S {
    fn score(&self, input: &MultiVolume) -> Result<f64> {
        (**self).score(input)
    }

    fn has_input_gradient(&self) -> bool {
        (**self).has_input_gradient()
    }

    fn input_gradient(&self, input: &MultiVolume) -> Result<InputGradient> {
        (**self).input_gradient(input)
    }
}
