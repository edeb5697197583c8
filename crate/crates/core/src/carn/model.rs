use alloc::vec;
use alloc::vec::Vec;

use super::AirWeightGenerator;
use crate::error::bail;
use crate::math::{bce_with_logit, sigmoid};
use crate::scorer::{InputGradient, MlpArch, MlpTrace, Scorer, TrainableScorer};
use crate::volume::MultiVolume;
use crate::Result;

/// Classifier with an optional learned voxel weight map in front of it:
/// `logit = C(G ⊙ I)`.
#[derive(Clone, Debug, PartialEq)]
pub struct CarnModel {
    classifier: TrainableScorer,
    air: Option<AirWeightGenerator>,
}

/// Parameter gradients for both components.
#[derive(Clone, Debug, PartialEq)]
pub struct CarnGradients {
    pub classifier: Vec<f64>,
    pub air: Vec<f64>,
}

impl CarnGradients {
    pub fn zero(&mut self) {
        self.classifier.iter_mut().for_each(|g| *g = 0.0);
        self.air.iter_mut().for_each(|g| *g = 0.0);
    }

    pub fn scale(&mut self, k: f64) {
        self.classifier.iter_mut().chain(self.air.iter_mut()).for_each(|g| *g *= k);
    }
}

impl CarnModel {
    pub fn new(arch: MlpArch, air_grid: Option<usize>, seed: u64) -> Result<Self> {
        let classifier = TrainableScorer::new(arch, seed)?;
        let air = match air_grid {
            Some(g) => Some(AirWeightGenerator::new(arch.dims, arch.channels, g)?),
            None => None,
        };
        Ok(CarnModel { classifier, air })
    }

    pub fn from_parts(classifier: TrainableScorer, air: Option<AirWeightGenerator>) -> Result<Self> {
        if let Some(a) = &air {
            let arch = classifier.arch();
            if a.dims() != arch.dims || a.channels() != arch.channels {
                bail!(Shape, "weight generator and classifier disagree on the input shape");
            }
        }
        Ok(CarnModel { classifier, air })
    }

    pub fn classifier(&self) -> &TrainableScorer {
        &self.classifier
    }

    pub fn classifier_mut(&mut self) -> &mut TrainableScorer {
        &mut self.classifier
    }

    pub fn air(&self) -> Option<&AirWeightGenerator> {
        self.air.as_ref()
    }

    pub fn air_mut(&mut self) -> Option<&mut AirWeightGenerator> {
        self.air.as_mut()
    }

    pub fn arch(&self) -> MlpArch {
        self.classifier.arch()
    }

    pub fn gradients(&self) -> CarnGradients {
        CarnGradients {
            classifier: vec![0.0; self.classifier.params().len()],
            air: vec![0.0; self.air.as_ref().map_or(0, |a| a.params().len())],
        }
    }

    /// Copy with every parameter freshly initialised for `seed`.
    pub fn randomize(&self, seed: u64) -> Self {
        let mut m = self.clone();
        m.classifier.reinitialize(seed);
        if let Some(a) = m.air.as_mut() {
            a.reset();
        }
        m
    }

    fn maps(&self) -> Option<Vec<&[f64]>> {
        self.air.as_ref().map(|a| (0..a.channels()).map(|c| a.weight_map(c)).collect())
    }

    pub fn trace(&self, input: &MultiVolume) -> Result<MlpTrace> {
        let maps = self.maps();
        let f = self.classifier.features_weighted(input, maps.as_deref())?;
        Ok(self.classifier.forward_features(f))
    }

    /// Binary cross-entropy on the logit; accumulates `weight · ∂loss/∂θ` into `grads`.
    /// Returns `(loss, logit)`.
    pub fn loss_backward(
        &self,
        input: &MultiVolume,
        target: f64,
        weight: f64,
        grads: &mut CarnGradients,
    ) -> Result<(f64, f64)> {
        let t = self.trace(input)?;
        let loss = bce_with_logit(t.logit, target);
        let dlogit = (sigmoid(t.logit) - target) * weight;
        let dfeat = self.classifier.backward(&t, dlogit, &mut grads.classifier);
        if let Some(air) = &self.air {
            let dx = self.classifier.feature_to_voxel_gradient(&dfeat);
            air.backward(input, &dx, &mut grads.air)?;
        }
        Ok((loss, t.logit))
    }

    /// BCE loss without gradients.
    pub fn loss(&self, input: &MultiVolume, target: f64) -> Result<f64> {
        Ok(bce_with_logit(self.score(input)?, target))
    }
}

impl Scorer for CarnModel {
    fn score(&self, input: &MultiVolume) -> Result<f64> {
        Ok(self.trace(input)?.logit)
    }

    fn has_input_gradient(&self) -> bool {
        true
    }

    fn input_gradient(&self, input: &MultiVolume) -> Result<InputGradient> {
        let t = self.trace(input)?;
        let mut scratch = vec![0.0; self.classifier.params().len()];
        let dfeat = self.classifier.backward(&t, 1.0, &mut scratch);
        let mut g = self.classifier.feature_to_voxel_gradient(&dfeat);
        if let Some(air) = &self.air {
            for (c, gc) in g.iter_mut().enumerate() {
                for (gv, w) in gc.iter_mut().zip(air.weight_map(c)) {
                    *gv *= w;
                }
            }
        }
        Ok(g)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;
    use crate::volume::{Dims, Modality, VolumeGrid};
    use rand::Rng;

    fn setup(seed: u64) -> (CarnModel, MultiVolume) {
        let arch = MlpArch { dims: Dims::new(9, 8, 6), channels: 2, pool: 3, hidden: 5 };
        let mut m = CarnModel::new(arch, Some(3), seed).unwrap();
        let mut rng = substream(seed, 5);
        m.air_mut().unwrap().with_params_mut(|p| p.iter_mut().for_each(|x| *x = rng.random_range(-1.5..1.5)));
        let ch = |m: Modality, rng: &mut _| {
            let v = (0..arch.dims.len()).map(|_| Rng::random_range(rng, 0.0..2.0)).collect();
            VolumeGrid::new(arch.dims, m, v).unwrap()
        };
        let x = MultiVolume::new(vec![ch(Modality::BMode, &mut rng), ch(Modality::Swe, &mut rng)]).unwrap();
        (m, x)
    }

    #[test]
    fn weight_grid_gradient_matches_central_differences() {
        let h = 1e-3f32;
        for seed in 0..4 {
            let (m, x) = setup(seed);
            let mut g = m.gradients();
            m.loss_backward(&x, 1.0, 1.0, &mut g).unwrap();
            let base = m.trace(&x).unwrap();
            for k in 0..g.air.len() {
                let shifted = |dv: f32| {
                    let mut c = m.clone();
                    let p = c.air_mut().unwrap().with_params_mut(|p| {
                        p[k] += dv;
                        p[k]
                    });
                    (c.loss(&x, 1.0).unwrap(), p, c.trace(&x).unwrap())
                };
                let (lu, pu, tu) = shifted(h);
                let (ld, pd, td) = shifted(-h);
                if !TrainableScorer::same_activation_pattern(&tu, &base)
                    || !TrainableScorer::same_activation_pattern(&td, &base)
                {
                    continue;
                }
                let fd = (lu - ld) / (pu - pd) as f64;
                let err = (g.air[k] - fd).abs() / g.air[k].abs().max(fd.abs()).max(1e-8);
                assert!(err < 1e-4, "node {k}: {} vs {fd}", g.air[k]);
            }
        }
    }

    #[test]
    fn weight_grid_changes_the_logit() {
        let (mut m, x) = setup(1);
        let a = m.score(&x).unwrap();
        m.air_mut().unwrap().reset();
        assert_ne!(a, m.score(&x).unwrap());
    }
}
