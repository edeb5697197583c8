use alloc::vec;

use super::{InputGradient, Scorer};
use crate::error::bail;
use crate::volume::{Layer, LayerMaskSet, MultiVolume};
use crate::Result;

/// Closed-form scorer: `b + Σ_i w_i · mean(V over M_i)`, summed over channels.
///
/// The mean over an empty layer is 0.
#[derive(Clone, Debug, PartialEq)]
pub struct AnalyticScorer {
    weights: [f64; 6],
    bias: f64,
    masks: LayerMaskSet,
    counts: [usize; 7],
}

impl AnalyticScorer {
    pub fn new(weights: [f64; 6], bias: f64, masks: LayerMaskSet) -> Self {
        let counts = masks.counts();
        AnalyticScorer { weights, bias, masks, counts }
    }

    pub fn weights(&self) -> &[f64; 6] {
        &self.weights
    }

    pub fn bias(&self) -> f64 {
        self.bias
    }

    pub fn masks(&self) -> &LayerMaskSet {
        &self.masks
    }

    pub fn weight(&self, layer: Layer) -> f64 {
        self.weights[layer.index()]
    }

    /// Per-layer means of one channel, index = layer code - 1.
    pub fn layer_means(&self, input: &MultiVolume, channel: usize) -> Result<[f64; 6]> {
        self.check(input)?;
        let mut sums = [0.0f64; 7];
        for (&l, &x) in self.masks.labels().iter().zip(input.channels()[channel].voxels()) {
            sums[l as usize] += x as f64;
        }
        let mut means = [0.0; 6];
        for i in 0..6 {
            let n = self.counts[i + 1];
            means[i] = if n == 0 { 0.0 } else { sums[i + 1] / n as f64 };
        }
        Ok(means)
    }

    fn check(&self, input: &MultiVolume) -> Result<()> {
        if input.dims() != self.masks.dims() {
            bail!(Shape, "input {} does not match scorer masks {}", input.dims(), self.masks.dims());
        }
        Ok(())
    }
}

impl Scorer for AnalyticScorer {
    fn score(&self, input: &MultiVolume) -> Result<f64> {
        let mut z = self.bias;
        for c in 0..input.channel_count() {
            let means = self.layer_means(input, c)?;
            z += self.weights.iter().zip(means).map(|(w, m)| w * m).sum::<f64>();
        }
        Ok(z)
    }

    fn has_input_gradient(&self) -> bool {
        true
    }

    fn input_gradient(&self, input: &MultiVolume) -> Result<InputGradient> {
        self.check(input)?;
        let mut per_code = [0.0f64; 7];
        for i in 0..6 {
            let n = self.counts[i + 1];
            if n > 0 {
                per_code[i + 1] = self.weights[i] / n as f64;
            }
        }
        let g: vec::Vec<f64> = self.masks.labels().iter().map(|&l| per_code[l as usize]).collect();
        Ok(vec![g; input.channel_count()])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::volume::{Dims, Modality, VolumeGrid};

    fn masks() -> LayerMaskSet {
        let d = Dims::new(4, 4, 4);
        LayerMaskSet::new(d, (0..64).map(|i| (i / 9) as u8 % 7).collect()).unwrap()
    }

    #[test]
    fn zero_weights_give_even_odds() {
        let m = masks();
        let s = AnalyticScorer::new([0.0; 6], 0.0, m.clone());
        let v = MultiVolume::single(VolumeGrid::filled(m.dims(), Modality::BMode, 7.0).unwrap());
        assert_eq!(s.score(&v).unwrap(), 0.0);
        assert_eq!(s.probability(&v).unwrap(), 0.5);
    }

    #[test]
    fn single_weight_reads_layer_mean() {
        let m = masks();
        let s = AnalyticScorer::new([2.0, 0.0, 0.0, 0.0, 0.0, 0.0], 0.0, m.clone());
        let v = MultiVolume::single(VolumeGrid::filled(m.dims(), Modality::BMode, 1.0).unwrap());
        assert_eq!(s.score(&v).unwrap(), 2.0);
    }

    #[test]
    fn gradient_is_weight_over_volume() {
        let m = masks();
        let w = [1.0, -2.0, 0.5, 3.0, 0.0, 4.0];
        let s = AnalyticScorer::new(w, 0.3, m.clone());
        let v = MultiVolume::single(VolumeGrid::filled(m.dims(), Modality::BMode, 1.0).unwrap());
        let g = s.input_gradient(&v).unwrap();
        let counts = m.counts();
        for (i, &l) in m.labels().iter().enumerate() {
            let expect = if l == 0 { 0.0 } else { w[l as usize - 1] / counts[l as usize] as f64 };
            assert_eq!(g[0][i], expect);
        }
    }
}
