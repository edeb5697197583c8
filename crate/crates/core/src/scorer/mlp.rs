use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{InputGradient, Scorer};
use crate::error::bail;
use crate::math;
use crate::rng::{mix, substream};
use crate::volume::{Dims, MultiVolume};
use crate::Result;

/// Shape of the desk-scale classifier.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArch {
    pub dims: Dims,
    pub channels: usize,
    /// Cells per axis of the average-pooling grid.
    pub pool: usize,
    pub hidden: usize,
}

impl MlpArch {
    pub fn new(dims: Dims, channels: usize) -> Self {
        MlpArch { dims, channels, pool: 8, hidden: 64 }
    }

    pub fn features(&self) -> usize {
        self.channels * self.pool * self.pool * self.pool
    }

    pub fn param_count(&self) -> usize {
        self.hidden * self.features() + 2 * self.hidden + 1
    }

    fn validate(&self) -> Result<()> {
        let d = self.dims;
        if self.channels == 0 || self.hidden == 0 || self.pool == 0 {
            bail!(Config, "channels, hidden width and pool size must be positive");
        }
        if d.nx < self.pool || d.ny < self.pool || d.nz < self.pool {
            bail!(Config, "grid {} is smaller than the {}³ pooling grid", d, self.pool);
        }
        Ok(())
    }
}

/// Average pooling onto a `pool³` grid; cell `c` along an axis of length `n`
/// covers `[c·n/pool, (c+1)·n/pool)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Pooling {
    dims: Dims,
    pool: usize,
    cell_of: Vec<u32>,
    counts: Vec<u32>,
}

impl Pooling {
    pub fn new(dims: Dims, pool: usize) -> Self {
        let axis = |n: usize| -> Vec<usize> { (0..n).map(|i| i * pool / n).collect() };
        let (bx, by, bz) = (axis(dims.nx), axis(dims.ny), axis(dims.nz));
        let mut cell_of = Vec::with_capacity(dims.len());
        let mut counts = vec![0u32; pool * pool * pool];
        for z in 0..dims.nz {
            for y in 0..dims.ny {
                for x in 0..dims.nx {
                    let c = bx[x] + pool * (by[y] + pool * bz[z]);
                    cell_of.push(c as u32);
                    counts[c] += 1;
                }
            }
        }
        Pooling { dims, pool, cell_of, counts }
    }

    pub fn cells(&self) -> usize {
        self.pool * self.pool * self.pool
    }

    pub fn cell_of(&self) -> &[u32] {
        &self.cell_of
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Writes `scale · mean` of each cell into `out`.
    pub fn pool_into(&self, voxels: &[f32], scale: f64, out: &mut [f64]) {
        for o in out.iter_mut() {
            *o = 0.0;
        }
        for (&c, &x) in self.cell_of.iter().zip(voxels) {
            out[c as usize] += x as f64;
        }
        for (o, &n) in out.iter_mut().zip(&self.counts) {
            *o = if n == 0 { 0.0 } else { *o * scale / n as f64 };
        }
    }

    /// Like [`pool_into`](Self::pool_into) on the voxel-wise product `weights ⊙ voxels`.
    pub fn pool_weighted_into(&self, voxels: &[f32], weights: &[f64], scale: f64, out: &mut [f64]) {
        for o in out.iter_mut() {
            *o = 0.0;
        }
        for ((&c, &x), &w) in self.cell_of.iter().zip(voxels).zip(weights) {
            out[c as usize] += x as f64 * w;
        }
        for (o, &n) in out.iter_mut().zip(&self.counts) {
            *o = if n == 0 { 0.0 } else { *o * scale / n as f64 };
        }
    }
}

/// Intermediate values of one forward pass.
#[derive(Clone, Debug)]
pub struct MlpTrace {
    pub features: Vec<f64>,
    pub pre: Vec<f64>,
    pub hidden: Vec<f64>,
    pub logit: f64,
}

/// Pool → dense(ReLU) → dense(scalar) classifier with exact gradients.
///
/// Parameter layout: `W1` (hidden × features, row major), `b1`, `w2`, `b2`.
/// Each channel is scaled by a fixed factor before pooling so that modalities
/// with different units share a common range; scaling keeps zero at zero.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainableScorer {
    arch: MlpArch,
    pooling: Pooling,
    scales: Vec<f32>,
    params: Vec<f32>,
}

impl TrainableScorer {
    /// Freshly initialised scorer (Glorot-uniform weights, zero biases).
    pub fn new(arch: MlpArch, seed: u64) -> Result<Self> {
        let mut s = Self::zeros(arch)?;
        s.reinitialize(seed);
        Ok(s)
    }

    pub fn zeros(arch: MlpArch) -> Result<Self> {
        arch.validate()?;
        Ok(TrainableScorer {
            arch,
            pooling: Pooling::new(arch.dims, arch.pool),
            scales: vec![1.0; arch.channels],
            params: vec![0.0; arch.param_count()],
        })
    }

    pub fn from_parts(arch: MlpArch, scales: Vec<f32>, params: Vec<f32>) -> Result<Self> {
        let mut s = Self::zeros(arch)?;
        if scales.len() != arch.channels {
            bail!(Shape, "{} channel scales for {} channels", scales.len(), arch.channels);
        }
        if params.len() != arch.param_count() {
            bail!(Shape, "{} parameters, architecture needs {}", params.len(), arch.param_count());
        }
        s.scales = scales;
        s.params = params;
        Ok(s)
    }

    pub fn arch(&self) -> MlpArch {
        self.arch
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f32] {
        &mut self.params
    }

    pub fn scales(&self) -> &[f32] {
        &self.scales
    }

    pub fn set_scales(&mut self, scales: Vec<f32>) -> Result<()> {
        if scales.len() != self.arch.channels || scales.iter().any(|s| !s.is_finite() || *s <= 0.0) {
            bail!(Config, "channel scales must be positive, one per channel");
        }
        self.scales = scales;
        Ok(())
    }

    pub fn pooling(&self) -> &Pooling {
        &self.pooling
    }

    fn offsets(&self) -> (usize, usize, usize, usize) {
        let f = self.arch.features();
        let h = self.arch.hidden;
        let w1 = 0;
        let b1 = h * f;
        let w2 = b1 + h;
        let b2 = w2 + h;
        (w1, b1, w2, b2)
    }

    /// Redraws every parameter from the initialisation scheme for `seed`.
    pub fn reinitialize(&mut self, seed: u64) {
        let f = self.arch.features();
        let h = self.arch.hidden;
        let (_, b1, w2, b2) = self.offsets();
        let mut rng = substream(seed, mix(&[0x4D4C_50, f as u64, h as u64]));
        let lim1 = math::sqrt(6.0 / (f + h) as f64);
        let lim2 = math::sqrt(6.0 / (h + 1) as f64);
        for p in &mut self.params[..b1] {
            *p = rng.random_range(-lim1..lim1) as f32;
        }
        for p in &mut self.params[b1..w2] {
            *p = 0.0;
        }
        for p in &mut self.params[w2..b2] {
            *p = rng.random_range(-lim2..lim2) as f32;
        }
        self.params[b2] = 0.0;
    }

    /// Copy with freshly initialised parameters; channel scales are kept.
    pub fn randomize(&self, seed: u64) -> Self {
        let mut s = self.clone();
        s.reinitialize(seed);
        s
    }

    /// Zeroes the output layer so the logit is 0 for every input.
    pub fn zero_output_layer(&mut self) {
        let (_, _, w2, _) = self.offsets();
        for p in &mut self.params[w2..] {
            *p = 0.0;
        }
    }

    fn check(&self, input: &MultiVolume) -> Result<()> {
        if input.dims() != self.arch.dims || input.channel_count() != self.arch.channels {
            bail!(
                Shape,
                "scorer expects {} channel(s) of {}, got {} of {}",
                self.arch.channels,
                self.arch.dims,
                input.channel_count(),
                input.dims()
            );
        }
        Ok(())
    }

    /// Scaled pooled features, channels concatenated.
    pub fn features(&self, input: &MultiVolume) -> Result<Vec<f64>> {
        self.features_weighted(input, None)
    }

    /// Pooled features of `maps[c] ⊙ channel c` when voxel weight maps are given.
    pub fn features_weighted(&self, input: &MultiVolume, maps: Option<&[&[f64]]>) -> Result<Vec<f64>> {
        self.check(input)?;
        let cells = self.pooling.cells();
        let mut f = vec![0.0; self.arch.features()];
        for (c, ch) in input.channels().iter().enumerate() {
            let out = &mut f[c * cells..(c + 1) * cells];
            let scale = self.scales[c] as f64;
            match maps {
                Some(m) => self.pooling.pool_weighted_into(ch.voxels(), m[c], scale, out),
                None => self.pooling.pool_into(ch.voxels(), scale, out),
            }
        }
        Ok(f)
    }

    pub fn forward_features(&self, features: Vec<f64>) -> MlpTrace {
        let f = self.arch.features();
        let h = self.arch.hidden;
        let (_, b1, w2, b2) = self.offsets();
        let p = &self.params;
        let mut pre = vec![0.0; h];
        let mut hidden = vec![0.0; h];
        let mut logit = p[b2] as f64;
        for j in 0..h {
            let row = &p[j * f..(j + 1) * f];
            let mut a = p[b1 + j] as f64;
            for (w, x) in row.iter().zip(&features) {
                a += *w as f64 * x;
            }
            pre[j] = a;
            hidden[j] = if a > 0.0 { a } else { 0.0 };
            logit += p[w2 + j] as f64 * hidden[j];
        }
        MlpTrace { features, pre, hidden, logit }
    }

    pub fn trace(&self, input: &MultiVolume) -> Result<MlpTrace> {
        Ok(self.forward_features(self.features(input)?))
    }

    /// Accumulates `dlogit · ∂logit/∂θ` into `grad` and returns `∂loss/∂features`.
    pub fn backward(&self, trace: &MlpTrace, dlogit: f64, grad: &mut [f64]) -> Vec<f64> {
        let f = self.arch.features();
        let h = self.arch.hidden;
        let (_, b1, w2, b2) = self.offsets();
        let p = &self.params;
        let mut dfeat = vec![0.0; f];
        grad[b2] += dlogit;
        for j in 0..h {
            grad[w2 + j] += dlogit * trace.hidden[j];
            if trace.pre[j] <= 0.0 {
                continue;
            }
            let da = dlogit * p[w2 + j] as f64;
            grad[b1 + j] += da;
            let row = &p[j * f..(j + 1) * f];
            let grow = &mut grad[j * f..(j + 1) * f];
            for k in 0..f {
                grow[k] += da * trace.features[k];
                dfeat[k] += da * row[k] as f64;
            }
        }
        dfeat
    }

    /// Gradient of the logit with respect to the parameters only.
    pub fn param_gradient(&self, input: &MultiVolume) -> Result<Vec<f64>> {
        let t = self.trace(input)?;
        let mut g = vec![0.0; self.params.len()];
        self.backward(&t, 1.0, &mut g);
        Ok(g)
    }

    /// Spreads a feature gradient back to voxels through the pooling.
    pub fn feature_to_voxel_gradient(&self, dfeat: &[f64]) -> InputGradient {
        let cells = self.pooling.cells();
        (0..self.arch.channels)
            .map(|c| {
                let scale = self.scales[c] as f64;
                let per_cell: Vec<f64> = (0..cells)
                    .map(|k| {
                        let n = self.pooling.counts[k];
                        if n == 0 {
                            0.0
                        } else {
                            dfeat[c * cells + k] * scale / n as f64
                        }
                    })
                    .collect();
                self.pooling.cell_of.iter().map(|&k| per_cell[k as usize]).collect()
            })
            .collect()
    }

    /// Whether the hidden activation pattern is identical for two traces.
    pub fn same_activation_pattern(a: &MlpTrace, b: &MlpTrace) -> bool {
        a.pre.iter().zip(&b.pre).all(|(x, y)| (*x > 0.0) == (*y > 0.0))
    }
}

impl Scorer for TrainableScorer {
    fn score(&self, input: &MultiVolume) -> Result<f64> {
        Ok(self.trace(input)?.logit)
    }

    fn has_input_gradient(&self) -> bool {
        true
    }

    fn input_gradient(&self, input: &MultiVolume) -> Result<InputGradient> {
        let t = self.trace(input)?;
        let mut scratch = vec![0.0; self.params.len()];
        let df = self.backward(&t, 1.0, &mut scratch);
        Ok(self.feature_to_voxel_gradient(&df))
    }
}
