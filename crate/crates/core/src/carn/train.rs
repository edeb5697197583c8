use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{CarnModel, CurriculumSchedule, DifficultyTracker};
use crate::cohort::SampleSet;
use crate::error::bail;
use crate::math;
use crate::rng::{fnv1a_ids, mix, substream};
use crate::scorer::{adam_step, AdamConfig, MlpArch, OptimizerState};
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub curriculum: bool,
    pub air: bool,
    pub seed: u64,
    pub adam: AdamConfig,
    /// Initial exposure rate of the curriculum.
    pub f_min: f64,
    /// EMA momentum of the difficulty tracker.
    pub ema_beta: f64,
    pub hidden: usize,
    pub pool: usize,
    pub air_grid: usize,
    /// Divide each modality by its training-set RMS before pooling.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 16,
            curriculum: true,
            air: true,
            seed: 0,
            adam: AdamConfig::default(),
            f_min: 0.2,
            ema_beta: 0.9,
            hidden: 64,
            pool: 8,
            air_grid: 4,
            standardize: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub pool_size: usize,
    pub mean_loss: f64,
    pub validation_auc: Option<f64>,
    /// FNV-1a fingerprint of the selected sample ids, in selection order.
    pub selection_hash: u64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: CarnModel,
    /// Difficulty after the initial pass, before any update.
    pub initial_difficulty: Vec<f64>,
    pub log: Vec<EpochLog>,
}

/// Per-channel `1 / RMS` over every voxel of every sample.
pub fn channel_scales(data: &SampleSet) -> Vec<f32> {
    let Some(first) = data.samples.first() else {
        return Vec::new();
    };
    let channels = first.input.channel_count();
    (0..channels)
        .map(|c| {
            let mut ss = 0.0f64;
            let mut n = 0usize;
            for s in &data.samples {
                for &x in s.input.channels()[c].voxels() {
                    ss += x as f64 * x as f64;
                }
                n += s.input.dims().len();
            }
            let rms = math::sqrt(ss / n.max(1) as f64);
            if rms > 0.0 && rms.is_finite() {
                (1.0 / rms) as f32
            } else {
                1.0
            }
        })
        .collect()
}

/// Joint training of the weight map and classifier under the self-paced curriculum.
///
/// `labels[i]` is the binary target of `data.samples[i]`. `validate` is called
/// after every epoch and may return a validation AUC for the log.
pub fn train_carn(
    data: &SampleSet,
    labels: &[bool],
    config: &TrainConfig,
    mut validate: impl FnMut(&CarnModel) -> Option<f64>,
) -> Result<TrainOutcome> {
    let n = data.len();
    if labels.len() != n {
        bail!(Shape, "{} labels for {} samples", labels.len(), n);
    }
    if n == 0 {
        bail!(Config, "no training samples");
    }
    if !labels.iter().any(|&y| y) || labels.iter().all(|&y| y) {
        bail!(Config, "training data must contain both classes");
    }
    if config.batch_size == 0 {
        bail!(Config, "batch size must be positive");
    }
    let first = &data.samples[0].input;
    let arch = MlpArch { dims: first.dims(), channels: first.channel_count(), pool: config.pool, hidden: config.hidden };
    let mut model = CarnModel::new(arch, config.air.then_some(config.air_grid), config.seed)?;
    if config.standardize {
        model.classifier_mut().set_scales(channel_scales(data))?;
    }

    let schedule = CurriculumSchedule::new(config.epochs, n, config.f_min)?;
    let mut tracker = DifficultyTracker::new(n, config.ema_beta)?;
    let targets: Vec<f64> = labels.iter().map(|&y| if y { 1.0 } else { 0.0 }).collect();
    for (i, s) in data.samples.iter().enumerate() {
        let l = model.loss(&s.input, targets[i])?;
        if !l.is_finite() {
            bail!(Training, "non-finite loss {} for sample {} during initialisation", l, i);
        }
        tracker.initialize(i, l)?;
    }
    let initial_difficulty = tracker.difficulties().to_vec();

    let mut opt_cls = OptimizerState::new(model.classifier().params().len(), config.adam);
    let mut opt_air = OptimizerState::new(model.air().map_or(0, |a| a.params().len()), config.adam);
    let mut grads = model.gradients();
    let mut log = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        let mut ids = if config.curriculum {
            schedule.select(&tracker, epoch)?
        } else {
            (0..n).collect()
        };
        let selection_hash = fnv1a_ids(&ids);
        let pool_size = ids.len();
        ids.shuffle(&mut substream(config.seed, mix(&[epoch as u64, 0x5348])));

        let mut loss_sum = 0.0;
        for batch in ids.chunks(config.batch_size) {
            grads.zero();
            let w = 1.0 / batch.len() as f64;
            let mut losses = Vec::with_capacity(batch.len());
            for &i in batch {
                let (l, _) = model.loss_backward(&data.samples[i].input, targets[i], w, &mut grads)?;
                if !l.is_finite() {
                    bail!(Training, "non-finite loss {} at epoch {} for sample {}", l, epoch, i);
                }
                losses.push(l);
            }
            adam_step(model.classifier_mut().params_mut(), &grads.classifier, &mut opt_cls)?;
            if let Some(air) = model.air_mut() {
                let g = &grads.air;
                air.with_params_mut(|p| adam_step(p, g, &mut opt_air))?;
            }
            for (&i, &l) in batch.iter().zip(&losses) {
                tracker.update(i, l)?;
                loss_sum += l;
            }
        }
        let mean_loss = loss_sum / pool_size as f64;
        if !mean_loss.is_finite() {
            bail!(Training, "{}", format!("non-finite mean loss at epoch {}", epoch));
        }
        let validation_auc = validate(&model);
        log.push(EpochLog { epoch, pool_size, mean_loss, validation_auc, selection_hash });
    }
    Ok(TrainOutcome { model, initial_difficulty, log })
}
