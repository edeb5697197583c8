use alloc::vec;
use alloc::vec::Vec;

use crate::error::bail;
use crate::math;
use crate::Result;

/// Exponentially smoothed per-sample difficulty.
#[derive(Clone, Debug, PartialEq)]
pub struct DifficultyTracker {
    beta: f64,
    difficulty: Vec<f64>,
    last_loss: Vec<f64>,
}

impl DifficultyTracker {
    pub fn new(samples: usize, beta: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            bail!(Config, "EMA momentum must lie in [0, 1], got {}", beta);
        }
        Ok(DifficultyTracker { beta, difficulty: vec![0.0; samples], last_loss: vec![0.0; samples] })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn len(&self) -> usize {
        self.difficulty.len()
    }

    pub fn is_empty(&self) -> bool {
        self.difficulty.is_empty()
    }

    pub fn difficulty(&self, id: usize) -> Option<f64> {
        self.difficulty.get(id).copied()
    }

    pub fn difficulties(&self) -> &[f64] {
        &self.difficulty
    }

    pub fn last_loss(&self, id: usize) -> Option<f64> {
        self.last_loss.get(id).copied()
    }

    /// Sets `L_i` directly; used by the initial no-update pass.
    pub fn initialize(&mut self, id: usize, loss: f64) -> Result<()> {
        self.check(id, loss)?;
        self.difficulty[id] = loss;
        self.last_loss[id] = loss;
        Ok(())
    }

    /// `L_i ← β·L_i + (1 − β)·l`.
    pub fn update(&mut self, id: usize, loss: f64) -> Result<()> {
        self.check(id, loss)?;
        self.difficulty[id] = self.beta * self.difficulty[id] + (1.0 - self.beta) * loss;
        self.last_loss[id] = loss;
        Ok(())
    }

    fn check(&self, id: usize, loss: f64) -> Result<()> {
        if id >= self.difficulty.len() {
            bail!(Domain, "unknown sample id {} (tracker holds {})", id, self.difficulty.len());
        }
        if !loss.is_finite() {
            bail!(Domain, "non-finite loss for sample {}", id);
        }
        Ok(())
    }
}

/// Linear exposure schedule from `f_min` at the first epoch to 1 at the last.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurriculumSchedule {
    pub epochs: usize,
    pub samples: usize,
    pub f_min: f64,
}

impl CurriculumSchedule {
    pub fn new(epochs: usize, samples: usize, f_min: f64) -> Result<Self> {
        if epochs == 0 {
            bail!(Config, "a schedule needs at least one epoch");
        }
        if !(f_min > 0.0 && f_min <= 1.0) {
            bail!(Config, "initial exposure must lie in (0, 1], got {}", f_min);
        }
        Ok(CurriculumSchedule { epochs, samples, f_min })
    }

    /// `f_e = f_min + (1 − f_min)·e/(E − 1)`; a single-epoch schedule uses the full set.
    pub fn exposure(&self, epoch: usize) -> Result<f64> {
        if epoch >= self.epochs {
            bail!(Domain, "epoch {} outside 0..{}", epoch, self.epochs);
        }
        if self.epochs == 1 || epoch == self.epochs - 1 {
            return Ok(1.0);
        }
        Ok(self.f_min + (1.0 - self.f_min) * epoch as f64 / (self.epochs - 1) as f64)
    }

    /// `N_e = ⌊f_e·N⌋`, at least one.
    pub fn pool_size(&self, epoch: usize) -> Result<usize> {
        let f = self.exposure(epoch)?;
        // The tolerance absorbs products like 0.6·5 = 2.9999999999999996.
        let n = math::floor(f * self.samples as f64 + 1e-9) as usize;
        Ok(n.clamp(1, self.samples.max(1)))
    }

    /// The `N_e` smallest-difficulty ids, ties by ascending id.
    pub fn select(&self, tracker: &DifficultyTracker, epoch: usize) -> Result<Vec<usize>> {
        if tracker.len() != self.samples {
            bail!(Shape, "tracker holds {} samples, schedule {}", tracker.len(), self.samples);
        }
        let n = self.pool_size(epoch)?;
        let mut ids: Vec<usize> = (0..self.samples).collect();
        let d = tracker.difficulties();
        ids.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
        ids.truncate(n);
        Ok(ids)
    }
}
