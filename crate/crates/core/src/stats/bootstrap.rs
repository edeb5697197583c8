use alloc::vec::Vec;

use rand::Rng;

use crate::error::bail;
use crate::math::floor;
use crate::rng::substream;
use crate::Result;

pub const DEFAULT_RESAMPLES: usize = 1000;

/// Mean computed relative to the first element, exact for constant samples.
pub fn stable_mean(x: &[f64]) -> f64 {
    let c = x[0];
    c + x.iter().map(|v| v - c).sum::<f64>() / x.len() as f64
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = floor(h) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let f = h - lo as f64;
    if f == 0.0 {
        sorted[lo]
    } else {
        sorted[lo] + f * (sorted[hi] - sorted[lo])
    }
}

/// Percentile bootstrap interval of the mean.
pub fn bootstrap_ci(samples: &[f64], resamples: usize, level: f64, seed: u64) -> Result<(f64, f64)> {
    if samples.is_empty() {
        bail!(Domain, "bootstrap of an empty sample");
    }
    if resamples == 0 || !(level > 0.0 && level < 1.0) {
        bail!(Config, "bootstrap needs resamples > 0 and level in (0, 1)");
    }
    let n = samples.len();
    let mut rng = substream(seed, 0xB007);
    let mut buf = Vec::with_capacity(n);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| {
            buf.clear();
            buf.extend((0..n).map(|_| samples[rng.random_range(0..n)]));
            stable_mean(&buf)
        })
        .collect();
    means.sort_by(f64::total_cmp);
    let alpha = (1.0 - level) / 2.0;
    Ok((quantile(&means, alpha), quantile(&means, 1.0 - alpha)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::StandardNormal;

    #[test]
    fn constant_sample() {
        assert_eq!(bootstrap_ci(&[0.1; 7], 1000, 0.95, 1).unwrap(), (0.1, 0.1));
    }

    #[test]
    fn seeded() {
        let x = [1.0, 4.0, 2.0, 8.0, 5.0];
        assert_eq!(bootstrap_ci(&x, 500, 0.95, 3).unwrap(), bootstrap_ci(&x, 500, 0.95, 3).unwrap());
        assert_ne!(bootstrap_ci(&x, 500, 0.95, 3).unwrap(), bootstrap_ci(&x, 500, 0.95, 4).unwrap());
    }

    #[test]
    fn normal_width_matches_asymptotics() {
        let mut rng = substream(2024, 0);
        let x: Vec<f64> = (0..500).map(|_| rng.sample(StandardNormal)).collect();
        let (lo, hi) = bootstrap_ci(&x, 1000, 0.95, 8).unwrap();
        let expected = 2.0 * 1.96 / 500f64.sqrt();
        assert!(((hi - lo) / expected - 1.0).abs() < 0.2, "width {}", hi - lo);
    }

    #[test]
    fn empty_sample_errors() {
        assert_eq!(bootstrap_ci(&[], 10, 0.95, 0).unwrap_err().kind(), "domain");
    }
}
