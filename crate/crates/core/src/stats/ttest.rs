use serde::{Deserialize, Serialize};

use super::dist::student_t_two_sided_p;
use crate::error::bail;
use crate::math::sqrt;
use crate::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedTTest {
    pub n: usize,
    /// Mean of `a − b`.
    pub mean_diff: f64,
    pub t: Option<f64>,
    pub df: usize,
    pub p: Option<f64>,
    /// Differences have zero variance; no t statistic exists.
    pub degenerate: bool,
}

pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<PairedTTest> {
    if a.len() != b.len() {
        bail!(Shape, "paired samples differ in length ({} vs {})", a.len(), b.len());
    }
    let n = a.len();
    if n < 2 {
        bail!(Domain, "paired t-test needs at least 2 pairs");
    }
    let d0 = a[0] - b[0];
    // Shift by the first difference so constant differences give exactly zero variance.
    let shifted = || a.iter().zip(b).map(move |(x, y)| (x - y) - d0);
    let m = shifted().sum::<f64>() / n as f64;
    let var = shifted().map(|d| (d - m) * (d - m)).sum::<f64>() / (n - 1) as f64;
    let mean_diff = d0 + m;
    let df = n - 1;
    if !(var > 0.0) {
        return Ok(PairedTTest { n, mean_diff, t: None, df, p: None, degenerate: true });
    }
    let t = mean_diff / sqrt(var / n as f64);
    Ok(PairedTTest { n, mean_diff, t: Some(t), df, p: Some(student_t_two_sided_p(t, df as f64)), degenerate: false })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_example() {
        let r = paired_t_test(&[1.0, 2.0, 3.0], &[0.0; 3]).unwrap();
        assert!((r.t.unwrap() - 2.0 * 3f64.sqrt()).abs() < 1e-12);
        assert_eq!(r.df, 2);
        assert!((r.p.unwrap() - 0.0742).abs() < 1e-4);
    }

    #[test]
    fn identical_samples_are_degenerate() {
        let a = [0.3, 1.7, -2.0];
        let r = paired_t_test(&a, &a).unwrap();
        assert!(r.degenerate && r.p.is_none() && r.mean_diff == 0.0);
    }

    #[test]
    fn constant_shift_is_degenerate() {
        let r = paired_t_test(&[1.0, 2.0, 3.0], &[0.0, 1.0, 2.0]).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.mean_diff, 1.0);
    }

    #[test]
    fn errors() {
        assert_eq!(paired_t_test(&[1.0], &[0.0]).unwrap_err().kind(), "domain");
        assert_eq!(paired_t_test(&[1.0, 2.0], &[0.0]).unwrap_err().kind(), "shape");
    }
}
