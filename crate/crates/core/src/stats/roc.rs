use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::dist::normal_two_sided_p;
use crate::error::bail;
use crate::math::sqrt;
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RocResult {
    /// Sweep from the highest threshold down, starting at (0, 0).
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

fn class_counts(scores: &[f64], y: &[bool]) -> Result<(usize, usize)> {
    if scores.len() != y.len() {
        bail!(Shape, "{} scores for {} labels", scores.len(), y.len());
    }
    if scores.iter().any(|s| s.is_nan()) {
        bail!(Domain, "NaN score");
    }
    let n1 = y.iter().filter(|&&v| v).count();
    let n0 = y.len() - n1;
    if n1 == 0 || n0 == 0 {
        bail!(Domain, "ROC analysis needs both classes ({} positive, {} negative)", n1, n0);
    }
    Ok((n1, n0))
}

/// 1-based ranks with ties sharing their average rank.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = alloc::vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && values[order[j]] == values[order[i]] {
            j += 1;
        }
        let r = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            ranks[k] = r;
        }
        i = j;
    }
    ranks
}

/// Mann–Whitney AUC, ties counted as one half.
pub fn auc(scores: &[f64], y: &[bool]) -> Result<f64> {
    let (n1, n0) = class_counts(scores, y)?;
    let ranks = midranks(scores);
    let r1: f64 = ranks.iter().zip(y).filter(|(_, &v)| v).map(|(r, _)| r).sum();
    let u = r1 - (n1 * (n1 + 1)) as f64 / 2.0;
    Ok(u / (n1 as f64 * n0 as f64))
}

pub fn roc_auc(scores: &[f64], y: &[bool]) -> Result<RocResult> {
    let (n1, n0) = class_counts(scores, y)?;
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = Vec::new();
    points.push(RocPoint { threshold: f64::INFINITY, fpr: 0.0, tpr: 0.0 });
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut i = 0;
    while i < order.len() {
        let t = scores[order[i]];
        while i < order.len() && scores[order[i]] == t {
            if y[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        points.push(RocPoint { threshold: t, fpr: fp as f64 / n0 as f64, tpr: tp as f64 / n1 as f64 });
    }
    Ok(RocResult { points, auc: auc(scores, y)? })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelongResult {
    pub auc_a: f64,
    pub auc_b: f64,
    /// `AUC_a − AUC_b`.
    pub delta: f64,
    pub variance: f64,
    pub z: Option<f64>,
    pub p: Option<f64>,
    /// Zero variance with a nonzero difference: no valid test.
    pub degenerate: bool,
}

fn psi(x: f64, y: f64) -> f64 {
    if x > y {
        1.0
    } else if x == y {
        0.5
    } else {
        0.0
    }
}

/// Placement components of one score vector: `(V10 per positive, V01 per negative)`.
fn placements(scores: &[f64], y: &[bool]) -> (Vec<f64>, Vec<f64>) {
    let pos: Vec<f64> = scores.iter().zip(y).filter(|(_, &v)| v).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(y).filter(|(_, &v)| !v).map(|(&s, _)| s).collect();
    let v10 = pos.iter().map(|&p| neg.iter().map(|&q| psi(p, q)).sum::<f64>() / neg.len() as f64).collect();
    let v01 = neg.iter().map(|&q| pos.iter().map(|&p| psi(p, q)).sum::<f64>() / pos.len() as f64).collect();
    (v10, v01)
}

fn covariance(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    if n < 2 {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / (n - 1) as f64
}

/// Paired DeLong test for two correlated AUCs on the same units.
pub fn delong_test(scores_a: &[f64], scores_b: &[f64], y: &[bool]) -> Result<DelongResult> {
    if scores_a.len() != scores_b.len() {
        bail!(Shape, "paired score vectors differ in length ({} vs {})", scores_a.len(), scores_b.len());
    }
    let (n1, n0) = class_counts(scores_a, y)?;
    class_counts(scores_b, y)?;
    let (a10, a01) = placements(scores_a, y);
    let (b10, b01) = placements(scores_b, y);
    let auc_a = a10.iter().sum::<f64>() / n1 as f64;
    let auc_b = b10.iter().sum::<f64>() / n1 as f64;
    let delta = auc_a - auc_b;
    let d10: Vec<f64> = a10.iter().zip(&b10).map(|(a, b)| a - b).collect();
    let d01: Vec<f64> = a01.iter().zip(&b01).map(|(a, b)| a - b).collect();
    let variance = covariance(&d10, &d10) / n1 as f64 + covariance(&d01, &d01) / n0 as f64;
    let (z, p, degenerate) = if variance > 0.0 {
        let z = delta / sqrt(variance);
        (Some(z), Some(normal_two_sided_p(z)), false)
    } else if delta == 0.0 {
        (None, Some(1.0), false)
    } else {
        (None, None, true)
    };
    Ok(DelongResult { auc_a, auc_b, delta, variance, z, p, degenerate })
}
