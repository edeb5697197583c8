use serde::{Deserialize, Serialize};

use super::dist::{normal_two_sided_p, Z_975};
use crate::error::bail;
use crate::math::{bce_with_logit, ln, sigmoid, sqrt};
use crate::Result;

const TOLERANCE: f64 = 1e-8;
const MAX_ITER: usize = 100;
const DIVERGENCE_NORM: f64 = 1e3;

/// Univariate logistic model `logit P(y = 1) = β₀ + β₁ x`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub beta0: f64,
    pub beta1: f64,
    pub se0: f64,
    pub se1: f64,
    pub iterations: usize,
    pub log_likelihood: f64,
}

impl LogisticFit {
    /// Wald 95% interval for `β₁`.
    pub fn ci_beta1(&self) -> (f64, f64) {
        (self.beta1 - Z_975 * self.se1, self.beta1 + Z_975 * self.se1)
    }

    /// Two-sided Wald p-value for `β₁ = 0`.
    pub fn p_beta1(&self) -> f64 {
        normal_two_sided_p(self.beta1 / self.se1)
    }

    pub fn linear_predictor(&self, x: f64) -> f64 {
        self.beta0 + self.beta1 * x
    }
}

fn log_likelihood(x: &[f64], y: &[bool], b0: f64, b1: f64) -> f64 {
    x.iter()
        .zip(y)
        .map(|(&xi, &yi)| -bce_with_logit(b0 + b1 * xi, if yi { 1.0 } else { 0.0 }))
        .sum()
}

/// Maximum-likelihood fit by iteratively reweighted least squares.
pub fn logistic_fit(x: &[f64], y: &[bool]) -> Result<LogisticFit> {
    check_inputs(x, y)?;
    // In one dimension complete separation means the classes occupy disjoint ranges.
    let (mut lo1, mut hi1, mut lo0, mut hi0) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
    for (&xi, &yi) in x.iter().zip(y) {
        if yi {
            lo1 = lo1.min(xi);
            hi1 = hi1.max(xi);
        } else {
            lo0 = lo0.min(xi);
            hi0 = hi0.max(xi);
        }
    }
    if hi0 < lo1 || hi1 < lo0 {
        bail!(Separation, "outcome classes are completely separated by the predictor");
    }

    let (mut b0, mut b1) = (0.0, 0.0);
    let mut ll = log_likelihood(x, y, b0, b1);
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=MAX_ITER {
        iterations = it;
        let (mut g0, mut g1) = (0.0, 0.0);
        let mut info = [0.0; 3];
        for (&xi, &yi) in x.iter().zip(y) {
            let p = sigmoid(b0 + b1 * xi);
            let r = if yi { 1.0 } else { 0.0 } - p;
            let w = p * (1.0 - p);
            g0 += r;
            g1 += r * xi;
            info[0] += w;
            info[1] += w * xi;
            info[2] += w * xi * xi;
        }
        let det = info[0] * info[2] - info[1] * info[1];
        if !(det > 0.0) || !det.is_finite() {
            bail!(Rank, "information matrix is singular at iteration {}", it);
        }
        b0 += (info[2] * g0 - info[1] * g1) / det;
        b1 += (info[0] * g1 - info[1] * g0) / det;
        if sqrt(b0 * b0 + b1 * b1) > DIVERGENCE_NORM || !b0.is_finite() || !b1.is_finite() {
            bail!(Separation, "coefficients diverged (|beta| > {})", DIVERGENCE_NORM);
        }
        let next = log_likelihood(x, y, b0, b1);
        let change = (next - ll).abs();
        ll = next;
        if change < TOLERANCE {
            converged = true;
            break;
        }
    }
    if !converged {
        bail!(Domain, "logistic fit did not converge in {} iterations", MAX_ITER);
    }
    // Standard errors from the information at the final coefficients.
    let info = information(x, b0, b1);
    let det = info[0] * info[2] - info[1] * info[1];
    if !(det > 0.0) {
        bail!(Rank, "information matrix is singular at the solution");
    }
    Ok(LogisticFit {
        beta0: b0,
        beta1: b1,
        se0: sqrt(info[2] / det),
        se1: sqrt(info[0] / det),
        iterations,
        log_likelihood: ll,
    })
}

fn check_inputs(x: &[f64], y: &[bool]) -> Result<()> {
    if x.len() != y.len() {
        bail!(Shape, "{} predictors for {} outcomes", x.len(), y.len());
    }
    let n1 = y.iter().filter(|&&v| v).count();
    if n1 == 0 || n1 == y.len() {
        bail!(Domain, "logistic fit needs both outcome classes");
    }
    if x.iter().any(|v| !v.is_finite()) {
        bail!(Domain, "non-finite predictor");
    }
    let lo = x.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        bail!(Rank, "predictor is constant");
    }
    Ok(())
}

/// Fisher information `[Σw, Σwx, Σwx²]` at `(b0, b1)`.
fn information(x: &[f64], b0: f64, b1: f64) -> [f64; 3] {
    let mut info = [0.0; 3];
    for &xi in x {
        let p = sigmoid(b0 + b1 * xi);
        let w = p * (1.0 - p);
        info[0] += w;
        info[1] += w * xi;
        info[2] += w * xi * xi;
    }
    info
}

fn penalized_log_likelihood(x: &[f64], y: &[bool], b0: f64, b1: f64) -> f64 {
    let i = information(x, b0, b1);
    log_likelihood(x, y, b0, b1) + 0.5 * ln(i[0] * i[2] - i[1] * i[1])
}

/// Firth bias-reduced fit: maximises `ℓ(β) + ½ log det I(β)`.
///
/// The estimate stays finite under complete separation. Standard errors
/// come from the Fisher information at the penalized estimate.
pub fn firth_fit(x: &[f64], y: &[bool]) -> Result<LogisticFit> {
    check_inputs(x, y)?;
    let (mut b0, mut b1) = (0.0, 0.0);
    let mut pl = penalized_log_likelihood(x, y, b0, b1);
    for it in 1..=MAX_ITER {
        let info = information(x, b0, b1);
        let det = info[0] * info[2] - info[1] * info[1];
        if !(det > 0.0) || !det.is_finite() {
            bail!(Rank, "information matrix is singular at iteration {}", it);
        }
        // Modified score: residuals gain h_i (1/2 - p_i), h the hat-matrix diagonal.
        let (mut g0, mut g1) = (0.0, 0.0);
        for (&xi, &yi) in x.iter().zip(y) {
            let p = sigmoid(b0 + b1 * xi);
            let w = p * (1.0 - p);
            let h = w * (info[2] - 2.0 * info[1] * xi + info[0] * xi * xi) / det;
            let r = if yi { 1.0 } else { 0.0 } - p + h * (0.5 - p);
            g0 += r;
            g1 += r * xi;
        }
        let d0 = (info[2] * g0 - info[1] * g1) / det;
        let d1 = (info[0] * g1 - info[1] * g0) / det;
        let mut step = 1.0;
        let (mut n0, mut n1, mut next) = (b0 + d0, b1 + d1, f64::NEG_INFINITY);
        for _ in 0..30 {
            n0 = b0 + step * d0;
            n1 = b1 + step * d1;
            next = penalized_log_likelihood(x, y, n0, n1);
            if next.is_finite() && next >= pl - TOLERANCE {
                break;
            }
            step *= 0.5;
        }
        if !next.is_finite() {
            bail!(Domain, "penalized likelihood became non-finite");
        }
        let change = (next - pl).abs();
        let moved = step * (d0.abs() + d1.abs());
        (b0, b1, pl) = (n0, n1, next);
        if change < TOLERANCE && moved < 1e-6 {
            let info = information(x, b0, b1);
            let det = info[0] * info[2] - info[1] * info[1];
            return Ok(LogisticFit {
                beta0: b0,
                beta1: b1,
                se0: sqrt(info[2] / det),
                se1: sqrt(info[0] / det),
                iterations: it,
                log_likelihood: log_likelihood(x, y, b0, b1),
            });
        }
    }
    bail!(Domain, "penalized logistic fit did not converge in {} iterations", MAX_ITER)
}
