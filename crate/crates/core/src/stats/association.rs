use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::logistic::{firth_fit, logistic_fit};
use super::roc::auc;
use crate::volume::Layer;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ScoreKind {
    #[serde(rename = "PDSS")]
    Pdss,
    #[serde(rename = "NDSS")]
    Ndss,
}

impl ScoreKind {
    pub const BOTH: [ScoreKind; 2] = [ScoreKind::Pdss, ScoreKind::Ndss];

    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::Pdss => "PDSS",
            ScoreKind::Ndss => "NDSS",
        }
    }
}

/// Directional scores of one unit (e.g. one side), indexed by layer.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectionalScores {
    pub pdss: [f64; 6],
    pub ndss: [f64; 6],
}

impl DirectionalScores {
    pub fn get(&self, layer: Layer, kind: ScoreKind) -> f64 {
        match kind {
            ScoreKind::Pdss => self.pdss[layer.index()],
            ScoreKind::Ndss => self.ndss[layer.index()],
        }
    }
}

/// Which likelihood produced the coefficients.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimator {
    /// Plain maximum likelihood.
    Ml,
    /// Firth-penalized likelihood, used when the classes are completely separated.
    Firth,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssociationResult {
    pub layer: Layer,
    pub kind: ScoreKind,
    pub beta0: f64,
    pub beta1: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub p: f64,
    pub auc: f64,
    pub pass: bool,
    pub estimator: Estimator,
}

/// Directional criterion: positive slope for PDSS, negative for NDSS, both at p < 0.05.
pub fn directional_pass(kind: ScoreKind, beta1: f64, p: f64) -> bool {
    let signed = match kind {
        ScoreKind::Pdss => beta1 > 0.0,
        ScoreKind::Ndss => beta1 < 0.0,
    };
    signed && p < 0.05
}

/// One table row; failed fits keep their error instead of aborting the batch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssociationRow {
    pub layer: Layer,
    pub kind: ScoreKind,
    pub result: Option<AssociationResult>,
    pub error: Option<String>,
}

/// Wald test of one score against the labels; separated data falls back to the Firth fit.
pub fn associate(layer: Layer, kind: ScoreKind, x: &[f64], y: &[bool]) -> crate::Result<AssociationResult> {
    let (fit, estimator) = match logistic_fit(x, y) {
        Ok(f) => (f, Estimator::Ml),
        Err(e) if e.kind() == "separation" => (firth_fit(x, y)?, Estimator::Firth),
        Err(e) => return Err(e),
    };
    let (ci_low, ci_high) = fit.ci_beta1();
    let p = fit.p_beta1();
    let eta: Vec<f64> = x.iter().map(|&v| fit.linear_predictor(v)).collect();
    Ok(AssociationResult {
        layer,
        kind,
        beta0: fit.beta0,
        beta1: fit.beta1,
        ci_low,
        ci_high,
        p,
        auc: auc(&eta, y)?,
        pass: directional_pass(kind, fit.beta1, p),
        estimator,
    })
}

/// Univariate fits of every (layer, score kind) against the unit labels.
pub fn run_association(units: &[DirectionalScores], y: &[bool]) -> Vec<AssociationRow> {
    let mut rows = Vec::with_capacity(12);
    for layer in Layer::ALL {
        for kind in ScoreKind::BOTH {
            let x: Vec<f64> = units.iter().map(|u| u.get(layer, kind)).collect();
            let (result, error) = if x.len() != y.len() {
                (None, Some(alloc::format!("{} units for {} labels", x.len(), y.len())))
            } else {
                match associate(layer, kind, &x, y) {
                    Ok(r) => (Some(r), None),
                    Err(e) => (None, Some(e.to_string())),
                }
            };
            rows.push(AssociationRow { layer, kind, result, error });
        }
    }
    rows
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn criterion_signs() {
        assert!(directional_pass(ScoreKind::Pdss, 0.5, 0.01));
        assert!(!directional_pass(ScoreKind::Pdss, -0.5, 0.01));
        assert!(directional_pass(ScoreKind::Ndss, -0.5, 0.049));
        assert!(!directional_pass(ScoreKind::Ndss, -0.5, 0.05));
    }

    #[test]
    fn failing_rows_do_not_abort() {
        let units: Vec<DirectionalScores> = (0..8)
            .map(|i| {
                let mut pdss = [0.0; 6];
                pdss[4] = (i % 3) as f64 + if i >= 4 { 0.8 } else { 0.0 };
                DirectionalScores { pdss, ndss: [0.0; 6] }
            })
            .collect();
        let y: Vec<bool> = (0..8).map(|i| i >= 4).collect();
        let rows = run_association(&units, &y);
        assert_eq!(rows.len(), 12);
        let dfm = rows.iter().find(|r| r.layer == Layer::Dfm && r.kind == ScoreKind::Pdss).unwrap();
        let res = dfm.result.as_ref().unwrap();
        assert!(res.beta1 > 0.0 && res.ci_low <= res.beta1 && res.beta1 <= res.ci_high);
        assert!(rows.iter().filter(|r| r.error.is_some()).count() == 11);
    }

    #[test]
    fn separated_scores_use_the_penalized_fit() {
        let x = [0.1, 0.2, 0.15, 0.05, 5.0, 6.0, 5.5, 7.0];
        let y = [false, false, false, false, true, true, true, true];
        assert_eq!(logistic_fit(&x, &y).unwrap_err().kind(), "separation");
        let r = associate(Layer::Dfm, ScoreKind::Pdss, &x, &y).unwrap();
        assert_eq!(r.estimator, Estimator::Firth);
        assert!(r.beta1 > 0.0 && r.beta1.is_finite());
        let r = associate(Layer::Dfm, ScoreKind::Ndss, &[0.0, 1.0, 0.5, 2.0, 1.5, 3.0], &[false, true, false, true, true, false]).unwrap();
        assert_eq!(r.estimator, Estimator::Ml);
    }
}
