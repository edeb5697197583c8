//! Statistics kernel: distributions, logistic regression, ROC analysis,
//! paired tests, bootstrap intervals and the saliency association test.

mod association;
mod bootstrap;
mod correlation;
pub mod dist;
mod logistic;
mod roc;
mod ttest;

pub use association::{
    associate, directional_pass, run_association, AssociationResult, AssociationRow, DirectionalScores, Estimator, ScoreKind,
};
pub use bootstrap::{bootstrap_ci, stable_mean, DEFAULT_RESAMPLES};
pub use correlation::pearson;
pub use dist::{normal_cdf, student_t_cdf};
pub use logistic::{firth_fit, logistic_fit, LogisticFit};
pub use roc::{auc, delong_test, midranks, roc_auc, DelongResult, RocPoint, RocResult};
pub use ttest::{paired_t_test, PairedTTest};
