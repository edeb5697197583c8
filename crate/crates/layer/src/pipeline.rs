//! Parallel versions of the core orchestration.
//!
//! Each function fans out over scans with rayon and reduces in scan order,
//! so results are bit-identical to the serial core functions.

use layer_core::aggregate::{build_hierarchy, labels_for, make_folds, predict_units, FoldAssignment, HierarchyOptions, Scenario, Unit, UnitPrediction};
use layer_core::carn::{train_carn, CarnModel, EpochLog, TrainConfig};
use layer_core::cohort::{CohortManifest, ModalitySet, SampleSet};
use layer_core::faithfulness::{assemble_comparison, evaluate_scan, CompareConfig, Comparison, Method};
use layer_core::saliency::{analyse, directional_summary, sanity_compare, scan_saliency, summarize, AnalysisOptions, LayerAnalysis, SanityReport, ScanSaliency};
use layer_core::scorer::Scorer;
use layer_core::stats::{auc, run_association, AssociationRow, DirectionalScores};
use layer_core::Layer;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};

pub fn scan_saliencies<S: Scorer + Sync>(scorer: &S, data: &SampleSet, pairs: bool) -> Result<Vec<ScanSaliency>> {
    let scans = (0..data.len())
        .into_par_iter()
        .map(|i| scan_saliency(scorer, &data.samples[i].input, data.mask_of(i), pairs))
        .collect::<layer_core::Result<Vec<_>>>()?;
    Ok(scans)
}

pub fn layer_analysis<S: Scorer + Sync>(scorer: &S, data: &SampleSet, options: &AnalysisOptions) -> Result<(Vec<ScanSaliency>, LayerAnalysis)> {
    let scans = scan_saliencies(scorer, data, options.pairs)?;
    let analysis = analyse(&scans, options)?;
    Ok((scans, analysis))
}

pub fn probabilities<S: Scorer + Sync>(scorer: &S, data: &SampleSet) -> Result<Vec<f64>> {
    let p = data.samples.par_iter().map(|s| scorer.probability(&s.input)).collect::<layer_core::Result<Vec<_>>>()?;
    Ok(p)
}

pub fn faithfulness<S: Scorer + Sync>(scorer: &S, data: &SampleSet, methods: &[Method], config: &CompareConfig) -> Result<Comparison> {
    let per_scan = (0..data.len())
        .into_par_iter()
        .map(|i| evaluate_scan(scorer, &data.samples[i].input, data.mask_of(i), i, methods, config))
        .collect::<layer_core::Result<Vec<_>>>()?;
    Ok(assemble_comparison(methods, per_scan.into_iter().flatten().collect())?)
}

/// Saliency of the trained model against a `seed`-randomised copy, without pairs.
pub fn sanity(model: &CarnModel, data: &SampleSet, seed: u64, options: &AnalysisOptions) -> Result<SanityReport> {
    let opts = AnalysisOptions { pairs: false, ..*options };
    let random = model.randomize(seed);
    let (trained, randomized) = rayon::join(|| scan_saliencies(model, data, false), || scan_saliencies(&random, data, false));
    let trained = summarize(&trained?, &opts)?;
    let randomized = summarize(&randomized?, &opts)?;
    Ok(sanity_compare(&trained, randomized, seed))
}

/// PDSS and NDSS of every unit over the scans below it.
pub fn unit_directional(units: &[Unit], scans: &[ScanSaliency]) -> Result<Vec<DirectionalScores>> {
    units
        .iter()
        .map(|u| {
            let members = u.node.scans();
            let mut d = DirectionalScores { pdss: [0.0; 6], ndss: [0.0; 6] };
            for layer in Layer::ALL {
                let li = layer.index();
                let deltas: Vec<f64> = members.iter().map(|&s| scans[s].delta[li]).collect();
                (d.pdss[li], d.ndss[li]) = directional_summary(&deltas)?;
            }
            Ok(d)
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssociationReport {
    pub scenario: Scenario,
    pub units: usize,
    pub positives: usize,
    pub incomplete_units: usize,
    pub rows: Vec<AssociationRow>,
}

/// Unit-level logistic association of every layer's PDSS and NDSS with the scenario label.
pub fn association(data: &SampleSet, scans: &[ScanSaliency], scenario: Scenario, options: HierarchyOptions) -> Result<AssociationReport> {
    let units = build_hierarchy(&data.metas(), scenario, options)?;
    let scores = unit_directional(&units, scans)?;
    let y: Vec<bool> = units.iter().map(|u| u.label).collect();
    Ok(AssociationReport {
        scenario,
        units: units.len(),
        positives: y.iter().filter(|&&v| v).count(),
        incomplete_units: units.iter().filter(|u| u.incomplete).count(),
        rows: run_association(&scores, &y),
    })
}

/// Unit predictions and their AUC (`None` when only one class is present).
pub fn unit_predictions(data: &SampleSet, probs: &[f64], scenario: Scenario, options: HierarchyOptions) -> Result<(Vec<UnitPrediction>, Option<f64>)> {
    let units = build_hierarchy(&data.metas(), scenario, options)?;
    let preds = predict_units(&units, probs)?;
    let p: Vec<f64> = preds.iter().map(|u| u.probability).collect();
    let y: Vec<bool> = preds.iter().map(|u| u.label).collect();
    Ok((preds, auc(&p, &y).ok()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub scenario: Scenario,
    pub modality: ModalitySet,
    /// Patient-level folds; the last one is held out. Below 2, every patient trains.
    pub folds: usize,
    pub hierarchy: HierarchyOptions,
    pub training: TrainConfig,
}

#[derive(Clone, Debug)]
pub struct TrainRun {
    pub checkpoint: Checkpoint,
    pub folds: Option<FoldAssignment>,
    pub train_scans: usize,
    pub heldout_scans: usize,
    pub log: Vec<EpochLog>,
    /// Unit-level AUC on the held-out fold after the last epoch.
    pub heldout_auc: Option<f64>,
}

pub fn train(manifest: &CohortManifest, data: &SampleSet, settings: &TrainSettings) -> Result<TrainRun> {
    let (train_set, heldout, folds) = if settings.folds >= 2 {
        let patients: Vec<(u32, bool)> = manifest.patients().into_iter().map(|p| (p, manifest.patient_is_mp(p))).collect();
        let f = make_folds(&patients, settings.folds, settings.training.seed)?;
        f.check_leakage(&data.metas())?;
        let last = settings.folds - 1;
        let train = data.filter_patients(|p| f.fold_of(p) != Some(last));
        let held = data.filter_patients(|p| f.fold_of(p) == Some(last));
        (train, Some(held), Some(f))
    } else {
        (data.clone(), None, None)
    };
    if train_set.is_empty() {
        return Err(Error::Usage("no training scans".into()));
    }
    let y = labels_for(&train_set.metas(), settings.scenario);
    let validate = |m: &CarnModel| -> Option<f64> {
        let held = heldout.as_ref().filter(|h| !h.is_empty())?;
        let probs = probabilities(m, held).ok()?;
        unit_predictions(held, &probs, settings.scenario, settings.hierarchy).ok()?.1
    };
    let outcome = train_carn(&train_set, &y, &settings.training, validate)?;
    let heldout_auc = outcome.log.last().and_then(|l| l.validation_auc);
    Ok(TrainRun {
        checkpoint: Checkpoint::new(outcome.model, settings.modality, settings.scenario, settings.training.clone()),
        folds,
        train_scans: train_set.len(),
        heldout_scans: heldout.as_ref().map_or(0, |h| h.len()),
        log: outcome.log,
        heldout_auc,
    })
}
