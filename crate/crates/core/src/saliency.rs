//! Layer-wise occlusion saliency.
//!
//! For each scan the scorer is re-evaluated with one layer (or a pair of
//! layers) zeroed. The logit change gives a signed effect `Δ` and its
//! magnitude `SS`. Per-scan effects are then summarised per layer, with and
//! without normalisation by layer volume, and analysed pairwise.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::cohort::SampleSet;
use crate::error::bail;
use crate::rng::mix;
use crate::scorer::Scorer;
use crate::stats::{bootstrap_ci, pearson, DirectionalScores, DEFAULT_RESAMPLES};
use crate::volume::{occlude, Layer, LayerMaskSet, LayerSet, MultiVolume};
use crate::Result;

pub const DEFAULT_OIS_EPSILON: f64 = 1e-6;

/// Number of unordered layer pairs.
pub const PAIR_COUNT: usize = 15;

/// Unordered pairs `(i, j)` with `i < j`, in lexicographic order.
pub fn layer_pairs() -> impl Iterator<Item = (Layer, Layer)> {
    Layer::ALL
        .into_iter()
        .enumerate()
        .flat_map(|(a, i)| Layer::ALL[a + 1..].iter().map(move |&j| (i, j)))
}

fn logit_drop<S: Scorer>(scorer: &S, input: &MultiVolume, full: f64, masks: &LayerMaskSet, set: LayerSet) -> Result<f64> {
    let occluded = occlude(input, masks, set)?;
    Ok(full - scorer.score(&occluded)?)
}

/// `(Δ_i, SS_i)` for one layer.
pub fn saliency_score<S: Scorer>(scorer: &S, input: &MultiVolume, masks: &LayerMaskSet, layer: Layer) -> Result<(f64, f64)> {
    let full = scorer.score(input)?;
    let d = logit_drop(scorer, input, full, masks, LayerSet::single(layer))?;
    Ok((d, d.abs()))
}

/// `SS_{i,j}` after occluding both layers together.
pub fn multi_layer_saliency<S: Scorer>(
    scorer: &S,
    input: &MultiVolume,
    masks: &LayerMaskSet,
    i: Layer,
    j: Layer,
) -> Result<f64> {
    if i == j {
        bail!(Domain, "pair saliency needs two distinct layers");
    }
    let full = scorer.score(input)?;
    Ok(logit_drop(scorer, input, full, masks, LayerSet::single(i).with(j))?.abs())
}

/// `(PDSS, NDSS)`: mean positive part and mean negated negative part.
pub fn directional_summary(deltas: &[f64]) -> Result<(f64, f64)> {
    if deltas.is_empty() {
        bail!(Domain, "directional summary of no scans");
    }
    let n = deltas.len() as f64;
    let pos = deltas.iter().map(|d| d.max(0.0)).sum::<f64>() / n;
    let neg = -deltas.iter().map(|d| d.min(0.0)).sum::<f64>() / n;
    Ok((pos, neg))
}

/// Occlusion-interaction score of a layer pair.
pub fn ois(ss_i: f64, ss_j: f64, ss_ij: f64, epsilon: f64) -> f64 {
    let sum = ss_i + ss_j;
    (ss_ij - sum) / sum.max(epsilon)
}

/// Pearson correlation of two per-scan saliency series; `None` if undefined.
pub fn saliency_correlation(a: &[f64], b: &[f64]) -> Option<f64> {
    pearson(a, b)
}

/// Everything measured on one scan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanSaliency {
    pub full_logit: f64,
    /// `Δ_i`, indexed by layer.
    pub delta: [f64; 6],
    /// Voxel count of each layer in the scan's mask.
    pub volume: [usize; 6],
    /// `SS_{i,j}` in [`layer_pairs`] order, when pairs were requested.
    pub pair_ss: Option<Vec<f64>>,
}

impl ScanSaliency {
    pub fn ss(&self, layer: Layer) -> f64 {
        self.delta[layer.index()].abs()
    }

    /// OIS of every pair in [`layer_pairs`] order.
    pub fn ois(&self, epsilon: f64) -> Option<Vec<f64>> {
        let pairs = self.pair_ss.as_ref()?;
        Some(layer_pairs().zip(pairs).map(|((i, j), &sij)| ois(self.ss(i), self.ss(j), sij, epsilon)).collect())
    }
}

/// Occlusion effects of all six layers, plus all pairs if requested.
pub fn scan_saliency<S: Scorer>(scorer: &S, input: &MultiVolume, masks: &LayerMaskSet, pairs: bool) -> Result<ScanSaliency> {
    let full_logit = scorer.score(input)?;
    let mut delta = [0.0; 6];
    let mut volume = [0usize; 6];
    for layer in Layer::ALL {
        volume[layer.index()] = masks.layer_volume(layer);
        delta[layer.index()] = logit_drop(scorer, input, full_logit, masks, LayerSet::single(layer))?;
    }
    let pair_ss = if pairs {
        let mut v = Vec::with_capacity(PAIR_COUNT);
        for (i, j) in layer_pairs() {
            v.push(logit_drop(scorer, input, full_logit, masks, LayerSet::single(i).with(j))?.abs());
        }
        Some(v)
    } else {
        None
    };
    Ok(ScanSaliency { full_logit, delta, volume, pair_ss })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VolumeAdjusted {
    pub ss: Estimate,
    pub pdss: Estimate,
    pub ndss: Estimate,
    /// Scans contributing (layer volume > 0).
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub layer: Layer,
    pub n: usize,
    pub ss: Estimate,
    pub delta: Estimate,
    pub pdss: Estimate,
    pub ndss: Estimate,
    /// `None` when every scan has an empty layer.
    pub volume_adjusted: Option<VolumeAdjusted>,
    /// Scans excluded from the volume-adjusted averages.
    pub excluded: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SaliencyReport {
    pub scans: usize,
    pub resamples: usize,
    pub layers: Vec<LayerSummary>,
}

impl SaliencyReport {
    pub fn layer(&self, layer: Layer) -> &LayerSummary {
        &self.layers[layer.index()]
    }

    /// Layers ordered by mean SS, largest first (ties by layer code).
    pub fn ranking(&self) -> Vec<Layer> {
        let mut order: Vec<Layer> = Layer::ALL.to_vec();
        order.sort_by(|a, b| self.layer(*b).ss.mean.total_cmp(&self.layer(*a).ss.mean).then(a.cmp(b)));
        order
    }

    /// Mean SS over all layers.
    pub fn mean_ss(&self) -> f64 {
        self.layers.iter().map(|l| l.ss.mean).sum::<f64>() / self.layers.len() as f64
    }
}

/// Symmetric 6×6 matrices indexed by layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionReport {
    pub epsilon: f64,
    pub rho: [[Option<f64>; 6]; 6],
    pub ois: [[Option<f64>; 6]; 6],
    pub counts: [[usize; 6]; 6],
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub pairs: bool,
    pub epsilon: f64,
    pub resamples: usize,
    pub seed: u64,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        AnalysisOptions { pairs: true, epsilon: DEFAULT_OIS_EPSILON, resamples: DEFAULT_RESAMPLES, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerAnalysis {
    pub saliency: SaliencyReport,
    pub interactions: Option<InteractionReport>,
}

fn estimate(values: &[f64], options: &AnalysisOptions, tag: &[u64]) -> Result<Estimate> {
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let (ci_low, ci_high) = bootstrap_ci(values, options.resamples, 0.95, mix(&[options.seed, mix(tag)]))?;
    Ok(Estimate { mean, ci_low, ci_high })
}

/// Per-layer summary of per-scan effects.
pub fn summarize(scans: &[ScanSaliency], options: &AnalysisOptions) -> Result<SaliencyReport> {
    if scans.is_empty() {
        bail!(Domain, "no eligible scans for saliency analysis");
    }
    let mut layers = Vec::with_capacity(6);
    for layer in Layer::ALL {
        let li = layer.index();
        let code = layer.code() as u64;
        let deltas: Vec<f64> = scans.iter().map(|s| s.delta[li]).collect();
        let ss: Vec<f64> = deltas.iter().map(|d| d.abs()).collect();
        let pos: Vec<f64> = deltas.iter().map(|d| d.max(0.0)).collect();
        let neg: Vec<f64> = deltas.iter().map(|d| -d.min(0.0)).collect();
        let adjusted: Vec<f64> = scans.iter().filter(|s| s.volume[li] > 0).map(|s| s.delta[li] / s.volume[li] as f64).collect();
        let volume_adjusted = if adjusted.is_empty() {
            None
        } else {
            let a_ss: Vec<f64> = adjusted.iter().map(|d| d.abs()).collect();
            let a_pos: Vec<f64> = adjusted.iter().map(|d| d.max(0.0)).collect();
            let a_neg: Vec<f64> = adjusted.iter().map(|d| -d.min(0.0)).collect();
            Some(VolumeAdjusted {
                ss: estimate(&a_ss, options, &[code, 4])?,
                pdss: estimate(&a_pos, options, &[code, 5])?,
                ndss: estimate(&a_neg, options, &[code, 6])?,
                n: adjusted.len(),
            })
        };
        layers.push(LayerSummary {
            layer,
            n: scans.len(),
            ss: estimate(&ss, options, &[code, 0])?,
            delta: estimate(&deltas, options, &[code, 1])?,
            pdss: estimate(&pos, options, &[code, 2])?,
            ndss: estimate(&neg, options, &[code, 3])?,
            volume_adjusted,
            excluded: scans.len() - adjusted.len(),
        });
    }
    Ok(SaliencyReport { scans: scans.len(), resamples: options.resamples, layers })
}

/// Correlation and mean OIS of every layer pair over scans with pair data.
pub fn interactions(scans: &[ScanSaliency], epsilon: f64) -> Result<InteractionReport> {
    let with_pairs: Vec<&ScanSaliency> = scans.iter().filter(|s| s.pair_ss.is_some()).collect();
    if with_pairs.is_empty() {
        bail!(Domain, "no scans carry pair occlusion results");
    }
    let series: Vec<Vec<f64>> = Layer::ALL.iter().map(|&l| scans.iter().map(|s| s.ss(l)).collect()).collect();
    let mut rho = [[None; 6]; 6];
    let mut ois_m = [[None; 6]; 6];
    let mut counts = [[0usize; 6]; 6];
    for i in 0..6 {
        rho[i][i] = pearson(&series[i], &series[i]).map(|_| 1.0);
        counts[i][i] = scans.len();
    }
    let per_scan: Vec<Vec<f64>> = with_pairs.iter().filter_map(|s| s.ois(epsilon)).collect();
    for (k, (a, b)) in layer_pairs().enumerate() {
        let (i, j) = (a.index(), b.index());
        let r = saliency_correlation(&series[i], &series[j]);
        rho[i][j] = r;
        rho[j][i] = r;
        let m = per_scan.iter().map(|v| v[k]).sum::<f64>() / per_scan.len() as f64;
        ois_m[i][j] = Some(m);
        ois_m[j][i] = Some(m);
        counts[i][j] = per_scan.len();
        counts[j][i] = per_scan.len();
    }
    Ok(InteractionReport { epsilon, rho, ois: ois_m, counts })
}

/// Full analysis over a sample set, evaluated serially in sample order.
pub fn run_layer_analysis<S: Scorer>(scorer: &S, data: &SampleSet, options: &AnalysisOptions) -> Result<(Vec<ScanSaliency>, LayerAnalysis)> {
    let scans = data
        .samples
        .iter()
        .enumerate()
        .map(|(i, s)| scan_saliency(scorer, &s.input, data.mask_of(i), options.pairs))
        .collect::<Result<Vec<_>>>()?;
    let analysis = analyse(&scans, options)?;
    Ok((scans, analysis))
}

/// Summary and (optionally) interactions from precomputed per-scan results.
pub fn analyse(scans: &[ScanSaliency], options: &AnalysisOptions) -> Result<LayerAnalysis> {
    let saliency = summarize(scans, options)?;
    let interactions = if options.pairs { Some(interactions(scans, options.epsilon)?) } else { None };
    Ok(LayerAnalysis { saliency, interactions })
}

/// Raw directional scores per group (for example per side), groups in key order.
pub fn group_directional<K: Ord + Clone>(scans: &[ScanSaliency], keys: &[K]) -> Result<Vec<(K, DirectionalScores)>> {
    if scans.len() != keys.len() {
        bail!(Shape, "{} scans for {} group keys", scans.len(), keys.len());
    }
    let mut groups: BTreeMap<K, Vec<&ScanSaliency>> = BTreeMap::new();
    for (s, k) in scans.iter().zip(keys) {
        groups.entry(k.clone()).or_default().push(s);
    }
    groups
        .into_iter()
        .map(|(k, members)| {
            let mut d = DirectionalScores { pdss: [0.0; 6], ndss: [0.0; 6] };
            for layer in Layer::ALL {
                let deltas: Vec<f64> = members.iter().map(|s| s.delta[layer.index()]).collect();
                let (p, n) = directional_summary(&deltas)?;
                d.pdss[layer.index()] = p;
                d.ndss[layer.index()] = n;
            }
            Ok((k, d))
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerCollapse {
    pub layer: Layer,
    pub trained: f64,
    pub randomized: f64,
    pub ratio: Option<f64>,
}

/// Mean saliency of a trained scorer against a randomly re-initialised copy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SanityReport {
    pub seed: u64,
    pub trained_mean_ss: f64,
    pub randomized_mean_ss: f64,
    /// `trained / randomized`; `None` when the randomized mean is zero.
    pub ratio: Option<f64>,
    pub layers: Vec<LayerCollapse>,
    pub randomized: SaliencyReport,
}

fn ratio(a: f64, b: f64) -> Option<f64> {
    (b > 0.0).then(|| a / b)
}

pub fn sanity_compare(trained: &SaliencyReport, randomized: SaliencyReport, seed: u64) -> SanityReport {
    let layers = Layer::ALL
        .iter()
        .map(|&l| {
            let (t, r) = (trained.layer(l).ss.mean, randomized.layer(l).ss.mean);
            LayerCollapse { layer: l, trained: t, randomized: r, ratio: ratio(t, r) }
        })
        .collect();
    let (t, r) = (trained.mean_ss(), randomized.mean_ss());
    SanityReport { seed, trained_mean_ss: t, randomized_mean_ss: r, ratio: ratio(t, r), layers, randomized }
}

/// Recomputes the saliency report under a `seed`-randomised copy of the model.
pub fn sanity_randomization(
    trained: &crate::carn::CarnModel,
    data: &SampleSet,
    seed: u64,
    options: &AnalysisOptions,
) -> Result<SanityReport> {
    let opts = AnalysisOptions { pairs: false, ..*options };
    let (_, base) = run_layer_analysis(trained, data, &opts)?;
    let random = trained.randomize(seed);
    let (_, rand_report) = run_layer_analysis(&random, data, &opts)?;
    Ok(sanity_compare(&base.saliency, rand_report.saliency, seed))
}
