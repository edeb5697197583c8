//! Insertion/deletion faithfulness of layer rankings.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cohort::SampleSet;
use crate::error::bail;
use crate::rng::{mix, substream};
use crate::saliency::scan_saliency;
use crate::scorer::{InputGradient, Scorer};
use crate::stats::{paired_t_test, PairedTTest};
use crate::volume::{occlude, Layer, LayerMaskSet, LayerSet, MultiVolume, VolumeGrid};
use crate::Result;

pub const DEFAULT_IROF_EPSILON: f64 = 1e-6;
pub const DEFAULT_IG_STEPS: usize = 32;
pub const DEFAULT_SMOOTHGRAD_SAMPLES: usize = 25;
pub const DEFAULT_SMOOTHGRAD_SIGMA: f64 = 0.1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "LAYER")]
    Layer,
    #[serde(rename = "IG")]
    IntegratedGradients,
    #[serde(rename = "SmoothGrad")]
    SmoothGrad,
    #[serde(rename = "Random")]
    Random,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Layer, Method::IntegratedGradients, Method::SmoothGrad, Method::Random];

    pub fn name(self) -> &'static str {
        match self {
            Method::Layer => "LAYER",
            Method::IntegratedGradients => "IG",
            Method::SmoothGrad => "SmoothGrad",
            Method::Random => "Random",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "layer" => Ok(Method::Layer),
            "ig" => Ok(Method::IntegratedGradients),
            "smoothgrad" => Ok(Method::SmoothGrad),
            "random" => Ok(Method::Random),
            _ => bail!(Config, "unknown ranking method '{}'", s),
        }
    }
}

/// A permutation of the six layers, most important first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankedLayers {
    pub method: Method,
    pub order: [Layer; 6],
}

impl RankedLayers {
    pub fn new(method: Method, order: [Layer; 6]) -> Result<Self> {
        let set: LayerSet = order.iter().copied().collect();
        if set.len() != 6 {
            bail!(Domain, "ranking is not a permutation of the six layers");
        }
        Ok(RankedLayers { method, order })
    }

    /// Descending by score; equal scores keep layer-code order.
    pub fn from_scores(method: Method, scores: &[f64; 6]) -> Self {
        let mut order = Layer::ALL;
        order.sort_by(|a, b| scores[b.index()].total_cmp(&scores[a.index()]).then(a.cmp(b)));
        RankedLayers { method, order }
    }
}

/// Logit trajectories for `K = 6` cumulative steps.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curves {
    /// `i_0..i_K`, from all layers zeroed to the full volume.
    pub insertion: Vec<f64>,
    /// `d_0..d_K`, from the full volume to all layers zeroed.
    pub deletion: Vec<f64>,
}

pub fn insertion_deletion_curves<S: Scorer>(
    scorer: &S,
    input: &MultiVolume,
    masks: &LayerMaskSet,
    ranking: &RankedLayers,
) -> Result<Curves> {
    let k = ranking.order.len();
    let full = scorer.score(input)?;
    let empty = scorer.score(&occlude(input, masks, LayerSet::all())?)?;
    let mut insertion = vec![empty];
    let mut deletion = vec![full];
    for step in 1..k {
        let removed: LayerSet = ranking.order[..step].iter().copied().collect();
        let kept: LayerSet = ranking.order[step..].iter().copied().collect();
        insertion.push(scorer.score(&occlude(input, masks, kept)?)?);
        deletion.push(scorer.score(&occlude(input, masks, removed)?)?);
    }
    insertion.push(full);
    deletion.push(empty);
    Ok(Curves { insertion, deletion })
}

/// `(1/K) Σ ½ (x_{k−1} + x_k)`.
pub fn curve_auc(curve: &[f64]) -> f64 {
    let k = curve.len().saturating_sub(1);
    if k == 0 {
        return 0.0;
    }
    curve.windows(2).map(|w| 0.5 * (w[0] + w[1])).sum::<f64>() / k as f64
}

pub fn auc_insertion(curves: &Curves) -> f64 {
    curve_auc(&curves.insertion)
}

pub fn auc_deletion(curves: &Curves) -> f64 {
    curve_auc(&curves.deletion)
}

pub fn auc_delta(curves: &Curves) -> f64 {
    auc_insertion(curves) - auc_deletion(curves)
}

/// `(max i_k / (min d_k + ε), flagged)`; flagged when the denominator is not positive.
pub fn irof(curves: &Curves, epsilon: f64) -> (f64, bool) {
    let top = curves.insertion.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let den = curves.deletion.iter().copied().fold(f64::INFINITY, f64::min) + epsilon;
    (top / den, den <= 0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub auc_ins: f64,
    pub auc_del: f64,
    pub auc_delta: f64,
    pub irof: f64,
    pub irof_flagged: bool,
}

impl Metrics {
    pub fn of(curves: &Curves, epsilon: f64) -> Self {
        let auc_ins = auc_insertion(curves);
        let auc_del = auc_deletion(curves);
        let (irof, irof_flagged) = irof(curves, epsilon);
        Metrics { auc_ins, auc_del, auc_delta: auc_ins - auc_del, irof, irof_flagged }
    }

    pub fn get(&self, metric: Metric) -> f64 {
        match metric {
            Metric::AucIns => self.auc_ins,
            Metric::AucDel => self.auc_del,
            Metric::AucDelta => self.auc_delta,
            Metric::Irof => self.irof,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "AUC_ins")]
    AucIns,
    #[serde(rename = "AUC_del")]
    AucDel,
    #[serde(rename = "AUC_delta")]
    AucDelta,
    #[serde(rename = "IROF")]
    Irof,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::AucIns, Metric::AucDel, Metric::AucDelta, Metric::Irof];
}

fn layer_sums(masks: &LayerMaskSet, attribution: &InputGradient) -> [f64; 6] {
    let mut s = [0.0; 7];
    for ch in attribution {
        for (&l, &a) in masks.labels().iter().zip(ch) {
            s[l as usize] += a.abs();
        }
    }
    [s[1], s[2], s[3], s[4], s[5], s[6]]
}

fn check_gradient<S: Scorer>(scorer: &S) -> Result<()> {
    if !scorer.has_input_gradient() {
        bail!(Capability, "gradient-based ranking needs a scorer with input gradients");
    }
    Ok(())
}

/// Path-integrated gradients from the zero baseline, midpoint Riemann sum.
pub fn integrated_gradients<S: Scorer>(scorer: &S, input: &MultiVolume, steps: usize) -> Result<InputGradient> {
    check_gradient(scorer)?;
    if steps == 0 {
        bail!(Config, "integrated gradients needs at least one step");
    }
    let mut acc: InputGradient = input.channels().iter().map(|c| vec![0.0; c.voxels().len()]).collect();
    for s in 0..steps {
        let alpha = (s as f64 + 0.5) / steps as f64;
        let scaled = input.map_voxels(|_, _, x| (x as f64 * alpha) as f32);
        let g = scorer.input_gradient(&scaled)?;
        for (a, gc) in acc.iter_mut().zip(&g) {
            for (ai, gi) in a.iter_mut().zip(gc) {
                *ai += gi;
            }
        }
    }
    for (a, ch) in acc.iter_mut().zip(input.channels()) {
        for (ai, &x) in a.iter_mut().zip(ch.voxels()) {
            *ai *= x as f64 / steps as f64;
        }
    }
    Ok(acc)
}

pub fn rank_layers_ig<S: Scorer>(scorer: &S, input: &MultiVolume, masks: &LayerMaskSet, steps: usize) -> Result<RankedLayers> {
    let attr = integrated_gradients(scorer, input, steps)?;
    Ok(RankedLayers::from_scores(Method::IntegratedGradients, &layer_sums(masks, &attr)))
}

/// Mean absolute input gradient over noisy copies of the input.
pub fn smoothgrad<S: Scorer>(scorer: &S, input: &MultiVolume, samples: usize, sigma_rel: f64, seed: u64) -> Result<InputGradient> {
    check_gradient(scorer)?;
    if samples == 0 || !(sigma_rel >= 0.0) {
        bail!(Config, "smoothgrad needs samples > 0 and a non-negative noise level");
    }
    let abs = |g: InputGradient| -> InputGradient { g.into_iter().map(|c| c.into_iter().map(f64::abs).collect()).collect() };
    if sigma_rel == 0.0 {
        return scorer.input_gradient(input).map(abs);
    }
    let sigmas: Vec<f64> = input.channels().iter().map(|c| sigma_rel * c.value_range()).collect();
    let mut rng = substream(seed, 0x5347);
    let mut acc: InputGradient = input.channels().iter().map(|c| vec![0.0; c.voxels().len()]).collect();
    for _ in 0..samples {
        let mut channels = Vec::with_capacity(sigmas.len());
        for (c, &sd) in input.channels().iter().zip(&sigmas) {
            let normal = Normal::new(0.0, sd).map_err(|_| crate::Error::Config(String::from("invalid noise level")))?;
            let v: Vec<f32> = c.voxels().iter().map(|&x| (x as f64 + normal.sample(&mut rng)) as f32).collect();
            channels.push(VolumeGrid::from_parts_unchecked(c.dims(), c.modality(), v));
        }
        let g = scorer.input_gradient(&MultiVolume::new(channels)?)?;
        for (a, gc) in acc.iter_mut().zip(&g) {
            for (ai, gi) in a.iter_mut().zip(gc) {
                *ai += gi.abs();
            }
        }
    }
    for a in acc.iter_mut() {
        a.iter_mut().for_each(|v| *v /= samples as f64);
    }
    Ok(acc)
}

pub fn rank_layers_smoothgrad<S: Scorer>(
    scorer: &S,
    input: &MultiVolume,
    masks: &LayerMaskSet,
    samples: usize,
    sigma_rel: f64,
    seed: u64,
) -> Result<RankedLayers> {
    let g = smoothgrad(scorer, input, samples, sigma_rel, seed)?;
    Ok(RankedLayers::from_scores(Method::SmoothGrad, &layer_sums(masks, &g)))
}

/// Seeded uniform permutation for scan `scan`.
pub fn rank_layers_random(seed: u64, scan: u64) -> RankedLayers {
    let mut order = Layer::ALL;
    order.shuffle(&mut substream(seed, mix(&[0x52414E44, scan])));
    RankedLayers { method: Method::Random, order }
}

/// How occlusion effects are turned into the LAYER ranking.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LayerBasis {
    /// Signed logit change `Δ`, largest first.
    Directional,
    /// Unsigned saliency `|Δ|`, largest first.
    Magnitude,
}

pub fn rank_layers_occlusion<S: Scorer>(scorer: &S, input: &MultiVolume, masks: &LayerMaskSet, basis: LayerBasis) -> Result<RankedLayers> {
    let scan = scan_saliency(scorer, input, masks, false)?;
    let scores = match basis {
        LayerBasis::Directional => scan.delta,
        LayerBasis::Magnitude => scan.delta.map(f64::abs),
    };
    Ok(RankedLayers::from_scores(Method::Layer, &scores))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub seed: u64,
    pub epsilon: f64,
    pub ig_steps: usize,
    pub smoothgrad_samples: usize,
    pub smoothgrad_sigma: f64,
    pub layer_basis: LayerBasis,
}

impl Default for CompareConfig {
    fn default() -> Self {
        CompareConfig {
            seed: 0,
            epsilon: DEFAULT_IROF_EPSILON,
            ig_steps: DEFAULT_IG_STEPS,
            smoothgrad_samples: DEFAULT_SMOOTHGRAD_SAMPLES,
            smoothgrad_sigma: DEFAULT_SMOOTHGRAD_SIGMA,
            layer_basis: LayerBasis::Directional,
        }
    }
}

pub fn rank_layers<S: Scorer>(
    scorer: &S,
    input: &MultiVolume,
    masks: &LayerMaskSet,
    method: Method,
    scan: u64,
    config: &CompareConfig,
) -> Result<RankedLayers> {
    match method {
        Method::Layer => rank_layers_occlusion(scorer, input, masks, config.layer_basis),
        Method::IntegratedGradients => rank_layers_ig(scorer, input, masks, config.ig_steps),
        Method::SmoothGrad => rank_layers_smoothgrad(
            scorer,
            input,
            masks,
            config.smoothgrad_samples,
            config.smoothgrad_sigma,
            mix(&[config.seed, scan]),
        ),
        Method::Random => Ok(rank_layers_random(config.seed, scan)),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FaithfulnessResult {
    pub scan: usize,
    pub method: Method,
    pub ranking: [Layer; 6],
    pub curves: Curves,
    pub metrics: Metrics,
}

/// Rankings, curves and metrics of every method on one scan.
pub fn evaluate_scan<S: Scorer>(
    scorer: &S,
    input: &MultiVolume,
    masks: &LayerMaskSet,
    scan: usize,
    methods: &[Method],
    config: &CompareConfig,
) -> Result<Vec<FaithfulnessResult>> {
    methods
        .iter()
        .map(|&m| {
            let r = rank_layers(scorer, input, masks, m, scan as u64, config)?;
            let curves = insertion_deletion_curves(scorer, input, masks, &r)?;
            let metrics = Metrics::of(&curves, config.epsilon);
            Ok(FaithfulnessResult { scan, method: m, ranking: r.order, curves, metrics })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: Method,
    pub mean: Metrics,
    pub irof_flagged: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodTest {
    pub reference: Method,
    pub other: Method,
    pub metric: Metric,
    /// Per-scan difference `reference − other`.
    pub test: PairedTTest,
    /// Scans on which the reference is strictly better (lower for deletion).
    pub wins: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub methods: Vec<Method>,
    pub scans: usize,
    pub results: Vec<FaithfulnessResult>,
    pub summaries: Vec<MethodSummary>,
    /// The first method against each other method, for each metric.
    pub tests: Vec<MethodTest>,
}

impl Comparison {
    pub fn test(&self, other: Method, metric: Metric) -> Option<&MethodTest> {
        self.tests.iter().find(|t| t.other == other && t.metric == metric)
    }
}

/// Table and paired tests from per-scan results, grouped by scan in `methods` order.
pub fn assemble_comparison(methods: &[Method], results: Vec<FaithfulnessResult>) -> Result<Comparison> {
    if methods.len() < 2 {
        bail!(Domain, "method comparison needs at least two methods");
    }
    let scans = results.len() / methods.len();
    if scans < 2 {
        bail!(Domain, "method comparison needs at least two scans");
    }
    let column = |m: Method| -> Vec<&Metrics> { results.iter().filter(|r| r.method == m).map(|r| &r.metrics).collect() };
    let summaries = methods
        .iter()
        .map(|&m| {
            let col = column(m);
            let n = col.len() as f64;
            let mean = |f: &dyn Fn(&Metrics) -> f64| col.iter().map(|x| f(x)).sum::<f64>() / n;
            MethodSummary {
                method: m,
                mean: Metrics {
                    auc_ins: mean(&|x| x.auc_ins),
                    auc_del: mean(&|x| x.auc_del),
                    auc_delta: mean(&|x| x.auc_delta),
                    irof: mean(&|x| x.irof),
                    irof_flagged: false,
                },
                irof_flagged: col.iter().filter(|x| x.irof_flagged).count(),
            }
        })
        .collect();
    let reference = methods[0];
    let ref_col = column(reference);
    let mut tests = Vec::new();
    for &other in &methods[1..] {
        let col = column(other);
        for metric in Metric::ALL {
            let a: Vec<f64> = ref_col.iter().map(|x| x.get(metric)).collect();
            let b: Vec<f64> = col.iter().map(|x| x.get(metric)).collect();
            let wins = a
                .iter()
                .zip(&b)
                .filter(|(x, y)| if metric == Metric::AucDel { x < y } else { x > y })
                .count();
            tests.push(MethodTest { reference, other, metric, test: paired_t_test(&a, &b)?, wins });
        }
    }
    Ok(Comparison { methods: methods.to_vec(), scans, results, summaries, tests })
}

pub fn compare_methods<S: Scorer>(scorer: &S, data: &SampleSet, methods: &[Method], config: &CompareConfig) -> Result<Comparison> {
    if methods.len() < 2 {
        bail!(Domain, "method comparison needs at least two methods");
    }
    let mut results = Vec::with_capacity(data.len() * methods.len());
    for (i, s) in data.samples.iter().enumerate() {
        results.extend(evaluate_scan(scorer, &s.input, data.mask_of(i), i, methods, config)?);
    }
    assemble_comparison(methods, results)
}
