//! JSON envelopes and flat CSV tables.

use std::path::Path;

use layer_core::carn::EpochLog;
use layer_core::cohort::SampleSet;
use layer_core::faithfulness::Comparison;
use layer_core::saliency::{layer_pairs, Estimate, LayerAnalysis, ScanSaliency};
use layer_core::Layer;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{read, write, Error, Result};
use crate::pipeline::AssociationReport;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Common wrapper of every JSON document the tool writes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Envelope<D> {
    pub schema: String,
    pub version: String,
    pub seed: u64,
    pub config: Value,
    pub data: D,
}

impl<D: Serialize> Envelope<D> {
    pub fn new(kind: Kind, seed: u64, config: &impl Serialize, data: D) -> Self {
        Envelope {
            schema: kind.id().to_string(),
            version: VERSION.to_string(),
            seed,
            config: serde_json::to_value(config).expect("config serializes"),
            data,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("report serializes");
        out.push(b'\n');
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write(path, &self.to_bytes())
    }
}

impl<D: DeserializeOwned> Envelope<D> {
    /// Reads an envelope and checks that it carries the expected schema id.
    pub fn load(path: &Path, kind: Kind) -> Result<Self> {
        let e: Envelope<D> = serde_json::from_slice(&read(path)?).map_err(|e| Error::json(path, e))?;
        if e.schema != kind.id() {
            return Err(Error::Json { path: path.to_path_buf(), message: format!("schema '{}', expected '{}'", e.schema, kind.id()) });
        }
        Ok(e)
    }
}

/// Kinds of emitted JSON document, each with a published schema.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Kind {
    Manifest,
    Phantom,
    Train,
    Explain,
    Faithfulness,
    Sanity,
    Association,
    Error,
}

impl Kind {
    pub const ALL: [Kind; 8] = [
        Kind::Manifest,
        Kind::Phantom,
        Kind::Train,
        Kind::Explain,
        Kind::Faithfulness,
        Kind::Sanity,
        Kind::Association,
        Kind::Error,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Kind::Manifest => "manifest",
            Kind::Phantom => "phantom",
            Kind::Train => "train",
            Kind::Explain => "explain",
            Kind::Faithfulness => "faithfulness",
            Kind::Sanity => "sanity",
            Kind::Association => "associate",
            Kind::Error => "error",
        }
    }

    pub fn id(self) -> String {
        format!("layer/{}/v1", self.name())
    }

    pub fn parse(s: &str) -> Option<Kind> {
        Kind::ALL.into_iter().find(|k| k.name() == s)
    }

    /// JSON Schema (draft 2020-12) of the document.
    pub fn schema(self) -> &'static str {
        match self {
            Kind::Manifest => include_str!("../schemas/manifest.json"),
            Kind::Phantom => include_str!("../schemas/phantom.json"),
            Kind::Train => include_str!("../schemas/train.json"),
            Kind::Explain => include_str!("../schemas/explain.json"),
            Kind::Faithfulness => include_str!("../schemas/faithfulness.json"),
            Kind::Sanity => include_str!("../schemas/sanity.json"),
            Kind::Association => include_str!("../schemas/associate.json"),
            Kind::Error => include_str!("../schemas/error.json"),
        }
    }
}

fn table<R: Serialize>(path: &Path, rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::Io { path: path.to_path_buf(), source: e.into() })?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io { path: path.to_path_buf(), source: e.into_error() })?;
    write(path, &bytes)
}

#[derive(Serialize)]
struct LogRow {
    epoch: usize,
    #[serde(rename = "N_e")]
    pool_size: usize,
    mean_loss: f64,
    validation_auc: Option<f64>,
    selection_hash: String,
}

pub fn training_log_csv(path: &Path, log: &[EpochLog]) -> Result<()> {
    table(
        path,
        log.iter().map(|l| LogRow {
            epoch: l.epoch,
            pool_size: l.pool_size,
            mean_loss: l.mean_loss,
            validation_auc: l.validation_auc,
            selection_hash: format!("{:016x}", l.selection_hash),
        }),
    )
}

#[derive(Serialize)]
struct LayerRow {
    layer: &'static str,
    n: usize,
    ss: f64,
    ss_ci_low: f64,
    ss_ci_high: f64,
    delta: f64,
    pdss: f64,
    pdss_ci_low: f64,
    pdss_ci_high: f64,
    ndss: f64,
    ndss_ci_low: f64,
    ndss_ci_high: f64,
    adjusted_ss: Option<f64>,
    adjusted_pdss: Option<f64>,
    adjusted_ndss: Option<f64>,
    adjusted_n: usize,
    excluded: usize,
}

pub fn saliency_layers_csv(path: &Path, a: &LayerAnalysis) -> Result<()> {
    table(
        path,
        a.saliency.layers.iter().map(|l| {
            let va = l.volume_adjusted.as_ref();
            let m = |f: fn(&layer_core::saliency::VolumeAdjusted) -> Estimate| va.map(|v| f(v).mean);
            LayerRow {
                layer: l.layer.name(),
                n: l.n,
                ss: l.ss.mean,
                ss_ci_low: l.ss.ci_low,
                ss_ci_high: l.ss.ci_high,
                delta: l.delta.mean,
                pdss: l.pdss.mean,
                pdss_ci_low: l.pdss.ci_low,
                pdss_ci_high: l.pdss.ci_high,
                ndss: l.ndss.mean,
                ndss_ci_low: l.ndss.ci_low,
                ndss_ci_high: l.ndss.ci_high,
                adjusted_ss: m(|v| v.ss),
                adjusted_pdss: m(|v| v.pdss),
                adjusted_ndss: m(|v| v.ndss),
                adjusted_n: va.map_or(0, |v| v.n),
                excluded: l.excluded,
            }
        }),
    )
}

#[derive(Serialize)]
struct PairRow {
    layer_a: &'static str,
    layer_b: &'static str,
    rho: Option<f64>,
    ois: Option<f64>,
    n: usize,
}

pub fn saliency_pairs_csv(path: &Path, a: &LayerAnalysis) -> Result<()> {
    let Some(ix) = &a.interactions else {
        return Ok(());
    };
    table(
        path,
        layer_pairs().map(|(i, j)| {
            let (p, q) = (i.index(), j.index());
            PairRow { layer_a: i.name(), layer_b: j.name(), rho: ix.rho[p][q], ois: ix.ois[p][q], n: ix.counts[p][q] }
        }),
    )
}

pub fn scans_csv(path: &Path, data: &SampleSet, scans: &[ScanSaliency]) -> Result<()> {
    let mut header = vec!["scan", "patient", "visit", "side", "site", "repetition", "label", "full_logit"].into_iter().map(String::from).collect::<Vec<_>>();
    header.extend(Layer::ALL.iter().map(|l| format!("delta_{}", l.name().replace(' ', "_"))));
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io { path: path.to_path_buf(), source: e.into() };
    w.write_record(&header).map_err(io)?;
    for (i, (s, m)) in scans.iter().zip(data.metas()).enumerate() {
        let mut rec = vec![
            i.to_string(),
            m.patient.to_string(),
            m.visit.to_string(),
            enum_name(&m.side),
            enum_name(&m.site),
            m.repetition.to_string(),
            enum_name(&m.label),
            s.full_logit.to_string(),
        ];
        rec.extend(s.delta.iter().map(f64::to_string));
        w.write_record(&rec).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io { path: path.to_path_buf(), source: e.into_error() })?;
    write(path, &bytes)
}

fn enum_name(v: &impl Serialize) -> String {
    match serde_json::to_value(v) {
        Ok(Value::String(s)) => s,
        _ => String::new(),
    }
}

#[derive(Serialize)]
struct FaithRow {
    scan: usize,
    method: &'static str,
    #[serde(rename = "AUC_ins")]
    auc_ins: f64,
    #[serde(rename = "AUC_del")]
    auc_del: f64,
    #[serde(rename = "AUC_delta")]
    auc_delta: f64,
    #[serde(rename = "IROF")]
    irof: f64,
    irof_flagged: bool,
}

pub fn faithfulness_csv(path: &Path, c: &Comparison) -> Result<()> {
    table(
        path,
        c.results.iter().map(|r| FaithRow {
            scan: r.scan,
            method: r.method.name(),
            auc_ins: r.metrics.auc_ins,
            auc_del: r.metrics.auc_del,
            auc_delta: r.metrics.auc_delta,
            irof: r.metrics.irof,
            irof_flagged: r.metrics.irof_flagged,
        }),
    )
}

#[derive(Serialize)]
struct AssocRow {
    layer: &'static str,
    kind: &'static str,
    beta1: Option<f64>,
    ci_low: Option<f64>,
    ci_high: Option<f64>,
    p: Option<f64>,
    auc: Option<f64>,
    pass: bool,
    estimator: Option<layer_core::stats::Estimator>,
    error: Option<String>,
}

pub fn association_csv(path: &Path, r: &AssociationReport) -> Result<()> {
    table(
        path,
        r.rows.iter().map(|row| {
            let a = row.result.as_ref();
            AssocRow {
                layer: row.layer.name(),
                kind: row.kind.name(),
                beta1: a.map(|a| a.beta1),
                ci_low: a.map(|a| a.ci_low),
                ci_high: a.map(|a| a.ci_high),
                p: a.map(|a| a.p),
                auc: a.map(|a| a.auc),
                pass: a.is_some_and(|a| a.pass),
                estimator: a.map(|a| a.estimator),
                error: row.error.clone(),
            }
        }),
    )
}
