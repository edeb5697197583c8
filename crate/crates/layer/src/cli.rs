//! Command-line interface.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{ArgAction, Args, Parser, Subcommand};
use layer_core::aggregate::{HierarchyOptions, Scenario};
use layer_core::carn::TrainConfig;
use layer_core::cohort::{ModalitySet, SampleSet};
use layer_core::faithfulness::{CompareConfig, LayerBasis, Method};
use layer_core::phantom::PhantomConfig;
use layer_core::saliency::{AnalysisOptions, LayerAnalysis, ScanSaliency, DEFAULT_OIS_EPSILON};
use layer_core::stats::DEFAULT_RESAMPLES;
use layer_core::volume::Dims;
use layer_core::Layer;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::checkpoint::{Checkpoint, CheckpointHeader};
use crate::error::{write, Error, Result};
use crate::manifest::{generate, read_samples, write_cohort, MANIFEST_FILE};
use crate::output::{self, Envelope, Kind, VERSION};
use crate::pipeline::{self, TrainSettings};
use crate::svg::{self, ChordValue};

#[derive(Debug, Parser)]
#[command(name = "layer", version, about = "Layer-wise occlusion explainability for volumetric classifiers")]
pub struct Cli {
    /// Worker threads; 0 picks one per core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic layered cohort with a planted signal.
    Phantom(PhantomArgs),
    /// Train the classifier with curriculum sampling and voxel re-weighting.
    Train(TrainArgs),
    /// Single- and pair-layer occlusion saliency.
    Explain(ExplainArgs),
    /// Insertion/deletion comparison of attribution rankings.
    Faithfulness(FaithfulnessArgs),
    /// Saliency under a randomly re-initialised copy of the model.
    Sanity(SanityArgs),
    /// Logistic association of directional scores with the scenario label.
    Associate(AssociateArgs),
    /// Figures and tables from a stored explain report.
    Report(ReportArgs),
    /// Print the JSON schema of an emitted document.
    Schema { kind: String },
}

#[derive(Debug, Args)]
pub struct SeedArg {
    #[arg(long, env = "LAYER_SEED", default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct PhantomArgs {
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub seed: SeedArg,
    /// JSON file with a full generator configuration; flags override it.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub patients: Option<usize>,
    /// Grid size as NXxNYxNZ.
    #[arg(long)]
    pub dims: Option<String>,
    /// Effect size in units of the noise level.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Layer carrying the signal.
    #[arg(long)]
    pub layer: Option<String>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Cohort directory holding manifest.json.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "side-mp")]
    pub scenario: String,
    /// Pool both visits of a side into one unit.
    #[arg(long)]
    pub merge_visits: bool,
    /// Fail on missing repetitions instead of flagging them.
    #[arg(long)]
    pub strict: bool,
}

impl DataArgs {
    fn scenario(&self) -> Result<Scenario> {
        Ok(Scenario::parse(&self.scenario)?)
    }

    fn hierarchy(&self) -> HierarchyOptions {
        HierarchyOptions { merge_visits: self.merge_visits, strict: self.strict }
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Checkpoint to write.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, default_value = "bmode")]
    pub modality: String,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub curriculum: bool,
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub air: bool,
    /// Patient-level folds, the last held out; below 2 trains on everything.
    #[arg(long, default_value_t = 6)]
    pub folds: usize,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// JSON report.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Training log CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Trained checkpoint.
    #[arg(long)]
    pub model: PathBuf,
    /// Must match the checkpoint when given.
    #[arg(long)]
    pub modality: Option<String>,
    #[command(flatten)]
    pub seed: SeedArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub common: ModelArgs,
    /// Also occlude every layer pair.
    #[arg(long, default_value_t = true, action = ArgAction::Set)]
    pub pairs: bool,
    #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
    pub resamples: usize,
    /// Directory for the layer, pair and scan tables.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    /// Saliency annulus.
    #[arg(long)]
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FaithfulnessArgs {
    #[command(flatten)]
    pub common: ModelArgs,
    /// Comma-separated; the first is the reference of the paired tests.
    #[arg(long, default_value = "LAYER,IG,SmoothGrad,Random")]
    pub methods: String,
    /// Occlusion ranking basis: directional (signed change) or magnitude.
    #[arg(long, default_value = "directional")]
    pub basis: String,
    #[arg(long)]
    pub ig_steps: Option<usize>,
    #[arg(long)]
    pub smoothgrad_samples: Option<usize>,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SanityArgs {
    #[command(flatten)]
    pub common: ModelArgs,
    #[arg(long, default_value_t = DEFAULT_RESAMPLES)]
    pub resamples: usize,
}

#[derive(Debug, Args)]
pub struct AssociateArgs {
    #[command(flatten)]
    pub common: ModelArgs,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// An explain report.
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub svg: Option<PathBuf>,
    /// Chord diagram of the pair interactions.
    #[arg(long)]
    pub chords: Option<PathBuf>,
    /// Chord value: ois or rho.
    #[arg(long, default_value = "ois")]
    pub chord_value: String,
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplainData {
    pub ranking: Vec<Layer>,
    pub analysis: LayerAnalysis,
    pub scans: Vec<ScanSaliency>,
}

#[derive(Serialize)]
struct ModelConfig<'a, T: Serialize> {
    modality: ModalitySet,
    model: &'a CheckpointHeader,
    #[serde(flatten)]
    options: T,
}

fn emit<D: Serialize>(env: &Envelope<D>, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => env.save(p),
        None => std::io::stdout().write_all(&env.to_bytes()).map_err(|e| Error::io(Path::new("<stdout>"), e)),
    }
}

fn parse_dims(s: &str) -> Result<Dims> {
    let parts: Vec<usize> = s.split('x').map(|p| p.trim().parse::<usize>()).collect::<std::result::Result<_, _>>().map_err(|_| Error::Usage(format!("bad --dims '{s}', expected NXxNYxNZ")))?;
    match parts[..] {
        [nx, ny, nz] => Ok(Dims::new(nx, ny, nz)),
        _ => Err(Error::Usage(format!("bad --dims '{s}', expected NXxNYxNZ"))),
    }
}

fn phantom(a: &PhantomArgs) -> Result<()> {
    let mut c = match &a.config {
        Some(p) => serde_json::from_slice(&crate::error::read(p)?).map_err(|e| Error::json(p, e))?,
        None => PhantomConfig::default(),
    };
    c.seed = a.seed.seed;
    if let Some(n) = a.patients {
        c.patients = n;
    }
    if let Some(d) = &a.dims {
        c.dims = parse_dims(d)?;
    }
    if let Some(d) = a.delta {
        c.delta = d;
    }
    if let Some(s) = a.sigma {
        c.sigma = s;
    }
    if let Some(l) = &a.layer {
        c.planted_layer = Layer::parse(l)?;
    }
    let cohort = generate(&c)?;
    write_cohort(&a.out, &cohort)?;
    let data = json!({
        "patients": c.patients,
        "cases": cohort.manifest.patients().into_iter().filter(|&p| cohort.manifest.patient_is_mp(p)).count(),
        "sites": cohort.sites.len(),
        "scans": cohort.manifest.scans.len(),
        "manifest": MANIFEST_FILE,
    });
    Envelope::new(Kind::Phantom, c.seed, &c, data).save(&a.out.join("phantom.json"))
}

fn train(a: &TrainArgs) -> Result<()> {
    let modality = ModalitySet::parse(&a.modality)?;
    let mut config = TrainConfig { epochs: a.epochs, curriculum: a.curriculum, air: a.air, seed: a.seed.seed, ..Default::default() };
    if let Some(lr) = a.lr {
        config.adam.lr = lr;
    }
    if let Some(b) = a.batch_size {
        config.batch_size = b;
    }
    let settings = TrainSettings { scenario: a.data.scenario()?, modality, folds: a.folds, hierarchy: a.data.hierarchy(), training: config };
    let (manifest, data) = read_samples(&a.data.data, modality)?;
    let run = pipeline::train(&manifest, &data, &settings)?;
    run.checkpoint.save(&a.model)?;
    if let Some(p) = &a.csv {
        output::training_log_csv(p, &run.log)?;
    }
    let report = json!({
        "train_scans": run.train_scans,
        "heldout_scans": run.heldout_scans,
        "heldout_auc": run.heldout_auc,
        "folds": run.folds,
        "log": run.log,
        "checkpoint": run.checkpoint.header,
    });
    emit(&Envelope::new(Kind::Train, settings.training.seed, &settings, report), a.out.as_deref())
}

fn load_model(a: &ModelArgs) -> Result<(Checkpoint, SampleSet)> {
    let ckpt = Checkpoint::load(&a.model)?;
    if let Some(m) = &a.modality {
        let m = ModalitySet::parse(m)?;
        if m != ckpt.header.modality {
            return Err(Error::Usage(format!("--modality {} differs from the checkpoint's {}", m.name(), ckpt.header.modality.name())));
        }
    }
    let (_, data) = read_samples(&a.data.data, ckpt.header.modality)?;
    if data.is_empty() {
        return Err(Error::Usage("cohort has no scans for the checkpoint's modality set".into()));
    }
    if data.samples[0].input.dims() != ckpt.header.arch.dims {
        return Err(Error::Usage(format!("cohort dims {} differ from the model's {}", data.samples[0].input.dims(), ckpt.header.arch.dims)));
    }
    Ok((ckpt, data))
}

fn analysis_options(seed: u64, pairs: bool, resamples: usize) -> AnalysisOptions {
    AnalysisOptions { pairs, epsilon: DEFAULT_OIS_EPSILON, resamples, seed }
}

fn explain(a: &ExplainArgs) -> Result<()> {
    let (ckpt, data) = load_model(&a.common)?;
    let opts = analysis_options(a.common.seed.seed, a.pairs, a.resamples);
    let (scans, analysis) = pipeline::layer_analysis(&ckpt.model, &data, &opts)?;
    if let Some(dir) = &a.csv {
        output::saliency_layers_csv(&dir.join("layers.csv"), &analysis)?;
        output::saliency_pairs_csv(&dir.join("pairs.csv"), &analysis)?;
        output::scans_csv(&dir.join("scans.csv"), &data, &scans)?;
    }
    if let Some(p) = &a.svg {
        write(p, svg::annulus(&analysis.saliency).as_bytes())?;
    }
    let config = ModelConfig { modality: ckpt.header.modality, model: &ckpt.header, options: opts };
    let data = ExplainData { ranking: analysis.saliency.ranking(), analysis, scans };
    emit(&Envelope::new(Kind::Explain, opts.seed, &config, data), a.common.out.as_deref())
}

fn faithfulness(a: &FaithfulnessArgs) -> Result<()> {
    let (ckpt, data) = load_model(&a.common)?;
    let methods = a.methods.split(',').map(|m| Method::parse(m.trim())).collect::<layer_core::Result<Vec<_>>>()?;
    let layer_basis = match a.basis.as_str() {
        "directional" => LayerBasis::Directional,
        "magnitude" => LayerBasis::Magnitude,
        b => return Err(Error::Usage(format!("unknown --basis '{b}' (directional or magnitude)"))),
    };
    let mut cfg = CompareConfig { seed: a.common.seed.seed, layer_basis, ..Default::default() };
    if let Some(s) = a.ig_steps {
        cfg.ig_steps = s;
    }
    if let Some(s) = a.smoothgrad_samples {
        cfg.smoothgrad_samples = s;
    }
    let comparison = pipeline::faithfulness(&ckpt.model, &data, &methods, &cfg)?;
    if let Some(p) = &a.csv {
        output::faithfulness_csv(p, &comparison)?;
    }
    let config = ModelConfig { modality: ckpt.header.modality, model: &ckpt.header, options: cfg };
    emit(&Envelope::new(Kind::Faithfulness, cfg.seed, &config, comparison), a.common.out.as_deref())
}

fn sanity(a: &SanityArgs) -> Result<()> {
    let (ckpt, data) = load_model(&a.common)?;
    let opts = analysis_options(a.common.seed.seed, false, a.resamples);
    let report = pipeline::sanity(&ckpt.model, &data, opts.seed, &opts)?;
    let config = ModelConfig { modality: ckpt.header.modality, model: &ckpt.header, options: opts };
    emit(&Envelope::new(Kind::Sanity, opts.seed, &config, report), a.common.out.as_deref())
}

fn associate(a: &AssociateArgs) -> Result<()> {
    let (ckpt, data) = load_model(&a.common)?;
    let scenario = a.common.data.scenario()?;
    let hierarchy = a.common.data.hierarchy();
    let scans = pipeline::scan_saliencies(&ckpt.model, &data, false)?;
    let report = pipeline::association(&data, &scans, scenario, hierarchy)?;
    if let Some(p) = &a.csv {
        output::association_csv(p, &report)?;
    }
    let options = json!({ "scenario": scenario, "hierarchy": hierarchy });
    let config = ModelConfig { modality: ckpt.header.modality, model: &ckpt.header, options };
    emit(&Envelope::new(Kind::Association, a.common.seed.seed, &config, report), a.common.out.as_deref())
}

fn report(a: &ReportArgs) -> Result<()> {
    let env: Envelope<ExplainData> = Envelope::load(&a.input, Kind::Explain)?;
    let analysis = &env.data.analysis;
    if let Some(p) = &a.svg {
        write(p, svg::annulus(&analysis.saliency).as_bytes())?;
    }
    if let Some(p) = &a.chords {
        let value = match a.chord_value.as_str() {
            "ois" => ChordValue::Ois,
            "rho" => ChordValue::Correlation,
            v => return Err(Error::Usage(format!("unknown --chord-value '{v}' (ois or rho)"))),
        };
        let Some(ix) = &analysis.interactions else {
            return Err(Error::Usage("report has no pair interactions; rerun explain with --pairs true".into()));
        };
        write(p, svg::chords(ix, value).as_bytes())?;
    }
    if let Some(dir) = &a.csv {
        output::saliency_layers_csv(&dir.join("layers.csv"), analysis)?;
        output::saliency_pairs_csv(&dir.join("pairs.csv"), analysis)?;
    }
    Ok(())
}

/// Runs a parsed command line.
pub fn run(cli: &Cli) -> Result<()> {
    if cli.threads > 0 {
        // A second call in the same process keeps the first pool.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global();
    }
    match &cli.command {
        Command::Phantom(a) => phantom(a),
        Command::Train(a) => train(a),
        Command::Explain(a) => explain(a),
        Command::Faithfulness(a) => faithfulness(a),
        Command::Sanity(a) => sanity(a),
        Command::Associate(a) => associate(a),
        Command::Report(a) => report(a),
        Command::Schema { kind } => {
            let k = Kind::parse(kind).ok_or_else(|| {
                Error::Usage(format!("unknown schema '{kind}' (one of {})", Kind::ALL.map(Kind::name).join(", ")))
            })?;
            std::io::stdout().write_all(k.schema().as_bytes()).map_err(|e| Error::io(Path::new("<stdout>"), e))
        }
    }
}

/// Machine-readable error document written to stderr on failure.
pub fn error_json(kind: &str, message: &str) -> String {
    let v = json!({ "schema": Kind::Error.id(), "version": VERSION, "error": { "kind": kind, "message": message } });
    format!("{v}\n")
}
