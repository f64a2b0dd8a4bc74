//! Command-line front end: `gen-synth`, `train-toy`, `predict-toy`,
//! `evaluate`.
//!
//! Exit codes: 0 success, 1 usage or validation error, 2 I/O error.
//! Diagnostics go to stderr; data only to files. `UQFAIR_LOG` sets the log
//! level (`error`, `info`, `debug`).

use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::manifest::{
    load_manifest, load_manifest_with, EvalManifest, Measure, NormalizationMode, PredictionCheck, TaskKind,
};
use crate::report::{emit_curves_csv, emit_summary_json, emit_svg, svg_file_stem};
use crate::sweep::{sweep_curves, threshold_grid, EvalSet};
use crate::synth::{gen_synth, SynthConfig};
use crate::tensor::write_tensor;
use crate::toy::{mc_predict, train_toy, Ensemble, Strategy, ToyDataset, TrainConfig};
use crate::Error;

#[derive(Debug, Parser)]
#[command(name = "uqfair", version, about = "Fairness of uncertainty estimates across subgroups")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a synthetic dataset with simulated Monte-Carlo predictions.
    GenSynth(GenSynthArgs),
    /// Train a dropout-MLP ensemble on a classification or regression manifest.
    TrainToy(TrainArgs),
    /// Draw ensemble-dropout predictions and write an evaluation manifest.
    PredictToy(PredictArgs),
    /// Sweep uncertainty thresholds and write curves, summary and charts.
    Evaluate(EvaluateArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum TaskArg {
    Classification,
    Segmentation,
    Regression,
}

impl From<TaskArg> for TaskKind {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Classification => TaskKind::Classification,
            TaskArg::Segmentation => TaskKind::Segmentation,
            TaskArg::Regression => TaskKind::Regression,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MeasureArg {
    Entropy,
    SampleVar,
    TotalVar,
}

impl From<MeasureArg> for Measure {
    fn from(m: MeasureArg) -> Self {
        match m {
            MeasureArg::Entropy => Measure::Entropy,
            MeasureArg::SampleVar => Measure::SampleVariance,
            MeasureArg::TotalVar => Measure::TotalVariance,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum NormArg {
    Bound,
    Minmax,
}

impl From<NormArg> for NormalizationMode {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::Bound => NormalizationMode::Bound,
            NormArg::Minmax => NormalizationMode::MinMax,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum StrategyArg {
    Baseline,
    Balanced,
    Groupdro,
}

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::Baseline => Strategy::Baseline,
            StrategyArg::Balanced => Strategy::Balanced,
            StrategyArg::Groupdro => Strategy::GroupDro,
        }
    }
}

#[derive(Debug, Args)]
struct GenSynthArgs {
    #[arg(long, value_enum)]
    task: TaskArg,
    /// Instances in group 0.
    #[arg(long)]
    m: Option<usize>,
    /// Instances in group 1.
    #[arg(long)]
    l: Option<usize>,
    #[arg(long)]
    classes: Option<usize>,
    #[arg(long)]
    targets: Option<usize>,
    /// Feature dimension (classification, regression).
    #[arg(long)]
    dim: Option<usize>,
    /// Volume edge lengths, `P,Q,S` or a single edge.
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
    /// Group-0 sphere radii `whole,core,enhancing`.
    #[arg(long, value_delimiter = ',')]
    radii: Option<Vec<f64>>,
    #[arg(long)]
    shift: Option<f64>,
    #[arg(long)]
    noise0: Option<f64>,
    #[arg(long)]
    noise1: Option<f64>,
    /// Monte-Carlo samples per instance.
    #[arg(long)]
    samples: Option<usize>,
    /// Segmentation: write mean probabilities and an uncertainty volume.
    #[arg(long)]
    precomputed: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, value_enum)]
    strategy: StrategyArg,
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    /// Group-weight step size.
    #[arg(long)]
    eta_q: Option<f64>,
    /// Ensemble members.
    #[arg(long)]
    ensemble: Option<usize>,
    /// Dropout samples per member at prediction time.
    #[arg(long)]
    dropout_samples: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    dropout: Option<f64>,
}

#[derive(Debug, Args)]
struct PredictArgs {
    /// Directory written by `train-toy` (or its models.json).
    #[arg(long)]
    models: PathBuf,
    /// Manifest to predict on; defaults to the training manifest.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Seed of the dropout masks; defaults to the training seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct EvaluateArgs {
    #[arg(long)]
    manifest: PathBuf,
    #[arg(long, default_value_t = 1.0)]
    tau_step: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum)]
    measure: Option<MeasureArg>,
    #[arg(long, value_enum)]
    normalization: Option<NormArg>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

/// Contents of `models.json`.
#[derive(Debug, Serialize, Deserialize)]
struct ModelsFile {
    manifest: PathBuf,
    ensemble: Ensemble,
}

/// Runs one invocation (`args[0]` is the program name) and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("UQFAIR_LOG", "error"))
        .format_timestamp(None)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::GenSynth(a) => gen_synth_cmd(a),
        Command::TrainToy(a) => train_cmd(a),
        Command::PredictToy(a) => predict_cmd(a),
        Command::Evaluate(a) => evaluate_cmd(a),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_io() {
                2
            } else {
                1
            }
        }
    }
}

fn gen_synth_cmd(a: GenSynthArgs) -> crate::Result<()> {
    let mut cfg = SynthConfig::new(a.task.into());
    cfg.seed = a.seed;
    if let Some(v) = a.m {
        cfg.m = v;
    }
    if let Some(v) = a.l {
        cfg.l = v;
    }
    if let Some(v) = a.classes {
        cfg.classes = v;
    }
    if let Some(v) = a.targets {
        cfg.targets = v;
    }
    if let Some(v) = a.dim {
        cfg.feature_dim = v;
    }
    if let Some(v) = a.shift {
        cfg.group_shift = v;
    }
    if let Some(v) = a.noise0 {
        cfg.noise_sigma[0] = v;
    }
    if let Some(v) = a.noise1 {
        cfg.noise_sigma[1] = v;
    }
    if let Some(v) = a.samples {
        cfg.mc_samples = v;
    }
    cfg.precomputed = a.precomputed;
    if let Some(d) = a.dims {
        cfg.volume_dims = match d[..] {
            [e] => [e, e, e],
            [p, q, s] => [p, q, s],
            _ => return Err(Error::Invalid("--dims takes one or three edge lengths".into())),
        };
    }
    if let Some(r) = a.radii {
        let [w, c, e] = r[..] else {
            return Err(Error::Invalid("--radii takes three values".into()));
        };
        cfg.radii = Some([w, c, e]);
    }
    let meta = gen_synth(&cfg, &a.out)?;
    log::info!("wrote {} instances to {}", meta.config.n(), a.out.display());
    Ok(())
}

fn create_dir(path: &Path) -> crate::Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

fn canonical(path: &Path) -> crate::Result<PathBuf> {
    fs::canonicalize(path).map_err(|e| Error::io(path, e))
}

fn train_cmd(a: TrainArgs) -> crate::Result<()> {
    let manifest = load_manifest_with(&a.manifest, PredictionCheck::Optional)?;
    let data = ToyDataset::from_manifest(&manifest)?;
    let d = TrainConfig::default();
    let cfg = TrainConfig {
        strategy: a.strategy.into(),
        epochs: a.epochs.unwrap_or(d.epochs),
        batch_size: a.batch_size.unwrap_or(d.batch_size),
        learning_rate: a.lr.unwrap_or(d.learning_rate),
        groupdro_step: a.eta_q.unwrap_or(d.groupdro_step),
        ensemble_size: a.ensemble.unwrap_or(d.ensemble_size),
        dropout_samples: a.dropout_samples.unwrap_or(d.dropout_samples),
        hidden_width: a.hidden.unwrap_or(d.hidden_width),
        dropout_p: a.dropout.unwrap_or(d.dropout_p),
        clip_norm: d.clip_norm,
        seed: a.seed,
    };
    let ensemble = train_toy(&data, &cfg)?;
    create_dir(&a.out)?;
    let file = ModelsFile {
        manifest: canonical(&a.manifest)?,
        ensemble,
    };
    let path = a.out.join("models.json");
    let text = serde_json::to_string_pretty(&file).expect("models serialize") + "\n";
    fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    log::info!("trained {} members with {:?}", cfg.ensemble_size, cfg.strategy);
    Ok(())
}

fn predict_cmd(a: PredictArgs) -> crate::Result<()> {
    let models_path = if a.models.is_dir() {
        a.models.join("models.json")
    } else {
        a.models.clone()
    };
    let text = fs::read_to_string(&models_path).map_err(|e| Error::io(&models_path, e))?;
    let file: ModelsFile = serde_json::from_str(&text)
        .map_err(|e| Error::Invalid(format!("{}: {e}", models_path.display())))?;
    let manifest_path = a.manifest.unwrap_or(file.manifest);
    let manifest = load_manifest_with(&manifest_path, PredictionCheck::Optional)?;
    let data = ToyDataset::from_manifest(&manifest)?;
    let ens = &file.ensemble;
    if ens.members[0].input != data.dim {
        return Err(Error::Invalid(format!(
            "models expect {} features, manifest has {}",
            ens.members[0].input, data.dim
        )));
    }
    let preds = mc_predict(ens, &data.x, a.seed.unwrap_or(ens.config.seed));
    create_dir(&a.out)?;
    let mut out = EvalManifest {
        base_dir: a.out.clone(),
        ..manifest.clone()
    };
    if let Some(fp) = &manifest.features_path {
        out.features_path = Some(canonical(&manifest.resolve(fp))?.display().to_string());
    }
    for (r, p) in out.instances.iter_mut().zip(&preds) {
        let name = format!("{}.uqt", r.id);
        write_tensor(&p.to_tensor(), a.out.join(&name))?;
        r.prediction_path = Some(name);
        r.uncertainty_path = None;
    }
    let path = a.out.join("manifest.json");
    fs::write(&path, out.to_json_pretty()).map_err(|e| Error::io(&path, e))?;
    log::info!("wrote {} prediction stacks", preds.len());
    Ok(())
}

fn evaluate_cmd(a: EvaluateArgs) -> crate::Result<()> {
    let grid = threshold_grid(a.tau_step)?;
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = a.threads {
        if n == 0 {
            return Err(Error::Invalid("--threads must be at least 1".into()));
        }
        pool = pool.num_threads(n);
    }
    let pool = pool
        .build()
        .map_err(|e| Error::Invalid(format!("cannot start worker pool: {e}")))?;
    pool.install(|| {
        let manifest = load_manifest(&a.manifest)?;
        let set = EvalSet::from_manifest(&manifest, a.measure.map(Into::into), a.normalization.map(Into::into))?;
        let result = sweep_curves(&set, &grid)?;
        create_dir(&a.out)?;
        emit_curves_csv(&result.curves, &a.out.join("curves.csv"))?;
        emit_summary_json(&result, &a.out.join("summary.json"))?;
        for c in &result.curves {
            match emit_svg(c, &a.out.join(format!("{}.svg", svg_file_stem(c)))) {
                Err(Error::Report(e)) => log::warn!("skipping chart: {e}"),
                other => other?,
            }
        }
        log::info!("{} curves over {} thresholds", result.curves.len(), grid.len());
        Ok(())
    })
}
