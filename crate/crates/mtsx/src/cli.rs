//! The `mtsx` command line. Every command writes into its own `--out`
//! directory: outputs, a `manifest.json` echoing the resolved configuration,
//! and a `timing.json`. Only the timing file varies between identical runs.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use mtsx_core::ameeval::{self, AmeeConfig, Explainer, PerturbationStrategy, Referee};
use mtsx_core::baseline::random_map;
use mtsx_core::evalgt::{align_to_mask, evaluate_explainer, rank_channels, GtMetrics};
use mtsx_core::exec::Executor;
use mtsx_core::gapdcam::{self, ChannelGate, CnnConfig, DcamConfig};
use mtsx_core::linear::{
    default_alphas, ridge_explanation, LogisticConfig, RawRidgeClassifier, RawRidgeTrainer,
    RocketClassifier, RocketLogisticTrainer, RocketRidgeTrainer,
};
use mtsx_core::model::{accuracy, Classifier};
use mtsx_core::rng;
use mtsx_core::shapx::{
    explain_channel_by_channel, explain_concatenated, training_background, ShapConfig,
};
use mtsx_core::synthgen::{generate_dataset, ground_truth_mask, SynthKind, SynthSpec};
use mtsx_core::tsdata::{concat_channels, rescale_abs_minmax};
use mtsx_core::{Error as CoreError, LabeledDataset, MultiSeries, SaliencyMap, Scale};

use crate::config::merge_config;
use crate::error::{MtsxError, Result};
use crate::io::{self, fmt_f64};
use crate::modelio::{read_model, write_model, SavedModel};
use crate::par::Pool;

pub const SCHEMA: &str = "mtsx-run/v1";

#[derive(Parser, Debug)]
#[command(
    name = "mtsx",
    version,
    about = "Saliency benchmarks for multivariate time series classification"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic benchmark: train/test splits and the mask.
    Gen(GenArgs),
    /// Train a classifier.
    Train(TrainArgs),
    /// Explain every test instance with one method.
    Explain(ExplainArgs),
    /// Score saliency maps against a ground-truth mask.
    EvalGt(EvalGtArgs),
    /// Perturbation-based evaluation and ranking of several explainers.
    EvalAmee(EvalAmeeArgs),
    /// Rank channels by average saliency.
    RankChannels(RankArgs),
    /// Collect the tables of every step under a run directory.
    Report(ReportArgs),
}

#[derive(Args, Debug, Serialize)]
pub struct Common {
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads; results do not depend on it.
    #[arg(long, default_value_t = 1)]
    #[serde(skip)]
    pub jobs: usize,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    PseudoPeriodic,
    Gaussian,
    AutoRegressive,
}

impl From<Kind> for SynthKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::PseudoPeriodic => SynthKind::PseudoPeriodic,
            Kind::Gaussian => SynthKind::Gaussian,
            Kind::AutoRegressive => SynthKind::AutoRegressive,
        }
    }
}

#[derive(Args, Debug, Serialize)]
pub struct GenArgs {
    #[arg(long, value_enum)]
    pub kind: Kind,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value_t = 100)]
    pub n_train: usize,
    #[arg(long, default_value_t = 100)]
    pub n_test: usize,
    /// Channels.
    #[arg(long, default_value_t = 20)]
    pub d: usize,
    /// Series length.
    #[arg(long, default_value_t = 100)]
    pub len: usize,
    #[arg(long, default_value = "0..10")]
    pub box_channels: String,
    #[arg(long, default_value = "10..20")]
    pub box_time: String,
    #[arg(long, default_value_t = 1.0)]
    pub offset: f64,
    #[arg(long, default_value_t = 0.9)]
    pub ar_coef: f64,
    /// Mask segments per channel.
    #[arg(long, default_value_t = 10)]
    pub segments: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Ridge,
    RocketLogistic,
    RocketRidge,
    Cnn,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    #[arg(long, value_enum)]
    pub model: ModelKind,
    #[arg(long)]
    pub train: PathBuf,
    /// Optional test split for accuracy reporting.
    #[arg(long)]
    pub test: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Train on channels concatenated into one series.
    #[arg(long)]
    pub concat: bool,
    /// Train one model per channel and average their probabilities.
    #[arg(long)]
    pub ensemble: bool,
    #[arg(long, default_value_t = 2000)]
    pub kernels: usize,
    #[arg(long, default_value_t = 5)]
    pub folds: usize,
    /// Comma-separated ridge strengths; default is 10 values over [1e-3, 1e3].
    #[arg(long)]
    pub alphas: Option<String>,
    #[arg(long, default_value_t = 1e-2)]
    pub logistic_lr: f64,
    #[arg(long, default_value_t = 1000)]
    pub logistic_iter: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub logistic_l2: f64,
    #[arg(long, default_value_t = 16)]
    pub filters1: usize,
    #[arg(long, default_value_t = 32)]
    pub filters2: usize,
    #[arg(long, default_value_t = 200)]
    pub epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    pub lr: f64,
    #[arg(long, default_value_t = 16)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 20)]
    pub patience: usize,
    #[command(flatten)]
    pub common: Common,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Ridge,
    ShapConcat,
    ShapChannel,
    Dcam,
    Random,
    Truth,
}

#[derive(ValueEnum, Clone, Copy, Debug, Serialize, PartialEq, Eq)]
#[serde(rename_all = "kebab-case")]
pub enum Gate {
    Off,
    BelowMedian,
}

#[derive(Args, Debug, Serialize)]
pub struct ExplainArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    /// Model file; needed by ridge, shap-* and dcam.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Split to explain.
    #[arg(long)]
    pub data: PathBuf,
    /// Training split; its mean series is the SHAP background.
    #[arg(long)]
    pub train: Option<PathBuf>,
    /// Ground-truth mask; needed by the truth method.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// SHAP model evaluations; default min(2^M, 2048).
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub segments: usize,
    /// dCAM channel orders.
    #[arg(long, default_value_t = 200)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = Gate::Off)]
    pub gate: Gate,
    /// Explain only the first N instances.
    #[arg(long)]
    pub limit: Option<usize>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct EvalGtArgs {
    /// Explain output directory or a directory of .salcsv files.
    #[arg(long)]
    pub saliency: PathBuf,
    #[arg(long)]
    pub mask: PathBuf,
    #[arg(long, default_value_t = 50.0)]
    pub threshold: f64,
    /// Explainer name in the tables; defaults to the directory name.
    #[arg(long)]
    pub name: Option<String>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct EvalAmeeArgs {
    #[arg(long)]
    pub train: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// `name=DIR`, repeated once per explainer (at least two).
    #[arg(long = "explanation", required = true)]
    pub explanations: Vec<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Kernels of the two ROCKET referees.
    #[arg(long, default_value_t = 500)]
    pub kernels: usize,
    /// Comma-separated subset of mean-local, mean-global, gaussian-local, gaussian-global.
    #[arg(long)]
    pub strategies: Option<String>,
    /// Comma-separated perturbed fractions; default 0, 0.1, ..., 1.
    #[arg(long)]
    pub fractions: Option<String>,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct RankArgs {
    #[arg(long)]
    pub saliency: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

#[derive(Args, Debug, Serialize)]
pub struct ReportArgs {
    /// Directory whose subdirectories are command outputs.
    #[arg(long)]
    pub run: PathBuf,
    #[command(flatten)]
    pub common: Common,
}

/// Parse `argv` (including the program name), run, and return the exit code.
/// Errors go to stderr as one JSON line.
pub fn run(argv: Vec<String>) -> i32 {
    let argv = match merge_config(argv) {
        Ok(a) => a,
        Err(e) => return report_error(&e),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let first = e
                .to_string()
                .lines()
                .next()
                .unwrap_or("usage error")
                .trim_start_matches("error: ")
                .to_owned();
            return report_error(&MtsxError::Usage(first));
        }
    };
    match dispatch(&cli.command) {
        Ok(()) => 0,
        Err(e) => report_error(&e),
    }
}

fn report_error(e: &MtsxError) -> i32 {
    eprintln!("{}", e.to_json_line());
    e.exit_code()
}

pub fn dispatch(cmd: &Command) -> Result<()> {
    match cmd {
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Explain(a) => cmd_explain(a),
        Command::EvalGt(a) => cmd_eval_gt(a),
        Command::EvalAmee(a) => cmd_eval_amee(a),
        Command::RankChannels(a) => cmd_rank_channels(a),
        Command::Report(a) => cmd_report(a),
    }
}

/// Stage timings, kept apart from the deterministic outputs.
struct Timing {
    start: Instant,
    stages: Vec<(String, f64)>,
    per_instance: Vec<f64>,
}

impl Timing {
    fn new() -> Self {
        Self {
            start: Instant::now(),
            stages: Vec::new(),
            per_instance: Vec::new(),
        }
    }

    fn stage<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.stages
            .push((name.to_owned(), t.elapsed().as_secs_f64()));
        out
    }

    fn write(&self, out: &Path, command: &str, jobs: usize) -> Result<()> {
        let stages: Vec<_> = self
            .stages
            .iter()
            .map(|(s, t)| json!({"stage": s, "seconds": t}))
            .collect();
        let v = json!({
            "command": command,
            "jobs": jobs,
            "total_seconds": self.start.elapsed().as_secs_f64(),
            "stages": stages,
            "per_instance_seconds": self.per_instance,
        });
        io::write_text(
            &out.join("timing.json"),
            &(serde_json::to_string_pretty(&v)? + "\n"),
        )
    }
}

#[derive(Serialize)]
struct Manifest<'a, A: Serialize> {
    schema: &'static str,
    command: &'static str,
    tool_version: &'static str,
    config: &'a A,
    outputs: Vec<String>,
}

fn write_manifest<A: Serialize>(
    out: &Path,
    command: &'static str,
    config: &A,
    outputs: &[&str],
) -> Result<()> {
    let mut outputs: Vec<String> = outputs.iter().map(|s| s.to_string()).collect();
    outputs.sort();
    let m = Manifest {
        schema: SCHEMA,
        command,
        tool_version: env!("CARGO_PKG_VERSION"),
        config,
        outputs,
    };
    io::write_text(
        &out.join("manifest.json"),
        &(serde_json::to_string_pretty(&m)? + "\n"),
    )
}

fn make_out(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| MtsxError::io(out, e))
}

fn parse_range(s: &str, what: &str) -> Result<std::ops::Range<usize>> {
    let bad = || MtsxError::Usage(format!("{what} must look like a..b, got {s:?}"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    Ok(a.trim().parse().map_err(|_| bad())?..b.trim().parse().map_err(|_| bad())?)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| MtsxError::Usage(format!("bad {what} entry {t:?}")))
        })
        .collect()
}

fn csv_row(out: &mut String, fields: &[String]) {
    out.push_str(&fields.join(","));
    out.push('\n');
}

pub fn cmd_gen(a: &GenArgs) -> Result<()> {
    let out = &a.common.out;
    make_out(out)?;
    let mut timing = Timing::new();
    let spec = SynthSpec {
        kind: a.kind.into(),
        n_train: a.n_train,
        n_test: a.n_test,
        d: a.d,
        len: a.len,
        box_channels: parse_range(&a.box_channels, "--box-channels")?,
        box_time: parse_range(&a.box_time, "--box-time")?,
        offset: a.offset,
        ar_coef: a.ar_coef,
        seed: a.seed,
    };
    let (train, test, _) = timing.stage("generate", || generate_dataset(&spec))?;
    let mask = ground_truth_mask(&spec, a.segments)?;
    io::write_dataset(&out.join("train.mtscsv"), &train)?;
    io::write_dataset(&out.join("test.mtscsv"), &test)?;
    io::write_mask(&out.join("mask.salcsv"), &mask)?;
    write_manifest(
        out,
        "gen",
        a,
        &["train.mtscsv", "test.mtscsv", "mask.salcsv"],
    )?;
    timing.write(out, "gen", a.common.jobs)
}

fn alphas_of(a: &TrainArgs) -> Result<Vec<f64>> {
    match &a.alphas {
        Some(s) => parse_list(s, "--alphas"),
        None => Ok(default_alphas()),
    }
}

fn cnn_config(a: &TrainArgs) -> CnnConfig {
    CnnConfig {
        filters1: a.filters1,
        filters2: a.filters2,
        epochs: a.epochs,
        lr: a.lr,
        batch_size: a.batch_size,
        patience: a.patience,
        ..CnnConfig::default()
    }
}

/// One epoch row of the CNN training log.
struct LogRow {
    epoch: usize,
    loss: f64,
    train_accuracy: f64,
    test_accuracy: Option<f64>,
}

fn fit_one(
    a: &TrainArgs,
    ds: &LabeledDataset,
    test: Option<&LabeledDataset>,
    seed: u64,
) -> Result<(SavedModel, Vec<LogRow>)> {
    let alphas = alphas_of(a)?;
    let logistic = LogisticConfig {
        max_iter: a.logistic_iter,
        lr: a.logistic_lr,
        l2: a.logistic_l2,
        ..Default::default()
    };
    Ok(match a.model {
        ModelKind::Ridge => (
            RawRidgeClassifier::fit(ds, a.folds, &alphas)?.into(),
            Vec::new(),
        ),
        ModelKind::RocketLogistic => (
            RocketClassifier::fit_logistic(ds, a.kernels, &logistic, seed)?.into(),
            Vec::new(),
        ),
        ModelKind::RocketRidge => (
            RocketClassifier::fit_ridge(ds, a.kernels, a.folds, &alphas, seed)?.into(),
            Vec::new(),
        ),
        ModelKind::Cnn => {
            let mut rows = Vec::new();
            let (m, _) = gapdcam::train_with(ds, &cnn_config(a), seed, &mut |m, s| {
                rows.push(LogRow {
                    epoch: s.epoch,
                    loss: s.loss,
                    train_accuracy: s.train_accuracy,
                    test_accuracy: test.map(|t| accuracy(m, t)),
                });
            })?;
            (m.into(), rows)
        }
    })
}

pub fn cmd_train(a: &TrainArgs) -> Result<()> {
    let out = &a.common.out;
    make_out(out)?;
    let pool = Pool::new(a.common.jobs)?;
    let mut timing = Timing::new();
    if a.concat && a.ensemble {
        return Err(MtsxError::Usage(
            "--concat and --ensemble exclude each other".into(),
        ));
    }
    let mut train = io::read_dataset(&a.train)?;
    let mut test = a.test.as_deref().map(io::read_dataset).transpose()?;
    if a.concat {
        train = train.concatenated();
        test = test.map(|t| t.concatenated());
    }
    if let (Some(t), Some(dims)) = (&test, train.dims()) {
        if t.dims() != Some(dims) {
            let found = t
                .dims()
                .map_or(mtsx_core::Shape(0, 0), |(d, l)| mtsx_core::Shape(d, l));
            return Err(CoreError::ShapeMismatch {
                expected: mtsx_core::Shape(dims.0, dims.1),
                found,
            }
            .into());
        }
    }
    let (model, log) = timing.stage("fit", || -> Result<_> {
        if a.ensemble {
            let d = train.dims().map_or(0, |x| x.0);
            let parts = pool.map((0..d).collect(), |c| {
                let seed = mtsx_core::linear::ensemble::member_seed(a.seed, c);
                fit_one(a, &train.channel(c), None, seed).map(|r| r.0)
            });
            Ok((
                SavedModel::ensemble(parts.into_iter().collect::<Result<_>>()?)?,
                Vec::new(),
            ))
        } else {
            fit_one(a, &train, test.as_ref(), a.seed)
        }
    })?;
    write_model(&out.join("model.txt"), &model)?;
    let mut acc = String::from("split,accuracy\n");
    csv_row(
        &mut acc,
        &["train".into(), fmt_f64(accuracy(&model, &train))],
    );
    if let Some(t) = &test {
        csv_row(&mut acc, &["test".into(), fmt_f64(accuracy(&model, t))]);
    }
    io::write_text(&out.join("accuracy.csv"), &acc)?;
    let mut outputs = vec!["model.txt", "accuracy.csv"];
    if a.model == ModelKind::Cnn && !a.ensemble {
        let mut s = String::from("epoch,loss,train_accuracy,test_accuracy\n");
        for r in &log {
            let test = r.test_accuracy.map_or(String::new(), fmt_f64);
            csv_row(
                &mut s,
                &[
                    r.epoch.to_string(),
                    fmt_f64(r.loss),
                    fmt_f64(r.train_accuracy),
                    test,
                ],
            );
        }
        io::write_text(&out.join("train_log.csv"), &s)?;
        outputs.push("train_log.csv");
    }
    write_manifest(out, "train", a, &outputs)?;
    timing.write(out, "train", a.common.jobs)
}

/// Presents a `d x L` model as one taking the `1 x (d*L)` concatenation.
struct Unconcat<'a> {
    inner: &'a SavedModel,
    d: usize,
    len: usize,
}

impl Classifier for Unconcat<'_> {
    fn n_classes(&self) -> usize {
        self.inner.n_classes()
    }

    fn predict_proba(&self, x: &MultiSeries) -> Vec<f64> {
        let x =
            MultiSeries::new(self.d, self.len, x.values().to_vec()).expect("concatenated length");
        self.inner.predict_proba(&x)
    }
}

fn need<'a, T>(v: &'a Option<T>, flag: &str, method: Method) -> Result<&'a T> {
    v.as_ref()
        .ok_or_else(|| MtsxError::Usage(format!("--method {method:?} needs {flag}").to_lowercase()))
}

fn load_model(a: &ExplainArgs) -> Result<SavedModel> {
    read_model(need(&a.model, "--model", a.method)?)
}

fn wrong_model(method: &str, m: &SavedModel) -> MtsxError {
    MtsxError::Usage(format!("{method} cannot explain a {} model", m.kind()))
}

type Explained = (SaliencyMap, serde_json::Map<String, serde_json::Value>);

pub fn cmd_explain(a: &ExplainArgs) -> Result<()> {
    let out = &a.common.out;
    make_out(out)?;
    let pool = Pool::new(a.common.jobs)?;
    let mut timing = Timing::new();
    let data = io::read_dataset(&a.data)?;
    let (d, len) = data
        .dims()
        .ok_or_else(|| CoreError::InvalidArgument("empty data split".into()))?;
    let n = a.limit.map_or(data.len(), |l| l.min(data.len()));
    let model = match a.method {
        Method::Random | Method::Truth => None,
        _ => Some(load_model(a)?),
    };
    let mask = match a.method {
        Method::Truth => Some(io::read_mask(need(&a.mask, "--mask", a.method)?)?),
        _ => None,
    };
    let background = match a.method {
        Method::ShapConcat | Method::ShapChannel => Some(training_background(&io::read_dataset(
            need(&a.train, "--train", a.method)?,
        )?)?),
        _ => None,
    };
    if let Some(b) = &background {
        if b.shape() != mtsx_core::Shape(d, len) {
            return Err(CoreError::ShapeMismatch {
                expected: mtsx_core::Shape(d, len),
                found: b.shape(),
            }
            .into());
        }
    }
    let concat_shape = mtsx_core::Shape(1, d * len);
    let multi_shape = mtsx_core::Shape(d, len);
    if let Some(m) = &model {
        let s = m.input_shape();
        let ok = match a.method {
            Method::Ridge | Method::ShapConcat => s == multi_shape || s == concat_shape,
            _ => s == multi_shape,
        };
        if !ok {
            return Err(CoreError::ShapeMismatch {
                expected: s,
                found: multi_shape,
            }
            .into());
        }
        match (a.method, m) {
            (Method::Ridge, SavedModel::RawRidge(_))
            | (Method::Dcam, SavedModel::Cnn(_))
            | (Method::ShapChannel, SavedModel::Ensemble { .. }) => {}
            (Method::ShapConcat, SavedModel::Ensemble { .. }) => {
                return Err(wrong_model("shap-concat", m))
            }
            (Method::ShapConcat, _) => {}
            (method, m) => return Err(wrong_model(&format!("{method:?}").to_lowercase(), m)),
        }
    }

    let explain_one = |i: usize| -> Result<(Explained, f64)> {
        let t = Instant::now();
        let x = &data.instances[i];
        let seed = rng::derive(a.seed, i as u64);
        let mut info = serde_json::Map::new();
        let map = match a.method {
            Method::Random => random_map(d, len, a.seed, i as u64)?,
            Method::Truth => {
                let g = mask.as_ref().expect("loaded above");
                if g.channels() != d || len % g.columns() != 0 {
                    return Err(CoreError::ShapeMismatch {
                        expected: multi_shape,
                        found: g.shape(),
                    }
                    .into());
                }
                g.as_saliency(len / g.columns())
            }
            Method::Ridge => {
                let m = model.as_ref().expect("loaded above");
                let SavedModel::RawRidge(r) = m else {
                    unreachable!()
                };
                let input = if m.input_shape() == concat_shape {
                    concat_channels(x)
                } else {
                    x.clone()
                };
                let class = m.predict(&input);
                info.insert("class".into(), json!(class));
                ridge_explanation(&r.model, class, d, len)?
            }
            Method::Dcam => {
                let SavedModel::Cnn(m) = model.as_ref().expect("loaded above") else {
                    unreachable!()
                };
                let gate = match a.gate {
                    Gate::Off => ChannelGate::Off,
                    Gate::BelowMedian => ChannelGate::BelowMedian,
                };
                info.insert("class".into(), json!(gapdcam::dcam::explained_class(m, x)?));
                info.insert("seed".into(), json!(seed));
                info.insert("k".into(), json!(a.k));
                gapdcam::dcam(m, x, &DcamConfig { k: a.k, seed, gate })?
            }
            Method::ShapConcat | Method::ShapChannel => {
                let m = model.as_ref().expect("loaded above");
                let bg = background.as_ref().expect("loaded above");
                let cfg = ShapConfig {
                    segments_per_channel: a.segments,
                    n_samples: a.samples,
                    seed,
                };
                let shap = if let SavedModel::Ensemble { model: e, .. } = m {
                    explain_channel_by_channel(e, x, bg, &cfg)?
                } else if m.input_shape() == concat_shape {
                    explain_concatenated(m, x, bg, &cfg)?
                } else {
                    explain_concatenated(&Unconcat { inner: m, d, len }, x, bg, &cfg)?
                };
                info.insert("class".into(), json!(shap.class));
                info.insert("seed".into(), json!(seed));
                info.insert(
                    "players".into(),
                    json!(shap.parts.iter().map(|p| p.phi.len()).collect::<Vec<_>>()),
                );
                info.insert(
                    "evaluations".into(),
                    json!(shap.parts.iter().map(|p| p.evaluations).sum::<usize>()),
                );
                info.insert(
                    "exhaustive".into(),
                    json!(shap.parts.iter().all(|p| p.exhaustive)),
                );
                let residual = shap
                    .parts
                    .iter()
                    .map(|p| p.efficiency_residual.abs())
                    .fold(0.0, f64::max);
                info.insert("max_efficiency_residual".into(), json!(residual));
                shap.map
            }
        };
        Ok(((map, info), t.elapsed().as_secs_f64()))
    };
    let results = timing.stage("explain", || pool.map((0..n).collect(), explain_one));

    let dir = out.join("saliency");
    if dir.exists() {
        fs::remove_dir_all(&dir).map_err(|e| MtsxError::io(&dir, e))?;
    }
    let mut jsonl = String::new();
    for (i, r) in results.into_iter().enumerate() {
        let ((map, mut info), secs) = r?;
        timing.per_instance.push(secs);
        io::write_saliency(&dir.join(format!("{i:05}.salcsv")), &map)?;
        info.insert("instance".into(), json!(i));
        info.insert("label".into(), json!(data.labels[i]));
        info.insert("method".into(), serde_json::to_value(a.method)?);
        info.insert("shape".into(), json!([map.channels(), map.columns()]));
        jsonl.push_str(&serde_json::to_string(&info)?);
        jsonl.push('\n');
    }
    io::write_text(&out.join("explain.jsonl"), &jsonl)?;
    write_manifest(out, "explain", a, &["saliency/", "explain.jsonl"])?;
    timing.write(out, "explain", a.common.jobs)
}

/// `DIR/saliency` when `dir` is an explain output, `dir` otherwise.
fn saliency_dir(dir: &Path) -> PathBuf {
    let inner = dir.join("saliency");
    if inner.is_dir() {
        inner
    } else {
        dir.to_path_buf()
    }
}

fn read_maps(dir: &Path) -> Result<Vec<SaliencyMap>> {
    let maps = io::read_saliency_dir(&saliency_dir(dir))?;
    if maps.is_empty() {
        return Err(
            CoreError::InvalidArgument(format!("no .salcsv files in {}", dir.display())).into(),
        );
    }
    Ok(maps)
}

fn dir_name(dir: &Path) -> String {
    dir.file_name()
        .map_or_else(|| "explainer".into(), |s| s.to_string_lossy().into_owned())
}

fn metric_fields(m: &GtMetrics) -> Vec<String> {
    [m.precision, m.recall, m.f1, m.pr_auc, m.roc_auc]
        .iter()
        .map(|v| fmt_f64(*v))
        .collect()
}

pub fn cmd_eval_gt(a: &EvalGtArgs) -> Result<()> {
    let out = &a.common.out;
    make_out(out)?;
    let mut timing = Timing::new();
    let maps = read_maps(&a.saliency)?;
    let mask = io::read_mask(&a.mask)?;
    let report = timing.stage("evaluate", || -> Result<_> {
        let aligned = maps
            .iter()
            .map(|w| align_to_mask(w, &mask))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(evaluate_explainer(&aligned, &mask, a.threshold)?)
    })?;
    let name = a.name.clone().unwrap_or_else(|| dir_name(&a.saliency));
    let mut s = String::from("explainer,instance,precision,recall,f1,pr_auc,roc_auc\n");
    for (i, m) in report.per_instance.iter().enumerate() {
        let mut row = vec![name.clone(), i.to_string()];
        row.extend(metric_fields(m));
        csv_row(&mut s, &row);
    }
    let mut row = vec![name, "mean".into()];
    row.extend(metric_fields(&report.mean));
    csv_row(&mut s, &row);
    io::write_text(&out.join("metrics.csv"), &s)?;
    write_manifest(out, "eval-gt", a, &["metrics.csv"])?;
    timing.write(out, "eval-gt", 1)
}

pub fn cmd_rank_channels(a: &RankArgs) -> Result<()> {
    let out = &a.common.out;
    make_out(out)?;
    let mut timing = Timing::new();
    let maps = read_maps(&a.saliency)?;
    let ranking = timing.stage("rank", || rank_channels(&maps))?;
    let mut s = String::from("rank,channel,score\n");
    for (r, (c, score)) in ranking.iter().enumerate() {
        csv_row(
            &mut s,
            &[(r + 1).to_string(), c.to_string(), fmt_f64(*score)],
        );
    }
    io::write_text(&out.join("channel_ranking.csv"), &s)?;
    write_manifest(out, "rank-channels", a, &["channel_ranking.csv"])?;
    timing.write(out, "rank-channels", 1)
}

/// Referee seeds derived from the run seed.
pub fn referee_seeds(seed: u64) -> [u64; 3] {
    [rng::derive(seed, 1), rng::derive(seed, 2), 0]
}

pub fn cmd_eval_amee(a: &EvalAmeeArgs) -> Result<()> {
    let out = &a.common.out;
    make_out(out)?;
    let pool = Pool::new(a.common.jobs)?;
    let mut timing = Timing::new();
    let train = io::read_dataset(&a.train)?;
    let test = io::read_dataset(&a.test)?;
    let (_, len) = test
        .dims()
        .ok_or_else(|| CoreError::InvalidArgument("empty test split".into()))?;
    let mut explainers = Vec::new();
    for spec in &a.explanations {
        let (name, dir) = spec.split_once('=').ok_or_else(|| {
            MtsxError::Usage(format!("--explanation expects name=DIR, got {spec:?}"))
        })?;
        let maps = read_maps(Path::new(dir))?
            .iter()
            .map(|w| {
                let w = io::with_series_length(w, len)?;
                let w = if w.scale() == Scale::Raw {
                    rescale_abs_minmax(&w)
                } else {
                    w
                };
                Ok(w.flattened())
            })
            .collect::<Result<Vec<_>>>()?;
        explainers.push(Explainer {
            name: name.to_owned(),
            maps,
        });
    }
    if explainers.len() < 2 {
        return Err(MtsxError::Usage(
            "eval-amee needs at least two --explanation entries".into(),
        ));
    }
    let strategies = match &a.strategies {
        None => PerturbationStrategy::ALL.to_vec(),
        Some(s) => s
            .split(',')
            .map(|t| {
                PerturbationStrategy::parse(t.trim())
                    .ok_or_else(|| MtsxError::Usage(format!("unknown strategy {t:?}")))
            })
            .collect::<Result<_>>()?,
    };
    let fractions = match &a.fractions {
        None => ameeval::default_fractions(),
        Some(s) => parse_list(s, "--fractions")?,
    };
    let cfg = AmeeConfig {
        strategies,
        fractions,
        seed: a.seed,
    };
    let rl = RocketLogisticTrainer {
        n_kernels: a.kernels,
        config: LogisticConfig::default(),
    };
    let rr = RocketRidgeTrainer {
        n_kernels: a.kernels,
        ..Default::default()
    };
    let ridge = RawRidgeTrainer::default();
    let seeds = referee_seeds(a.seed);
    let referees = [
        Referee {
            trainer: &rl,
            seed: seeds[0],
        },
        Referee {
            trainer: &rr,
            seed: seeds[1],
        },
        Referee {
            trainer: &ridge,
            seed: seeds[2],
        },
    ];
    let (train_c, test_c) = (train.concatenated(), test.concatenated());
    let run = timing.stage("evaluate", || {
        ameeval::run_amee(&train_c, &test_c, &explainers, &referees, &cfg, &pool)
    })?;

    let header: Vec<String> = referees
        .iter()
        .map(|r| format!("{} (seed {})", r.trainer.name(), r.seed))
        .collect();
    let mut s = format!(
        "# referees: {}; evaluated on concatenated series\n",
        header.join(", ")
    );
    s.push_str("explainer,average_auc,scaled_auc,power,rank\n");
    for r in &run.report.rows {
        csv_row(
            &mut s,
            &[
                r.explainer.clone(),
                fmt_f64(r.average_auc),
                fmt_f64(r.scaled_auc),
                fmt_f64(r.power),
                r.rank.to_string(),
            ],
        );
    }
    io::write_text(&out.join("amee_report.csv"), &s)?;

    let mut c = String::from("explainer,referee,strategy,fraction,accuracy\n");
    for curve in &run.curves {
        for (f, acc) in curve.fractions.iter().zip(&curve.accuracies) {
            csv_row(
                &mut c,
                &[
                    curve.explainer.clone(),
                    curve.referee.clone(),
                    curve.strategy.name().into(),
                    fmt_f64(*f),
                    fmt_f64(*acc),
                ],
            );
        }
    }
    io::write_text(&out.join("amee_curves.csv"), &c)?;

    let mut r = String::from("referee,seed,clean_accuracy,majority_rate,excluded\n");
    for (summary, referee) in run.report.referees.iter().zip(&referees) {
        csv_row(
            &mut r,
            &[
                summary.name.clone(),
                referee.seed.to_string(),
                fmt_f64(summary.clean_accuracy),
                fmt_f64(summary.majority_rate),
                summary.excluded.to_string(),
            ],
        );
    }
    io::write_text(&out.join("amee_referees.csv"), &r)?;
    write_manifest(
        out,
        "eval-amee",
        a,
        &["amee_report.csv", "amee_curves.csv", "amee_referees.csv"],
    )?;
    timing.write(out, "eval-amee", a.common.jobs)
}

fn read_csv_rows(path: &Path) -> Result<Vec<Vec<String>>> {
    Ok(io::read_text(path)?
        .lines()
        .filter(|l| !l.starts_with('#') && !l.is_empty())
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect())
}

pub fn cmd_report(a: &ReportArgs) -> Result<()> {
    let out = &a.common.out;
    let mut steps: Vec<PathBuf> = fs::read_dir(&a.run)
        .map_err(|e| MtsxError::io(&a.run, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join("manifest.json").is_file())
        .collect();
    steps.sort();
    let out_canon = fs::canonicalize(out).ok();
    let mut metrics = String::from("step,explainer,precision,recall,f1,pr_auc,roc_auc\n");
    let mut amee = String::from("step,explainer,average_auc,scaled_auc,power,rank\n");
    let mut acc = String::from("step,split,accuracy\n");
    let mut timing_csv = String::from("step,command,stage,seconds\n");
    for step in &steps {
        if out_canon.is_some() && fs::canonicalize(step).ok() == out_canon {
            continue;
        }
        let name = dir_name(step);
        let manifest: serde_json::Value =
            serde_json::from_str(&io::read_text(&step.join("manifest.json"))?)?;
        let command = manifest["command"].as_str().unwrap_or("").to_owned();
        match command.as_str() {
            "eval-gt" => {
                for row in read_csv_rows(&step.join("metrics.csv"))?
                    .into_iter()
                    .filter(|r| r.get(1).is_some_and(|v| v == "mean"))
                {
                    let mut fields = vec![name.clone(), row[0].clone()];
                    fields.extend(row[2..].iter().cloned());
                    csv_row(&mut metrics, &fields);
                }
            }
            "eval-amee" => {
                for row in read_csv_rows(&step.join("amee_report.csv"))? {
                    let mut fields = vec![name.clone()];
                    fields.extend(row);
                    csv_row(&mut amee, &fields);
                }
            }
            "train" => {
                for row in read_csv_rows(&step.join("accuracy.csv"))? {
                    let mut fields = vec![name.clone()];
                    fields.extend(row);
                    csv_row(&mut acc, &fields);
                }
            }
            _ => {}
        }
        let tpath = step.join("timing.json");
        if tpath.is_file() {
            let t: serde_json::Value = serde_json::from_str(&io::read_text(&tpath)?)?;
            for s in t["stages"].as_array().into_iter().flatten() {
                let label = match (command.as_str(), s["stage"].as_str().unwrap_or("")) {
                    ("explain", "explain") => "Explanation Time".to_owned(),
                    ("eval-amee", "evaluate") => "Evaluation Time".to_owned(),
                    (_, other) => other.to_owned(),
                };
                csv_row(
                    &mut timing_csv,
                    &[
                        name.clone(),
                        command.clone(),
                        label,
                        fmt_f64(s["seconds"].as_f64().unwrap_or(f64::NAN)),
                    ],
                );
            }
        }
    }
    make_out(out)?;
    io::write_text(&out.join("report_metrics.csv"), &metrics)?;
    io::write_text(&out.join("report_amee.csv"), &amee)?;
    io::write_text(&out.join("report_accuracy.csv"), &acc)?;
    io::write_text(&out.join("report_timing.csv"), &timing_csv)?;
    write_manifest(
        out,
        "report",
        a,
        &[
            "report_metrics.csv",
            "report_amee.csv",
            "report_accuracy.csv",
        ],
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use mtsx_core::model::argmax;

    #[test]
    fn ranges_and_lists() {
        assert_eq!(parse_range("0..10", "x").unwrap(), 0..10);
        assert!(matches!(parse_range("0-10", "x"), Err(MtsxError::Usage(_))));
        assert_eq!(parse_list::<f64>("0.5, 1", "x").unwrap(), vec![0.5, 1.0]);
        assert!(parse_list::<f64>("a", "x").is_err());
    }

    #[test]
    fn usage_errors_exit_2() {
        let argv = |s: &[&str]| s.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        assert_eq!(run(argv(&["mtsx", "gen"])), 2);
        assert_eq!(run(argv(&["mtsx", "bogus"])), 2);
        assert_eq!(run(argv(&["mtsx", "--help"])), 0);
    }

    #[test]
    fn concatenated_view_matches_model() {
        let (train, test, _) = {
            let mut spec = SynthSpec::new(SynthKind::Gaussian, 1);
            spec.n_train = 20;
            spec.n_test = 4;
            generate_dataset(&spec).unwrap()
        };
        let m: SavedModel = RawRidgeClassifier::fit(&train, 3, &default_alphas())
            .unwrap()
            .into();
        let view = Unconcat {
            inner: &m,
            d: 20,
            len: 100,
        };
        for x in &test.instances {
            assert_eq!(view.predict_proba(&concat_channels(x)), m.predict_proba(x));
            assert_eq!(
                argmax(&view.predict_proba(&concat_channels(x))),
                m.predict(x)
            );
        }
    }
}
