//! Command-line front end: run configuration, the five subcommands and
//! run-directory persistence.
//!
//! Exit codes: 0 success, 1 runtime or check failure, 2 configuration error.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::autodiff::{gradcheck_with_shift, GradcheckReport, GRADCHECK_MAX_QUBITS};
use crate::circuit::{analyze_depth, CostModel, DepthReport};
use crate::data::{
    load_dataset, prepare, split, synthetic_corpora, tokenize_record, DatasetFormat, LabelKind, LabelSpace,
    PreparedData, RawDataset, SyntheticKind,
};
use crate::error::{Error, Result};
use crate::model::{Checkpoint, EvalMetrics, ExecOptions, HeadKind, Model, ModelConfig, ModelKind};
use crate::qnet::{count_parameters, Ablation, QNetCircuit, QNetConfig};
use crate::sim::MAX_QUBITS;
use crate::train::{loss_endpoints, loss_jitter, train_with, MetricRecord, TrainConfig};

/// Environment variable overriding the worker-thread count.
pub const WORKERS_ENV: &str = "QNET_WORKERS";

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_CONFIG: i32 = 2;

/// Everything a run needs. Stored verbatim as `config.json` in every run
/// directory; feeding it back through `--config` reproduces the run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelKind,
    pub n: usize,
    pub d: usize,
    pub blocks: usize,
    /// Derived from the labels when absent.
    pub head: Option<HeadKind>,
    pub ablation: Ablation,
    pub dataset_path: Option<PathBuf>,
    pub dataset_format: Option<DatasetFormat>,
    /// Used when no dataset path is given.
    pub synthetic: SyntheticKind,
    pub synthetic_size: usize,
    /// Treat text labels as real values (regression).
    pub regression: bool,
    pub test_fraction: f64,
    pub epochs: usize,
    pub steps_per_epoch: usize,
    pub batch_size: usize,
    pub initial_lr: f64,
    pub num_nodes: usize,
    pub alpha: f64,
    /// Depolarizing probability per gate qubit; 0 trains noise-free.
    pub noise: f64,
    pub trajectories: usize,
    pub seed: u64,
    pub out: PathBuf,
    /// Sequence lengths for the `analyze` sweep at fixed `d`.
    pub sweep_n: Vec<usize>,
    /// Embedding sizes for the `analyze` sweep at fixed `n`.
    pub sweep_d: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            model: ModelKind::Qnet,
            n: 8,
            d: 2,
            blocks: 1,
            head: None,
            ablation: Ablation::Full,
            dataset_path: None,
            dataset_format: None,
            synthetic: SyntheticKind::KeywordPresence,
            synthetic_size: 1000,
            regression: false,
            test_fraction: crate::data::DEFAULT_TEST_FRACTION,
            epochs: t.epochs,
            steps_per_epoch: t.steps_per_epoch,
            batch_size: t.batch_size,
            initial_lr: t.initial_lr,
            num_nodes: t.num_nodes,
            alpha: t.alpha,
            noise: 0.0,
            trajectories: t.trajectories,
            seed: 0,
            out: PathBuf::from("runs"),
            sweep_n: Vec::new(),
            sweep_d: Vec::new(),
        }
    }
}

fn config_err(field: &str, msg: impl std::fmt::Display) -> Error {
    Error::Config(format!("`{field}`: {msg}"))
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("n", self.n),
            ("d", self.d),
            ("blocks", self.blocks),
            ("epochs", self.epochs),
            ("steps_per_epoch", self.steps_per_epoch),
            ("batch_size", self.batch_size),
            ("num_nodes", self.num_nodes),
            ("trajectories", self.trajectories),
        ] {
            if v == 0 {
                return Err(config_err(field, "must be >= 1"));
            }
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(config_err("noise", format!("{} outside [0, 1]", self.noise)));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(config_err("test_fraction", "must lie in (0, 1)"));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(config_err("alpha", "must lie in (0, 1]"));
        }
        if !(self.initial_lr.is_finite() && self.initial_lr > 0.0) {
            return Err(config_err("initial_lr", "must be positive"));
        }
        if self.synthetic_size < 10 {
            return Err(config_err("synthetic_size", "must be >= 10"));
        }
        if self.dataset_path.is_some() && self.dataset_format.is_none() {
            return Err(config_err("dataset_format", "required with dataset_path"));
        }
        match self.head {
            Some(HeadKind::SentenceClassify { classes: 0 }) => {
                return Err(config_err("head", "needs at least one class"))
            }
            Some(HeadKind::TokenClassify { classes }) if classes < 2 => {
                return Err(config_err("head", "token heads need at least two tags"))
            }
            _ => {}
        }
        if self.sweep_n.contains(&0) || self.sweep_d.contains(&0) {
            return Err(config_err("sweep_n/sweep_d", "entries must be >= 1"));
        }
        Ok(())
    }

    /// Commands that simulate need the register to fit the simulator.
    pub fn check_simulable(&self) -> Result<()> {
        if self.n * self.d > MAX_QUBITS {
            return Err(config_err(
                "n",
                format!("n·d = {} exceeds the {MAX_QUBITS}-qubit simulator", self.n * self.d),
            ));
        }
        Ok(())
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            steps_per_epoch: self.steps_per_epoch,
            batch_size: self.batch_size,
            seed: self.seed,
            initial_lr: self.initial_lr,
            num_nodes: self.num_nodes,
            alpha: self.alpha,
            noise: (self.noise > 0.0).then_some(self.noise),
            trajectories: self.trajectories,
        }
    }

    pub fn qnet_config(&self) -> QNetConfig {
        QNetConfig {
            n: self.n,
            d: self.d,
            blocks: self.blocks,
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Raw dataset named by the config (file or synthetic corpus).
    pub fn raw_dataset(&self) -> Result<RawDataset> {
        match (&self.dataset_path, self.dataset_format) {
            (Some(path), Some(format)) => load_dataset(path, format),
            _ => synthetic_corpora(self.synthetic, self.synthetic_size, self.seed),
        }
    }

    fn label_kind(&self) -> LabelKind {
        if self.regression {
            LabelKind::Real
        } else {
            LabelKind::Class
        }
    }

    /// Split and encoded data plus the model shape that fits it.
    pub fn prepare(&self) -> Result<(PreparedData, ModelConfig)> {
        let raw = self.raw_dataset()?;
        let data = prepare(&raw, self.label_kind(), self.n, self.test_fraction, self.seed)?;
        let head = self.head.unwrap_or_else(|| HeadKind::for_labels(&data.labels));
        let fits = match (&data.labels, head) {
            (LabelSpace::Tags(t), HeadKind::TokenClassify { classes }) => classes >= t.len(),
            (LabelSpace::Classes(c), HeadKind::SentenceClassify { classes }) => classes.max(2) >= c.len(),
            (LabelSpace::Real, HeadKind::Regress) => true,
            _ => false,
        };
        if !fits {
            return Err(config_err("head", format!("{head:?} does not fit the dataset labels")));
        }
        let model = ModelConfig {
            model: self.model,
            n: self.n,
            d: self.d,
            blocks: self.blocks,
            head,
            ablation: self.ablation,
            vocab_size: data.vocab.len(),
        };
        Ok((data, model))
    }
}

/// Field overrides shared by every subcommand; each maps to the
/// `RunConfig` field of the same name.
#[derive(Args, Clone, Debug, Default)]
pub struct Overrides {
    /// JSON run configuration to start from.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Directory that receives run directories and reports.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_parser = parse_model_kind)]
    pub model: Option<ModelKind>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub blocks: Option<usize>,
    /// binary, classify:<C>, regress or tag:<C>.
    #[arg(long, value_parser = parse_head)]
    pub head: Option<HeadKind>,
    /// full, mixture_only or feedforward_only.
    #[arg(long, value_parser = parse_ablation)]
    pub ablation: Option<Ablation>,
    #[arg(long)]
    pub dataset_path: Option<PathBuf>,
    /// csv, jsonl or conll.
    #[arg(long, value_parser = parse_format)]
    pub dataset_format: Option<DatasetFormat>,
    /// keyword_presence or tag_copy.
    #[arg(long, value_parser = parse_synthetic)]
    pub synthetic: Option<SyntheticKind>,
    #[arg(long)]
    pub synthetic_size: Option<usize>,
    #[arg(long)]
    pub regression: Option<bool>,
    #[arg(long)]
    pub test_fraction: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub steps_per_epoch: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub initial_lr: Option<f64>,
    #[arg(long)]
    pub num_nodes: Option<usize>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub trajectories: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    pub sweep_n: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    pub sweep_d: Option<Vec<usize>>,
}

fn parse_model_kind(s: &str) -> std::result::Result<ModelKind, String> {
    match s {
        "qnet" => Ok(ModelKind::Qnet),
        "resqnet" => Ok(ModelKind::Resqnet),
        _ => Err(format!("unknown model `{s}` (qnet or resqnet)")),
    }
}

fn parse_ablation(s: &str) -> std::result::Result<Ablation, String> {
    match s {
        "full" => Ok(Ablation::Full),
        "mixture_only" => Ok(Ablation::MixtureOnly),
        "feedforward_only" => Ok(Ablation::FeedforwardOnly),
        _ => Err(format!("unknown ablation `{s}`")),
    }
}

fn parse_format(s: &str) -> std::result::Result<DatasetFormat, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_synthetic(s: &str) -> std::result::Result<SyntheticKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_head(s: &str) -> std::result::Result<HeadKind, String> {
    let classes = |v: &str| v.parse::<usize>().map_err(|_| format!("bad class count in `{s}`"));
    match s.split_once(':') {
        None if s == "binary" => Ok(HeadKind::SentenceClassify { classes: 1 }),
        None if s == "regress" => Ok(HeadKind::Regress),
        Some(("classify", c)) => Ok(HeadKind::SentenceClassify { classes: classes(c)? }),
        Some(("tag", c)) => Ok(HeadKind::TokenClassify { classes: classes(c)? }),
        _ => Err(format!("unknown head `{s}` (binary, classify:<C>, regress, tag:<C>)")),
    }
}

impl Overrides {
    /// Loads the base config (or defaults) and applies every given flag.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        macro_rules! apply {
            ($($field:ident),*) => {
                $(if let Some(v) = &self.$field { c.$field = v.clone(); })*
            };
        }
        apply!(
            seed, out, model, n, d, blocks, ablation, synthetic, synthetic_size, regression, test_fraction,
            epochs, steps_per_epoch, batch_size, initial_lr, num_nodes, alpha, noise, trajectories, sweep_n,
            sweep_d
        );
        if let Some(h) = self.head {
            c.head = Some(h);
        }
        if let Some(p) = &self.dataset_path {
            c.dataset_path = Some(p.clone());
        }
        if let Some(f) = self.dataset_format {
            c.dataset_format = Some(f);
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Parser, Debug)]
#[command(name = "qnet", version, about = "Train, evaluate and analyze QNet sequence encoders")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model and write a run directory.
    Train(Overrides),
    /// Evaluate a checkpoint on the configured dataset's test split.
    Eval {
        #[command(flatten)]
        overrides: Overrides,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Evaluate on every example instead of the test split.
        #[arg(long)]
        all: bool,
    },
    /// Parameter counts, gate counts and circuit depth, optionally swept.
    Analyze(Overrides),
    /// Cross-check adjoint, parameter-shift and finite-difference gradients.
    Gradcheck {
        #[command(flatten)]
        overrides: Overrides,
        /// Evaluate the shift rule at this angle instead of π/2.
        #[arg(long, hide = true)]
        corrupt_shift: Option<f64>,
    },
    /// One noisy training run per depolarizing probability.
    NoiseSweep {
        #[command(flatten)]
        overrides: Overrides,
        /// Comma-separated depolarizing probabilities.
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<f64>,
    },
}

/// Sets the global worker pool from [`WORKERS_ENV`] when present.
pub fn configure_workers() -> Result<()> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| Error::Config(format!("{WORKERS_ENV} must be a positive integer, got `{v}`")))?;
        // a pool that already exists keeps its size
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    Ok(())
}

pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        _ => EXIT_FAILURE,
    }
}

/// Parses `args` and runs the command, returning the process exit code.
/// Messages go to stdout, errors to stderr.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match configure_workers().and_then(|_| run(cli.command)) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(command: Command) -> Result<i32> {
    match command {
        Command::Train(o) => {
            let dir = cmd_train(&o.resolve()?)?;
            println!("{}", dir.display());
            Ok(EXIT_OK)
        }
        Command::Eval {
            overrides,
            checkpoint,
            all,
        } => {
            let metrics = cmd_eval(&overrides.resolve()?, &checkpoint, all)?;
            println!("{}", serde_json::to_string_pretty(&metrics)?);
            Ok(EXIT_OK)
        }
        Command::Analyze(o) => {
            let cfg = o.resolve()?;
            let report = cmd_analyze(&cfg)?;
            fs::create_dir_all(&cfg.out)?;
            let path = cfg.out.join("analyze.json");
            fs::write(&path, serde_json::to_string_pretty(&report)?)?;
            print!("{}", report.table());
            println!("report: {}", path.display());
            Ok(EXIT_OK)
        }
        Command::Gradcheck {
            overrides,
            corrupt_shift,
        } => {
            let cfg = overrides.resolve()?;
            let report = cmd_gradcheck(&cfg, corrupt_shift)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            if report.passed {
                println!("gradcheck passed: max deviation {:.3e}", report.max_deviation);
                Ok(EXIT_OK)
            } else {
                eprintln!(
                    "gradcheck failed: max deviation {:.3e} at index {}",
                    report.max_deviation, report.worst_index
                );
                Ok(EXIT_FAILURE)
            }
        }
        Command::NoiseSweep { overrides, p } => {
            let cfg = overrides.resolve()?;
            let summary = cmd_noise_sweep(&cfg, &p)?;
            print!("{}", summary.table());
            Ok(EXIT_OK)
        }
    }
}

/// `<out>/<prefix>-<unix seconds>-seed<seed>`, suffixed if it exists.
fn fresh_dir(out: &Path, prefix: &str, seed: u64) -> Result<PathBuf> {
    let ts = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let base = format!("{prefix}-{ts}-seed{seed}");
    let mut dir = out.join(&base);
    let mut k = 1;
    while dir.exists() {
        dir = out.join(format!("{base}-{k}"));
        k += 1;
    }
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Trains into `dir`: resolved config, metrics stream, checkpoint and the
/// circuit dump. Returns the metrics records.
pub fn train_into(cfg: &RunConfig, dir: &Path) -> Result<Vec<MetricRecord>> {
    cfg.validate()?;
    cfg.check_simulable()?;
    let (data, model_cfg) = cfg.prepare()?;
    fs::write(dir.join("config.json"), serde_json::to_string_pretty(cfg)?)?;
    let mut model = Model::init(model_cfg, cfg.seed)?;
    fs::write(dir.join("circuit.txt"), model.circuit().circuit().dump())?;
    let mut metrics = BufWriter::new(File::create(dir.join("metrics.jsonl"))?);
    let records = train_with(&mut model, &data.train, Some(&data.test), &cfg.train_config(), |r| {
        serde_json::to_writer(&mut metrics, r)?;
        metrics.write_all(b"\n")?;
        Ok(())
    })?;
    metrics.flush()?;
    Checkpoint::from_model(&model, Some(&data.vocab), Some(&data.labels)).save(&dir.join("checkpoint.json"))?;
    Ok(records)
}

pub fn cmd_train(cfg: &RunConfig) -> Result<PathBuf> {
    cfg.validate()?;
    cfg.check_simulable()?;
    let dir = fresh_dir(&cfg.out, "run", cfg.seed)?;
    train_into(cfg, &dir)?;
    Ok(dir)
}

/// Evaluates a checkpoint with its own vocabulary and labels on the test
/// split the config defines (or on everything).
pub fn cmd_eval(cfg: &RunConfig, checkpoint: &Path, all: bool) -> Result<EvalMetrics> {
    cfg.validate()?;
    let ck = Checkpoint::load(checkpoint)?;
    let model = ck.into_model()?;
    let vocab = ck
        .vocab()
        .ok_or_else(|| Error::data("checkpoint has no vocabulary; it cannot tokenize text"))?;
    let labels = ck
        .labels
        .clone()
        .ok_or_else(|| Error::data("checkpoint has no label space"))?;
    let raw = cfg.raw_dataset()?;
    let records = if all {
        raw.records
    } else {
        split(&raw.records, cfg.test_fraction, cfg.seed)?.1
    };
    let n = model.config().n;
    let examples = records
        .iter()
        .map(|r| tokenize_record(r, &vocab, &labels, n))
        .collect::<Result<Vec<_>>>()?;
    model.evaluate(&examples, &ExecOptions::default())
}

/// One `(n, d)` row of the structural report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalyzeRow {
    pub n: usize,
    pub d: usize,
    pub blocks: usize,
    pub qnet_params: usize,
    pub resqnet_params: usize,
    /// Absent when `n·d` exceeds the simulator's qubit limit.
    pub depth: Option<DepthReport>,
    pub encoding_depth: Option<usize>,
    pub mixture_depth: Option<usize>,
    pub feedforward_depth: Option<usize>,
    pub mixture_gates: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AnalyzeReport {
    pub config: RunConfig,
    pub base: AnalyzeRow,
    pub sweep_n: Vec<AnalyzeRow>,
    pub sweep_d: Vec<AnalyzeRow>,
}

fn analyze_row(n: usize, d: usize, blocks: usize, ablation: Ablation) -> Result<AnalyzeRow> {
    let config = QNetConfig { n, d, blocks };
    let resqnet = ModelConfig {
        model: ModelKind::Resqnet,
        n,
        d,
        blocks,
        head: HeadKind::Regress,
        ablation,
        vocab_size: 2,
    };
    let mut row = AnalyzeRow {
        n,
        d,
        blocks,
        qnet_params: count_parameters(&config),
        resqnet_params: resqnet.encoder_parameter_count(),
        depth: None,
        encoding_depth: None,
        mixture_depth: None,
        feedforward_depth: None,
        mixture_gates: None,
    };
    if n * d <= MAX_QUBITS {
        let qc = QNetCircuit::new(config, ablation)?;
        let report = analyze_depth(qc.circuit(), &CostModel::default());
        row.encoding_depth = report.per_layer_depth.get("enc").copied();
        row.mixture_depth = report.per_layer_depth.get("mix[0]").copied();
        row.feedforward_depth = report.per_layer_depth.get("ff[0]").copied();
        row.mixture_gates = report.per_layer_gates.get("mix[0]").copied();
        row.depth = Some(report);
    }
    Ok(row)
}

impl AnalyzeReport {
    pub fn table(&self) -> String {
        let fmt = |v: Option<usize>| v.map_or("-".to_string(), |v| v.to_string());
        let mut s = String::from("    n     d blocks  qnet  resqnet  enc  mix  ff  mix_gates  total\n");
        for row in std::iter::once(&self.base).chain(&self.sweep_n).chain(&self.sweep_d) {
            s += &format!(
                "{:>5} {:>5} {:>6} {:>5} {:>8} {:>4} {:>4} {:>3} {:>10} {:>6}\n",
                row.n,
                row.d,
                row.blocks,
                row.qnet_params,
                row.resqnet_params,
                fmt(row.encoding_depth),
                fmt(row.mixture_depth),
                fmt(row.feedforward_depth),
                fmt(row.mixture_gates),
                fmt(row.depth.as_ref().map(|r| r.total_depth)),
            );
        }
        s
    }
}

/// Structural report; a pure function of the config.
pub fn cmd_analyze(cfg: &RunConfig) -> Result<AnalyzeReport> {
    cfg.validate()?;
    Ok(AnalyzeReport {
        config: cfg.clone(),
        base: analyze_row(cfg.n, cfg.d, cfg.blocks, cfg.ablation)?,
        sweep_n: cfg
            .sweep_n
            .iter()
            .map(|&n| analyze_row(n, cfg.d, cfg.blocks, cfg.ablation))
            .collect::<Result<_>>()?,
        sweep_d: cfg
            .sweep_d
            .iter()
            .map(|&d| analyze_row(cfg.n, d, cfg.blocks, cfg.ablation))
            .collect::<Result<_>>()?,
    })
}

pub fn cmd_gradcheck(cfg: &RunConfig, corrupt_shift: Option<f64>) -> Result<GradcheckReport> {
    cfg.validate()?;
    if cfg.n * cfg.d > GRADCHECK_MAX_QUBITS {
        return Err(config_err(
            "n",
            format!("gradcheck needs n·d <= {GRADCHECK_MAX_QUBITS}, got {}", cfg.n * cfg.d),
        ));
    }
    let shift = corrupt_shift.unwrap_or(std::f64::consts::FRAC_PI_2);
    gradcheck_with_shift(cfg.qnet_config(), cfg.seed, shift)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRun {
    pub p: f64,
    pub dir: PathBuf,
    /// Standard deviation of the per-step loss curve.
    pub jitter: f64,
    /// Mean loss over the first quarter of steps.
    pub initial_loss: f64,
    /// Mean loss over the last quarter of steps.
    pub final_loss: f64,
    pub descended: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepSummary {
    pub dir: PathBuf,
    pub runs: Vec<SweepRun>,
}

impl SweepSummary {
    pub fn table(&self) -> String {
        let mut s = format!("sweep: {}\n       p    jitter   initial     final  descended\n", self.dir.display());
        for r in &self.runs {
            s += &format!(
                "{:>8.3} {:>9.4} {:>9.4} {:>9.4}  {}\n",
                r.p, r.jitter, r.initial_loss, r.final_loss, r.descended
            );
        }
        s
    }
}

/// One training run per `p` with the shared seed, each in `p<value>/`
/// under a fresh sweep directory, plus `summary.json`.
pub fn cmd_noise_sweep(cfg: &RunConfig, p_list: &[f64]) -> Result<SweepSummary> {
    cfg.validate()?;
    cfg.check_simulable()?;
    if p_list.is_empty() {
        return Err(config_err("p", "needs at least one probability"));
    }
    if let Some(p) = p_list.iter().find(|p| !(0.0..=1.0).contains(*p)) {
        return Err(config_err("p", format!("{p} outside [0, 1]")));
    }
    let dir = fresh_dir(&cfg.out, "sweep", cfg.seed)?;
    let mut runs = Vec::new();
    for &p in p_list {
        let run_cfg = RunConfig {
            noise: p,
            ..cfg.clone()
        };
        let run_dir = dir.join(format!("p{p}"));
        fs::create_dir_all(&run_dir)?;
        let records = train_into(&run_cfg, &run_dir)?;
        let losses: Vec<f64> = records.iter().map(|r| r.loss).collect();
        let (initial_loss, final_loss) = loss_endpoints(&losses);
        runs.push(SweepRun {
            p,
            dir: run_dir,
            jitter: loss_jitter(&losses),
            initial_loss,
            final_loss,
            descended: final_loss < initial_loss,
        });
    }
    let summary = SweepSummary { dir: dir.clone(), runs };
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(&summary)?)?;
    Ok(summary)
}
