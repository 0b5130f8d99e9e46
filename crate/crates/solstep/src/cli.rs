//! The `solstep` command line.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use solstep_core::features::{feature_matrix, FeatureMode, PlacementConfig};
use solstep_core::filter::filter_columns;
use solstep_core::harness::{fit_split, sweep, Protocol, Split, SweepAxis};
use solstep_core::ingest::{Activity, Environment};
use solstep_core::pipeline::{build_dataset, TransformerLearner};
use solstep_core::synthgen::generate_dataset;

use crate::config::{resolve_seed, RunConfig, RunRecord, SEED_ENV};
use crate::error::{io_err, Error, Result};
use crate::io::{load_recordings, parse_window_csv, write_json, write_session};
use crate::modelfile::ModelFile;
use crate::parallel::run_protocol_with;
use crate::reports::{summary_csv, sweep_csv, write_eval_report, write_history, write_sweep};
use crate::TOOL_VERSION;

#[derive(Debug, Parser)]
#[command(name = "solstep", version, about = "Activity recognition from wearable photovoltaic cells")]
pub struct Cli {
    /// TOML or JSON run configuration (a previous run.json works too).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for generation, splitting and training [env: SOLSTEP_SEED].
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset.
    Simulate(SimulateArgs),
    /// Train a classifier on all windows of a dataset.
    Train(TrainArgs),
    /// Run an evaluation protocol.
    Eval(EvalArgs),
    /// Repeat an evaluation while varying one setting.
    Sweep(SweepArgs),
    /// Classify one window with a saved model.
    Infer(InferArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub subjects: Option<usize>,
    /// Number of activities, taken in canonical order.
    #[arg(long)]
    pub activities: Option<usize>,
    #[arg(long)]
    pub seconds: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub environments: Vec<Environment>,
    #[arg(long)]
    pub difficulty: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FeatureArg {
    Pairwise,
    Temporal,
    Both,
    Raw,
}

impl From<FeatureArg> for FeatureMode {
    fn from(a: FeatureArg) -> Self {
        match a {
            FeatureArg::Pairwise => FeatureMode::PairwiseOnly,
            FeatureArg::Temporal => FeatureMode::TemporalOnly,
            FeatureArg::Both => FeatureMode::Both,
            FeatureArg::Raw => FeatureMode::RawPassthrough,
        }
    }
}

#[derive(Debug, Args, Default)]
pub struct PipelineArgs {
    /// Dataset directory or readings CSV; repeatable.
    #[arg(long)]
    pub data: Vec<PathBuf>,
    #[arg(long)]
    pub placement: Option<PlacementConfig>,
    #[arg(long)]
    pub cutoff: Option<f64>,
    #[arg(long)]
    pub window_sec: Option<f64>,
    /// Window overlap in percent.
    #[arg(long)]
    pub overlap: Option<f64>,
    #[arg(long, value_enum)]
    pub features: Option<FeatureArg>,
    #[arg(long)]
    pub no_normalize: bool,
    #[arg(long)]
    pub blocks: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub head_size: Option<usize>,
    #[arg(long)]
    pub ff_channels: Option<usize>,
    #[arg(long)]
    pub mlp_units: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub patience: Option<usize>,
    #[arg(long)]
    pub val_fraction: Option<f64>,
    #[arg(long)]
    pub channel_dropout: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProtocolArg {
    Kfold,
    Louo,
    CrossEnv,
}

#[derive(Debug, Args)]
pub struct ProtocolArgs {
    #[arg(long, value_enum)]
    pub protocol: Option<ProtocolArg>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long, default_value = "outdoor")]
    pub train_env: Environment,
    #[arg(long, default_value = "indoor")]
    pub test_env: Environment,
    /// Run folds one after another.
    #[arg(long)]
    pub serial: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(flatten)]
    pub protocol: ProtocolArgs,
    /// Axis (overlap, placement or window) and comma-separated values.
    #[arg(long, num_args = 2, value_names = ["AXIS", "VALUES"])]
    pub sweep: Vec<String>,
}

#[derive(Debug, Args)]
pub struct InferArgs {
    pub model: PathBuf,
    /// CSV with a header of placement codes and one row of volts per scan.
    pub window: PathBuf,
    /// The window is unfiltered; apply the model's low-pass filter first.
    #[arg(long)]
    pub raw: bool,
}

pub fn parse_sweep_axis(axis: &str, values: &str) -> Result<SweepAxis> {
    let items: Vec<&str> = values.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    let numbers = || {
        items
            .iter()
            .map(|v| {
                v.parse::<f64>()
                    .map_err(|_| Error::Config(format!("sweep value '{v}' is not a number")))
            })
            .collect::<Result<Vec<_>>>()
    };
    match axis.to_ascii_lowercase().as_str() {
        "overlap" => Ok(SweepAxis::Overlap(numbers()?)),
        "window" | "window_sec" | "window-size" => Ok(SweepAxis::WindowSize(numbers()?)),
        "placement" => Ok(SweepAxis::Placement(
            items
                .iter()
                .map(|v| v.parse().map_err(Error::Config))
                .collect::<Result<Vec<_>>>()?,
        )),
        other => Err(Error::Config(format!(
            "unknown sweep axis '{other}' (expected overlap, placement or window)"
        ))),
    }
}

impl PipelineArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        if !self.data.is_empty() {
            cfg.data = self.data.clone();
        }
        let p = &mut cfg.pipeline;
        macro_rules! set {
            ($($field:ident => $target:expr),* $(,)?) => {
                $(if let Some(v) = self.$field { $target = v.into(); })*
            };
        }
        set!(
            placement => p.placement,
            cutoff => p.cutoff_hz,
            window_sec => p.window_sec,
            overlap => p.overlap_pct,
            features => p.features.mode,
            blocks => p.model.num_blocks,
            heads => p.model.num_heads,
            head_size => p.model.head_size,
            ff_channels => p.model.ff_channels,
            mlp_units => p.model.mlp_units,
            epochs => p.train.max_epochs,
            batch_size => p.train.batch_size,
            lr => p.train.lr,
            patience => p.train.patience,
            val_fraction => p.val_fraction,
            channel_dropout => p.train.input_channel_dropout,
        );
        if self.no_normalize {
            p.features.normalize = false;
        }
    }
}

impl ProtocolArgs {
    fn apply(&self, cfg: &mut RunConfig) {
        match self.protocol {
            Some(ProtocolArg::Kfold) => cfg.protocol = Protocol::KFold { k: self.k.unwrap_or(5) },
            Some(ProtocolArg::Louo) => cfg.protocol = Protocol::LeaveOneUserOut,
            Some(ProtocolArg::CrossEnv) => {
                cfg.protocol = Protocol::CrossEnvironment {
                    train: self.train_env,
                    test: self.test_env,
                }
            }
            None => {
                if let (Some(k), Protocol::KFold { .. }) = (self.k, cfg.protocol) {
                    cfg.protocol = Protocol::KFold { k };
                }
            }
        }
        if self.serial {
            cfg.parallel = false;
        }
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate(_) => "simulate",
            Command::Train(_) => "train",
            Command::Eval(_) => "eval",
            Command::Sweep(_) => "sweep",
            Command::Infer(_) => "infer",
        }
    }
}

/// Config file, then flags, then the resolved seed.
pub fn resolve_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(out) = &cli.out {
        cfg.out_dir = out.clone();
    }
    match &cli.command {
        Command::Simulate(a) => {
            let s = &mut cfg.simulate;
            if let Some(n) = a.subjects {
                s.n_subjects = n;
            }
            if let Some(n) = a.activities {
                if !(1..=Activity::ALL.len()).contains(&n) {
                    return Err(Error::Config(format!("--activities {n} outside 1..=7")));
                }
                s.activities = Activity::first(n).to_vec();
            }
            if let Some(secs) = a.seconds {
                s.seconds_per_activity = secs;
            }
            if !a.environments.is_empty() {
                s.environments = a.environments.clone();
            }
            if let Some(d) = a.difficulty {
                s.difficulty = d;
            }
        }
        Command::Train(a) => a.pipeline.apply(&mut cfg),
        Command::Eval(a) => {
            a.pipeline.apply(&mut cfg);
            a.protocol.apply(&mut cfg);
        }
        Command::Sweep(a) => {
            a.pipeline.apply(&mut cfg);
            a.protocol.apply(&mut cfg);
            if let [axis, values] = a.sweep.as_slice() {
                cfg.sweep = Some(parse_sweep_axis(axis, values)?);
            }
        }
        Command::Infer(_) => {}
    }
    let env = std::env::var(SEED_ENV).ok();
    let seed = resolve_seed(cli.seed, cfg.seed, env.as_deref())?;
    Ok(cfg.with_seed(seed))
}

fn write_run_record(cfg: &RunConfig, command: &str) -> Result<()> {
    fs::create_dir_all(&cfg.out_dir).map_err(io_err(&cfg.out_dir))?;
    let record = RunRecord {
        tool_version: TOOL_VERSION.to_string(),
        command: command.to_string(),
        config: cfg.clone(),
    };
    write_json(&cfg.out_dir.join("run.json"), &record)
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Command::Infer(args) = &cli.command {
        return infer(args);
    }
    let cfg = resolve_config(cli)?;
    match &cli.command {
        Command::Simulate(_) => simulate(&cfg)?,
        Command::Train(_) => train(&cfg)?,
        Command::Eval(_) => eval(&cfg)?,
        Command::Sweep(_) => run_sweep(&cfg)?,
        Command::Infer(_) => unreachable!(),
    }
    write_run_record(&cfg, cli.command.name())
}

fn simulate(cfg: &RunConfig) -> Result<()> {
    let sessions = generate_dataset(&cfg.simulate)?;
    for s in &sessions {
        write_session(&cfg.out_dir, s)?;
    }
    let spec = &cfg.simulate;
    let names: Vec<&str> = spec.activities.iter().map(|a| a.name()).collect();
    println!(
        "wrote {} sessions to {}: {} subjects, activities [{}], {} s each, {} readings",
        sessions.len(),
        cfg.out_dir.display(),
        spec.n_subjects,
        names.join(", "),
        spec.seconds_per_activity,
        sessions.iter().map(|s| s.readings.len()).sum::<usize>()
    );
    Ok(())
}

fn train(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let recordings = load_recordings(&cfg.data, cfg.pipeline.rate_hz)?;
    let dataset = build_dataset(&recordings, &cfg.pipeline)?;
    let learner = TransformerLearner::new(&cfg.pipeline, &dataset);
    let all = Split {
        name: "all".into(),
        train: (0..dataset.windows.len()).collect(),
        test: Vec::new(),
    };
    let seed = cfg.pipeline.train.seed;
    let (trained, val) = fit_split(&dataset, &all, seed, cfg.pipeline.val_fraction, &learner)?;
    fs::create_dir_all(&cfg.out_dir).map_err(io_err(&cfg.out_dir))?;
    let model_path = cfg.out_dir.join("model.solstep");
    ModelFile::new(&cfg.pipeline, &dataset.classes, dataset.window.length, &trained).save(&model_path)?;
    write_history(&cfg.out_dir.join("history.csv"), &trained.history)?;
    let best = &trained.history[trained.best_epoch.saturating_sub(1).min(trained.history.len() - 1)];
    println!(
        "trained on {} windows ({} held out), {} epochs, best epoch {} (val accuracy {}), model written to {}",
        dataset.windows.len() - val,
        val,
        trained.history.len(),
        trained.best_epoch,
        best.val_accuracy.map_or("n/a".into(), |a| format!("{a:.4}")),
        model_path.display()
    );
    Ok(())
}

fn eval(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let recordings = load_recordings(&cfg.data, cfg.pipeline.rate_hz)?;
    let dataset = build_dataset(&recordings, &cfg.pipeline)?;
    let learner = TransformerLearner::new(&cfg.pipeline, &dataset);
    let report = run_protocol_with(&dataset, &cfg.pipeline, &cfg.plan(), &learner, cfg.parallel)?;
    write_eval_report(&cfg.out_dir, &report)?;
    for line in summary_csv(&report) {
        println!("{line}");
    }
    Ok(())
}

fn run_sweep(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let axis = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("no sweep axis: pass --sweep AXIS VALUES or set `sweep` in the config".into()))?;
    let recordings = load_recordings(&cfg.data, cfg.pipeline.rate_hz)?;
    let plan = cfg.plan();
    let table = sweep(&recordings, &cfg.pipeline, axis, |ds, c| {
        run_protocol_with(ds, c, &plan, &TransformerLearner::new(c, ds), cfg.parallel)
    })?;
    write_sweep(&cfg.out_dir, &table)?;
    for line in sweep_csv(&table) {
        println!("{line}");
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct Prediction<'a> {
    label: &'a str,
    probs: Vec<f64>,
    classes: Vec<&'a str>,
}

fn infer(args: &InferArgs) -> Result<()> {
    let model = ModelFile::load(&args.model)?;
    let h = &model.header;
    let bytes = fs::read(&args.window).map_err(io_err(&args.window))?;
    let window = parse_window_csv(&bytes).map_err(|e| e.in_file(&args.window))?;
    let wanted = h.pipeline.placement.placements();
    let cols = wanted
        .iter()
        .map(|p| {
            window.placements.iter().position(|q| q == p).ok_or_else(|| Error::Format {
                path: args.window.clone(),
                message: format!("model needs placement {p}, window has none"),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    if window.values.rows() != h.window_length {
        return Err(Error::Format {
            path: args.window.clone(),
            message: format!("{} rows, model expects windows of {}", window.values.rows(), h.window_length),
        });
    }
    let mut volts = window.values.select_columns(&cols);
    if args.raw {
        volts = filter_columns(&volts, &h.pipeline.filter_spec())?;
    }
    let features = feature_matrix(&volts, &h.pipeline.features)?;
    let (label, probs) = model.trained().predict(&features)?;
    let line = Prediction {
        label: h.classes[label].name(),
        probs,
        classes: h.classes.iter().map(|c| c.name()).collect(),
    };
    println!("{}", serde_json::to_string(&line).map_err(|e| Error::Config(e.to_string()))?);
    Ok(())
}
