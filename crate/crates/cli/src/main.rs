mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use recfuse::FeatureModel;

use config::{resolve_seed, RunConfig, SEED_ENV};

#[derive(Parser, Debug)]
#[command(name = "recfuse", version, about = "Learned record fusion for clustered tables")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Opts,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Validate inputs and print a summary
    Ingest,
    /// Train per-attribute stagewise models
    Train,
    /// Fuse every cluster with a trained model
    Fuse,
    /// Write synthetic clusters built from labeled ones
    Augment,
    /// Run the seeded experiment protocol and write reports
    Evaluate,
    /// Generate the synthetic benchmark
    Bench,
}

/// Flags override the config file; each maps to the config key in brackets.
#[derive(Args, Debug)]
struct Opts {
    /// TOML run configuration
    #[arg(long, short, global = true)]
    config: Option<PathBuf>,

    /// Override any config key, e.g. `--set train.stages=5`; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,

    /// Global seed [seed]; also read from RECFUSE_SEED
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker threads (default: logical cores)
    #[arg(long, short, global = true)]
    jobs: Option<usize>,

    /// Clustered input table [input.data]
    #[arg(long, global = true)]
    data: Option<PathBuf>,

    /// Labels file of cluster_id,attribute,value rows [input.labels]
    #[arg(long, global = true)]
    labels: Option<PathBuf>,

    /// Denial constraints, one per line [input.constraints]
    #[arg(long, global = true)]
    constraints: Option<PathBuf>,

    /// Model directory written by `train` [input.model]
    #[arg(long, global = true)]
    model: Option<PathBuf>,

    /// Field delimiter [input.delimiter]
    #[arg(long, global = true)]
    delimiter: Option<String>,

    /// Output directory [output.dir]
    #[arg(long, short, global = true)]
    out: Option<PathBuf>,

    /// Disable a representation model, e.g. `co-occurrence`; repeatable [features.*]
    #[arg(long, value_name = "MODEL", global = true)]
    disable: Vec<FeatureModel>,

    /// Stages after the first [train.stages]
    #[arg(long, global = true)]
    stages: Option<usize>,

    /// Epochs per stage [train.epochs]
    #[arg(long, global = true)]
    epochs: Option<usize>,

    /// Augmentation ratio [augment.ratio]
    #[arg(long, global = true)]
    ratio: Option<f64>,

    /// Number of experiment seeds [experiment.seeds]
    #[arg(long, global = true)]
    seeds: Option<u64>,

    /// Add one ablation per representation model [experiment.ablate_models]
    #[arg(long, global = true)]
    ablate: bool,

    /// Add one ablation per context group [experiment.ablate_contexts]
    #[arg(long, global = true)]
    ablate_contexts: bool,

    /// Omit confidence columns from fused output [output.confidence]
    #[arg(long, global = true)]
    no_confidence: bool,
}

fn resolve(opts: &Opts) -> Result<RunConfig> {
    let mut cfg = RunConfig::load(opts.config.as_deref(), &opts.set)?;
    let env = std::env::var(SEED_ENV).ok();
    cfg.seed = resolve_seed(cfg.seed, env.as_deref(), opts.seed)?;
    let set = |slot: &mut Option<PathBuf>, v: &Option<PathBuf>| {
        if v.is_some() {
            slot.clone_from(v);
        }
    };
    set(&mut cfg.input.data, &opts.data);
    set(&mut cfg.input.labels, &opts.labels);
    set(&mut cfg.input.constraints, &opts.constraints);
    set(&mut cfg.input.model, &opts.model);
    set(&mut cfg.output.dir, &opts.out);
    if let Some(d) = &opts.delimiter {
        cfg.input.delimiter = if d == "\\t" || d == "tab" { "\t".into() } else { d.clone() };
    }
    cfg.features = cfg.features.clone().without(&opts.disable);
    if let Some(v) = opts.stages {
        cfg.train.stages = v;
    }
    if let Some(v) = opts.epochs {
        cfg.train.epochs = v;
    }
    if let Some(v) = opts.ratio {
        cfg.augment.ratio = v;
    }
    if let Some(v) = opts.seeds {
        cfg.experiment.seeds = v;
    }
    cfg.experiment.ablate_models |= opts.ablate;
    cfg.experiment.ablate_contexts |= opts.ablate_contexts;
    if opts.no_confidence {
        cfg.output.confidence = false;
    }
    cfg.delimiter()?;
    cfg.propagate_seed();
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli.opts)?;
    if let Some(n) = cli.opts.jobs {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Ingest => commands::ingest(&cfg),
        Command::Train => commands::train_cmd(&cfg),
        Command::Fuse => commands::fuse(&cfg),
        Command::Augment => commands::augment(&cfg),
        Command::Evaluate => commands::evaluate(&cfg),
        Command::Bench => commands::bench(&cfg),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
