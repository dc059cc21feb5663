//! The `instyle` command line: one subcommand per pipeline stage.
//!
//! Each stage reads the artifacts of the previous one from the output root
//! and writes its own, so any stage can be rerun on its own.

pub mod config;
pub mod context;
pub mod error;
pub mod stages;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use crate::config::PipelineConfig;
use crate::context::Context;
use crate::stages::eval::EvalArgs;
use crate::stages::plot::PlotArgs;
use crate::stages::transfer::{parse_weights_arg, TransferArgs};

pub const OUTPUT_ENV: &str = "INSTYLE_OUTPUT";

#[derive(Debug, Parser)]
#[command(name = "instyle", version, about = "Instance-level sim2real style transfer pipeline")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// Pipeline configuration (TOML). Built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output root; overrides the environment and the config file.
    #[arg(long, global = true)]
    pub out_root: Option<PathBuf>,
    /// Global seed; replaces the one in the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads per stage; 1 is the reproducibility mode.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render the domain-randomized and domain-specific datasets.
    GenSynth,
    /// Simulate real captures of training and held-out scenes.
    Capture,
    /// Run the pose provider, filter views and render weak pairs.
    Pair,
    /// Train one style-transfer network per class.
    TrainTransfer {
        #[arg(long = "class")]
        classes: Vec<String>,
    },
    /// Adapt a synthetic-DS dataset.
    Transfer {
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// CLASS=WEIGHTS, repeatable.
        #[arg(long = "weights", value_parser = parse_weights_arg)]
        weights: Vec<(String, PathBuf)>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Score pose estimates (ADD pass rate and AUC).
    Eval {
        #[arg(long)]
        gt: Option<PathBuf>,
        #[arg(long)]
        pred: Option<PathBuf>,
        /// Object mesh (JSON), repeatable.
        #[arg(long = "model")]
        models: Vec<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        auc_max: Option<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Redraw accuracy-threshold curves from CSV.
    Plot {
        #[arg(long)]
        curves: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threshold: Option<f64>,
        #[arg(long)]
        auc_max: Option<f64>,
    },
    /// Run every stage in order.
    E2e,
}

/// Config file, then environment, then flags.
pub fn build_context(global: &GlobalArgs) -> Result<Context> {
    let mut config = match &global.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(seed) = global.seed {
        config.seed = seed;
    }
    let root = global
        .out_root
        .clone()
        .or_else(|| std::env::var_os(OUTPUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| config.paths.output.clone());
    let workers = global
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    Ok(Context::new(config, root, workers))
}

pub fn run(cli: Cli) -> Result<()> {
    let ctx = build_context(&cli.global)?;
    log::info!("output root {}, config {}", ctx.root.display(), ctx.hash);
    match cli.command {
        Command::GenSynth => stages::synth::gen_synth(&ctx),
        Command::Capture => stages::capture::capture(&ctx),
        Command::Pair => stages::pair::pair(&ctx),
        Command::TrainTransfer { classes } => stages::train::train_transfer(&ctx, &classes),
        Command::Transfer {
            manifest,
            weights,
            out,
            resolution,
        } => stages::transfer::transfer(
            &ctx,
            &TransferArgs {
                manifest,
                weights,
                out,
                resolution,
            },
        ),
        Command::Eval {
            gt,
            pred,
            models,
            threshold,
            auc_max,
            out,
        } => stages::eval::eval(
            &ctx,
            &EvalArgs {
                gt,
                pred,
                models,
                threshold,
                auc_max,
                out,
            },
        ),
        Command::Plot {
            curves,
            out,
            threshold,
            auc_max,
        } => stages::plot::plot(
            &ctx,
            &PlotArgs {
                curves,
                out,
                threshold,
                auc_max,
            },
        ),
        Command::E2e => e2e(&ctx),
    }
}

pub fn e2e(ctx: &Context) -> Result<()> {
    stages::synth::gen_synth(ctx)?;
    stages::capture::capture(ctx)?;
    stages::pair::pair(ctx)?;
    stages::train::train_transfer(ctx, &[])?;
    stages::transfer::transfer(ctx, &TransferArgs::default())?;
    stages::eval::eval(ctx, &EvalArgs::default())?;
    stages::plot::plot(ctx, &PlotArgs::default())
}
