//! `insight`: one binary driving the whole experiment pipeline.
//!
//! Every run is described by a TOML config file; the handful of flags
//! below override it. Artifacts (CSV, JSON, checkpoints) all embed the
//! config hash, the effective seed, and the tool version, and a rerun
//! with identical inputs reproduces them byte for byte except for
//! columns whose names end in `_seconds` or `_us`.
//!
//! On failure the process prints exactly one JSON object to stderr
//! (`{"error": "..."}`) and exits nonzero, so scripted sweeps can
//! harvest failures without scraping human-oriented text.

mod artifacts;
mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "insight", version, about = "Train, evaluate, and deploy \
neural surrogates for analog circuit sizing", max_term_width = 80)]
struct Cli {
    /// Experiment configuration file (TOML).
    #[arg(long, global = true, default_value = "insight.toml", value_name = "FILE")]
    config: PathBuf,
    /// Seed override; defaults to [training].seed from the config.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Output directory; wins over [report].out_dir and $INSIGHT_OUT_DIR.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Write files only; keep stdout silent.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample designs, label them with the circuit oracle, write a dataset file.
    Datagen {
        /// Number of rows to generate.
        #[arg(long)]
        n: usize,
        /// Dataset file name inside the output directory.
        #[arg(long, default_value = "dataset.csv", value_name = "FILE")]
        file: String,
    },
    /// Train the surrogate on a dataset; writes checkpoint.bin and history.csv.
    Train {
        /// Dataset file written by `datagen`.
        #[arg(long, value_name = "FILE")]
        data: PathBuf,
        /// Fine-tune from this checkpoint instead of training from scratch.
        #[arg(long, value_name = "FILE")]
        warm_start: Option<PathBuf>,
    },
    /// Score a checkpoint on a dataset; writes eval.csv.
    Eval {
        /// Surrogate or ensemble checkpoint.
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        /// Dataset file to score against.
        #[arg(long, value_name = "FILE")]
        data: PathBuf,
        /// Context fed to the decoder at each metric position.
        #[arg(long, value_enum, default_value_t = Mode::Teacher)]
        mode: Mode,
        /// Ground-truth metrics revealed to the model in rollout mode.
        #[arg(long, default_value_t = 0, value_name = "K")]
        prefix_len: usize,
    },
    /// Train surrogate and FC ensemble across topologies and dataset sizes; writes sweep.csv.
    Sweep {
        /// Comma-separated train:test sizes, e.g. 300:100,1500:500.
        #[arg(long, value_name = "LIST")]
        sizes: Option<String>,
    },
    /// Model-based sizing against the real oracle; writes sizing.json and sizing_log.jsonl.
    Size {
        /// Pre-trained surrogate checkpoint for the task's topology.
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        /// Pre-training dataset mixed into fine-tuning batches.
        #[arg(long, value_name = "FILE")]
        data: Option<PathBuf>,
    },
    /// Pure PPO on the oracle, every reset and step metered; writes baseline.json and baseline_log.jsonl.
    Baseline,
    /// Finite-difference check of every parameter block of the full model; writes gradcheck.csv.
    Gradcheck,
    /// Single-design vs amortized batch inference latency; writes bench.csv.
    Bench {
        /// Surrogate checkpoint to time.
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        /// Batch size for the amortized measurement; defaults to [report].bench_batch.
        #[arg(long, value_name = "N")]
        batch: Option<usize>,
    },
}

/// Evaluation context on the command line.
#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    /// Ground-truth previous metrics at every position.
    Teacher,
    /// The model's own predictions beyond the revealed prefix.
    Rollout,
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let line = serde_json::json!({ "error": format!("{err:#}") });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let loaded = config::load(&cli.config)
        .with_context(|| format!("loading config {}", cli.config.display()))?;
    let seed = cli.seed.unwrap_or(loaded.run.training.seed);
    let out = artifacts::resolve_out_dir(cli.out.as_deref(), loaded.run.report.out_dir.as_deref())?;
    let ctx = commands::Ctx {
        run: loaded.run,
        hash: loaded.hash,
        seed,
        out,
        quiet: cli.quiet,
    };
    match cli.command {
        Command::Datagen { n, file } => commands::datagen::run(&ctx, n, &file),
        Command::Train { data, warm_start } => {
            commands::train::run(&ctx, &data, warm_start.as_deref())
        }
        Command::Eval {
            checkpoint,
            data,
            mode,
            prefix_len,
        } => {
            let mode = match mode {
                Mode::Teacher => insight::train::EvalMode::TeacherForced,
                Mode::Rollout => insight::train::EvalMode::Rollout {
                    known_prefix: prefix_len,
                },
            };
            commands::eval::run(&ctx, &checkpoint, &data, mode)
        }
        Command::Sweep { sizes } => commands::sweep::run(&ctx, sizes.as_deref()),
        Command::Size { checkpoint, data } => {
            commands::size::run(&ctx, &checkpoint, data.as_deref())
        }
        Command::Baseline => commands::size::baseline(&ctx),
        Command::Gradcheck => commands::gradcheck::run(&ctx),
        Command::Bench { checkpoint, batch } => commands::bench::run(&ctx, &checkpoint, batch),
    }
}
