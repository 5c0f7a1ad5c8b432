//! Command-line front end: configuration, subcommands and figures.

pub mod commands;
pub mod config;
pub mod viz;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use ufatd_core::Result;

pub use config::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "ufatd",
    version,
    about = "Row-anchor rail track detection with adaptive anchor groups"
)]
pub struct Cli {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one value, e.g. `--set model.rows=9`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute anchor groups from the training labels.
    GenAnchors,
    /// Render the synthetic dataset.
    Synth,
    /// Write the classification targets of every split.
    Encode,
    /// Train the model and save the best checkpoint.
    Train,
    /// Predict tracks for the evaluation split.
    Infer,
    /// Score predictions against the labels.
    Eval,
    /// Time single-image inference.
    Bench {
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
    },
    /// Draw overlays and the F1 curve.
    Viz {
        /// Number of overlay images.
        #[arg(long, default_value_t = 8)]
        limit: usize,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenAnchors => "gen-anchors",
            Command::Synth => "synth",
            Command::Encode => "encode",
            Command::Train => "train",
            Command::Infer => "infer",
            Command::Eval => "eval",
            Command::Bench { .. } => "bench",
            Command::Viz { .. } => "viz",
        }
    }
}

/// Loads the configuration, echoes it and runs the command.
pub fn run(cli: &Cli) -> Result<()> {
    let cfg = RunConfig::load(cli.config.as_deref(), &cli.set)?;
    println!("# ufatd {} seed={}", cli.command.name(), cfg.seed);
    println!("{}", cfg.to_toml());
    match &cli.command {
        Command::GenAnchors => commands::gen_anchors(&cfg).map(drop),
        Command::Synth => commands::synth(&cfg).map(drop),
        Command::Encode => commands::encode(&cfg).map(drop),
        Command::Train => commands::train(&cfg).map(drop),
        Command::Infer => commands::infer(&cfg).map(drop),
        Command::Eval => commands::eval(&cfg).map(drop),
        Command::Bench { iterations } => commands::bench(&cfg, *iterations).map(drop),
        Command::Viz { limit } => commands::viz(&cfg, *limit).map(drop),
    }
}
