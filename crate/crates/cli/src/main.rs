//! `phonoprobe` command-line front end: train checkpoints, run the probe
//! suite, generate synthetic corpora and export embeddings.
//!
//! Exit codes: 0 success, 2 bad config or input, 3 inconsistent on-disk
//! state, 4 numerical failure.

mod config;
mod error;
mod run;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "phonoprobe",
    version,
    about = "Phoneme-level inflection models and MDL probes"
)]
struct Cli {
    /// Log level filter (error, warn, info, debug, trace).
    #[arg(long, global = true, default_value = "info")]
    log: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one checkpoint per (regime, seed) and write a manifest.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the probe suite over trained checkpoints.
    Probe {
        #[arg(long)]
        config: PathBuf,
        /// Also write embeddings.csv for the inflection checkpoints.
        #[arg(long)]
        embeddings: bool,
    },
    /// Write a synthetic corpus with planted rules.
    Synth {
        /// Comma-separated: devoicing, harmony, gemination.
        #[arg(long, default_value = "")]
        rules: String,
        #[arg(long)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Standard output when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write the shared embedding table of every checkpoint of one regime.
    ExportEmbeddings {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = "inflection")]
        regime: String,
        /// `<output_dir>/embeddings.csv` when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Train { config } => run::train(&config),
        Command::Probe { config, embeddings } => run::probe(&config, embeddings),
        Command::Synth {
            rules,
            size,
            seed,
            out,
        } => run::synth(&rules, size, seed, out.as_deref()),
        Command::ExportEmbeddings {
            config,
            regime,
            out,
        } => run::export_embeddings(&config, &regime, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::new().parse_filters(&cli.log).init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
