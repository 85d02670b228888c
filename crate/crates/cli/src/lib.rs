//! Command-line front end: dataset descriptors, training, SER evaluation
//! and runtime benchmarks, all driven by one JSON config file.
//!
//! Exit codes: 0 success, 2 configuration error, 3 runtime/numerics error.

pub mod commands;
pub mod config;

use std::fmt;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl From<admm_mimo::Error> for CliError {
    fn from(e: admm_mimo::Error) -> CliError {
        CliError::Runtime(e.to_string())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "admm-mimo",
    version,
    about = "Massive-MIMO detection toolkit: classical and learned ADMM detectors with a Monte-Carlo harness"
)]
pub struct Cli {
    /// Cap the worker pool at N threads.
    #[arg(long, global = true, value_name = "N")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the dataset descriptor implied by a config file.
    GenData {
        config: PathBuf,
        #[arg(long, default_value = "dataset.json")]
        out: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the penalty parameters end-to-end; writes the model JSON and a
    /// per-epoch loss CSV.
    TrainPsnet {
        config: PathBuf,
        #[arg(long, default_value = "psnet_model.json")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train the network detector layer-wise on top of trained penalties;
    /// writes the model JSON and a per-layer loss CSV.
    TrainHnet {
        config: PathBuf,
        /// Trained psnet model supplying the frozen penalty parameters.
        #[arg(long)]
        penalties: PathBuf,
        #[arg(long, default_value = "hnet_model.json")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Monte-Carlo SER sweep over the config's SNR grid.
    Eval {
        config: PathBuf,
        /// zf | mmse | psadmm | psnet | hnet
        #[arg(long)]
        detector: String,
        /// Model file (required for psnet/hnet).
        #[arg(long)]
        model: Option<PathBuf>,
        /// Comma-separated layer counts for a layer sweep, e.g. 1,5,10,20.
        #[arg(long)]
        layers: Option<String>,
        /// Also write an SVG plot next to the CSV.
        #[arg(long)]
        plot: bool,
        #[arg(long, default_value = "results.csv")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Wall-clock runtime comparison on identical instance streams.
    Bench {
        config: PathBuf,
        /// Comma-separated detectors, e.g. psadmm,hnet.
        #[arg(long)]
        detectors: String,
        #[arg(long)]
        psnet_model: Option<PathBuf>,
        #[arg(long)]
        hnet_model: Option<PathBuf>,
        /// Untimed detections before measurement starts.
        #[arg(long, default_value_t = 10)]
        warmup: usize,
        #[arg(long, default_value = "bench.csv")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
}

pub fn run(cli: Cli) -> i32 {
    if let Some(n) = cli.threads {
        // Ignore the error if a pool already exists (repeat calls in tests).
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let result = match &cli.command {
        Command::GenData { config, out, seed } => commands::gen_data(config, out, *seed),
        Command::TrainPsnet { config, out, seed } => {
            commands::train_psnet_cmd(config, out, *seed)
        }
        Command::TrainHnet {
            config,
            penalties,
            out,
            seed,
        } => commands::train_hnet_cmd(config, penalties, out, *seed),
        Command::Eval {
            config,
            detector,
            model,
            layers,
            plot,
            out,
            seed,
        } => commands::eval(
            config,
            detector,
            model.as_deref(),
            layers.as_deref(),
            *plot,
            out,
            *seed,
        ),
        Command::Bench {
            config,
            detectors,
            psnet_model,
            hnet_model,
            warmup,
            out,
            seed,
        } => commands::bench(
            config,
            detectors,
            psnet_model.as_deref(),
            hnet_model.as_deref(),
            *warmup,
            out,
            *seed,
        ),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("{e}");
            e.exit_code()
        }
    }
}
