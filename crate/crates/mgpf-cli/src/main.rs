//! `mgpf`: train observation models, filter multi-network sensor data into
//! posterior concentration maps, simulate synthetic datasets, run the IDW
//! baseline and evaluate predictions.
//!
//! Exit codes: 0 success, 2 validation error (config, schema, missing
//! files), 3 numerical failure.

mod commands;
mod config;
mod error;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::load_config;
use error::CliResult;

#[derive(Parser)]
#[command(name = "mgpf", version, about = "Multi-network Gaussian process filter pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit an observation model from collocated data or a published preset.
    TrainObs {
        #[arg(long)]
        config: PathBuf,
        /// Output directory for the model file.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Filter measurements into per-timepoint posterior prediction CSVs.
    Filter {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads over timepoints (0 = all cores).
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Generate a synthetic dataset (advection-diffusion or point-source).
    Simulate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Score prediction files against truth or a reference proxy.
    Evaluate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Per-network naive calibration interpolated by inverse distance
    /// weighting, averaged across networks.
    IdwBaseline {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Write a regular prediction grid file.
    MakeGrid {
        #[arg(long)]
        x_min: f64,
        #[arg(long)]
        y_min: f64,
        #[arg(long)]
        x_max: f64,
        #[arg(long)]
        y_max: f64,
        #[arg(long)]
        spacing: f64,
        #[arg(long)]
        out_file: PathBuf,
    },
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::TrainObs { config, out } => {
            let (cfg, _bytes) = load_config::<config::TrainObsConfig>(&config)?;
            std::fs::create_dir_all(&out)?;
            commands::train_obs::run(&config, &cfg, &out)?;
            Ok(())
        }
        Command::Filter { config, seed, workers, out } => {
            let (cfg, bytes) = load_config::<config::FilterConfig>(&config)?;
            commands::filter_cmd::run(&config, &cfg, &bytes, seed, workers, &out)
        }
        Command::Simulate { config, seed, out } => {
            let (cfg, bytes) = load_config::<config::SimulateConfig>(&config)?;
            commands::simulate::run(&cfg, &bytes, seed, &out)
        }
        Command::Evaluate { config, out } => {
            let (cfg, _bytes) = load_config::<config::EvaluateConfig>(&config)?;
            commands::evaluate::run(&config, &cfg, &out)
        }
        Command::IdwBaseline { config, out } => {
            let (cfg, bytes) = load_config::<config::IdwConfig>(&config)?;
            commands::idw::run(&config, &cfg, &bytes, &out)
        }
        Command::MakeGrid { x_min, y_min, x_max, y_max, spacing, out_file } => {
            commands::make_grid::run(x_min, y_min, x_max, y_max, spacing, &out_file)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
