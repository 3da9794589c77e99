//! `rooftherm` — convert aerial LWIR radiance rasters into rooftop kinetic
//! temperature maps.
//!
//! Every command is driven by a JSON run config (`--config`) with
//! `--set key=value` overrides; reruns with identical config, inputs, and
//! seed produce byte-identical outputs. Exit codes: 0 success, 1 input or
//! configuration error, 2 numerical-domain error (out-of-range pixels beyond
//! the configured fraction).

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{Ctx, NumericalDomainError};
use config::RunConfig;

#[derive(Parser)]
#[command(name = "rooftherm", version, about = "Aerial thermal-imagery calibration toolkit")]
struct Cli {
    /// Run configuration JSON.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides the config's output_dir).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Noise seed override for simulation.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for per-pixel processing.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Config override, e.g. --set sample_window=1 or --set planck.t_step_k=0.05.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compute band emissivities for every spectral curve in spectra_dir.
    Emissivity,
    /// Fit per-instrument normalization from calibration-bath readings.
    CalibrateInstruments,
    /// Empirical Line Calibration.
    Elc {
        #[command(subcommand)]
        action: ElcAction,
    },
    /// Rooftop temperatures and per-building reports from corrected rasters.
    Rooftemp,
    /// Compare predicted roof temperatures against field readings.
    Validate,
    /// Per-building temperature deltas across overlapping images.
    Overlap,
    /// Generate a synthetic dataset from a scene spec.
    Simulate {
        /// Scene description JSON.
        #[arg(long)]
        scene: PathBuf,
    },
}

#[derive(Subcommand)]
enum ElcAction {
    /// Build calibration pairs and fit the gain/offset model.
    Fit,
    /// Apply a fitted model to every raster in rasters_dir.
    Apply,
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let mut config = RunConfig::load(cli.config.as_deref(), &cli.set)?;
    if let Some(out) = cli.out {
        config.output_dir = out;
    }
    if let Some(seed) = cli.seed {
        config.seed = Some(seed);
    }
    if let Some(threads) = cli.threads.or(config.threads) {
        if let Err(e) = rooftherm::exec::configure_threads(threads) {
            eprintln!("warning: could not configure thread pool: {e}");
        }
    }
    let seed = config.seed;
    let ctx = Ctx { config };
    match cli.command {
        Command::Emissivity => commands::cmd_emissivity(&ctx),
        Command::CalibrateInstruments => commands::cmd_calibrate_instruments(&ctx),
        Command::Elc { action: ElcAction::Fit } => commands::cmd_elc_fit(&ctx),
        Command::Elc { action: ElcAction::Apply } => commands::cmd_elc_apply(&ctx),
        Command::Rooftemp => commands::cmd_rooftemp(&ctx),
        Command::Validate => commands::cmd_validate(&ctx),
        Command::Overlap => commands::cmd_overlap(&ctx),
        Command::Simulate { scene } => commands::cmd_simulate(&ctx, &scene, seed),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<NumericalDomainError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
