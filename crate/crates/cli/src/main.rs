use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use lfm_cli::commands;
use lfm_cli::{ExperimentConfig, Result};

#[derive(Parser)]
#[command(name = "lfm", version, about = "Latent force model simulation, smoothing, segmentation and fitting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed recorded in the config.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate data from the configured model; also writes `<out>_truth`.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        out: PathBuf,
    },
    /// Exact smoothing of a data file; prints the log marginal likelihood.
    Smooth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Switching-model segmentation; also writes `<out>_switches`.
    Segment {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Reset-probability threshold for switch detection.
        #[arg(long)]
        threshold: Option<f64>,
    },
    /// Maximize the log marginal likelihood over the free parameters.
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Optional JSON report with the fitted config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Simulate { common, out } => {
            let config = ExperimentConfig::load(&common.config)?;
            let report = commands::simulate(&config, &out, common.seed)?;
            println!("seed: {}", report.seed);
            println!("data: {}", report.data_path.display());
            println!("truth: {}", report.truth_path.display());
            println!("resets: {}", report.simulation.switch_times.len());
        }
        Command::Smooth { common, data, out } => {
            let config = ExperimentConfig::load(&common.config)?;
            let report = commands::smooth(&config, &data, &out, common.seed)?;
            println!("loglik: {:.16e}", report.loglik);
        }
        Command::Segment { common, data, out, threshold } => {
            let config = ExperimentConfig::load(&common.config)?;
            let report = commands::segment(&config, &data, &out, threshold, common.seed)?;
            println!("approximate loglik: {:.16e}", report.loglik);
            println!("switches: {}", report.switch_times.len());
            for t in &report.switch_times {
                println!("  t = {t}");
            }
            println!("switch file: {}", report.switches_path.display());
        }
        Command::Fit { common, data, out } => {
            let config = ExperimentConfig::load(&common.config)?;
            let report = commands::fit(&config, &data, out.as_deref(), common.seed)?;
            println!("initial loglik: {:.16e}", report.initial_loglik);
            println!("final loglik: {:.16e}", report.final_loglik);
            println!("evaluations: {} (converged: {})", report.evaluations, report.converged);
            for p in &report.parameters {
                println!("{}: {:?} -> {:?}", p.name, p.initial, p.fitted);
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
