//! Multi-task sparse regression CLI: fit, simulate, reproduce-table1,
//! diagnose, and bounds, all driven by a single JSON config file.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mtsparse::cli::{self, Overrides};

#[derive(Parser)]
#[command(name = "mtsparse", version, about = "Multi-task sparse regression toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// Path to the JSON config file.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides config out_dir).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Skip SVG plot emission.
    #[arg(long)]
    no_plots: bool,
    /// Omit the timestamp comment from SVG output (byte-stable plots).
    #[arg(long)]
    no_timestamp: bool,
    /// Worker threads for parallel sections (0 = default).
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a penalized estimator to a dataset.
    Fit(CommonArgs),
    /// Generate a simulated dataset and its ground truth.
    Simulate(CommonArgs),
    /// Rerun the estimation/prediction error table at a configured scale.
    ReproduceTable1(CommonArgs),
    /// KKT residuals, design constants, RE estimates for a dataset + fit.
    Diagnose(CommonArgs),
    /// Evaluate closed-form risk bounds from supplied constants.
    Bounds(CommonArgs),
}

fn run(common: &CommonArgs, f: fn(&std::path::Path, &Overrides) -> Result<(), cli::CliError>) -> ExitCode {
    if common.threads > 0 {
        // ignore failure if a global pool already exists
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(common.threads)
            .build_global();
    }
    let overrides = Overrides {
        seed: common.seed,
        out_dir: common.out.clone(),
        no_plots: common.no_plots,
        no_timestamp: common.no_timestamp,
    };
    match f(&common.config, &overrides) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match &cli.command {
        Command::Fit(c) => run(c, cli::cmd_fit),
        Command::Simulate(c) => run(c, cli::cmd_simulate),
        Command::ReproduceTable1(c) => run(c, cli::cmd_reproduce_table1),
        Command::Diagnose(c) => run(c, cli::cmd_diagnose),
        Command::Bounds(c) => run(c, cli::cmd_bounds),
    }
}
