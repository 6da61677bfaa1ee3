use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rfs_core::harness::{self, ConfigMap, ExperimentConfig, ExperimentKind};
use rfs_core::RfsError;

/// Random-feature spectral regularization experiments.
#[derive(Parser)]
#[command(name = "rfs", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Test error over a grid of feature counts and stopping times.
    Sweep(RunArgs),
    /// Learning curves under the theoretical schedule with log-log slope fits.
    Rates(RunArgs),
    /// Filter constants, feature/kernel equivalence and Monte-Carlo checks.
    Verify(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// INI-style config with `[section]` headers and `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Detail CSV path; companion files are written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (0 uses every core).
    #[arg(long)]
    threads: Option<usize>,
    /// Base seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Any config key as `section.key=value`; repeatable, applied last.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    overrides: Vec<String>,
}

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_GATED: u8 = 3;

fn load_config(kind: ExperimentKind, args: &RunArgs) -> rfs_core::Result<ExperimentConfig> {
    let mut map = match &args.config {
        Some(path) => ConfigMap::load(path)?,
        None => ConfigMap::default(),
    };
    if let Some(out) = &args.out {
        map.set("experiment.out", &out.to_string_lossy());
    }
    if let Some(threads) = args.threads {
        map.set("experiment.threads", &threads.to_string());
    }
    if let Some(seed) = args.seed {
        map.set("experiment.seed", &seed.to_string());
    }
    for assignment in &args.overrides {
        map.apply_override(assignment)?;
    }
    ExperimentConfig::from_map(&map, Some(kind))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (kind, args) = match &cli.command {
        Command::Sweep(a) => (ExperimentKind::Sweep, a),
        Command::Rates(a) => (ExperimentKind::Rates, a),
        Command::Verify(a) => (ExperimentKind::Verify, a),
    };
    let config = match load_config(kind, args) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("rfs: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    match harness::run(&config) {
        Ok(summary) => {
            for line in &summary.lines {
                println!("{line}");
            }
            for file in &summary.files {
                println!("wrote {}", file.display());
            }
            if summary.gated_failures > 0 {
                ExitCode::from(EXIT_GATED)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e @ (RfsError::Config(_) | RfsError::SampleSizeTooSmall { .. })) => {
            eprintln!("rfs: {e}");
            ExitCode::from(EXIT_CONFIG)
        }
        Err(e) => {
            eprintln!("rfs: {e}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}
