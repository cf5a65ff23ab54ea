use std::path::PathBuf;
use std::process::ExitCode;

use accelflow_cli::commands::{self, Overrides};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "accelflow", version, about = "Run, compare and verify accelerated optimization flows")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Directory for all written artifacts (overrides `output.dir`).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Keep every k-th trajectory sample (overrides `output.stride`).
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    stride: Option<u64>,
    /// Replace the config's seed.
    #[arg(long, global = true)]
    seed_override: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one config and write its trajectory, summary and resolved config.
    Run { config: PathBuf },
    /// Run several configs on the same problem and tabulate time to tolerance.
    Compare {
        #[arg(required = true, num_args = 1..)]
        configs: Vec<PathBuf>,
    },
    /// Re-run the verification suite on a stored trajectory.
    Verify { trajectory: PathBuf, config: PathBuf },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let overrides = Overrides {
        out_dir: cli.out_dir,
        stride: cli.stride.map(|s| s as usize),
        seed: cli.seed_override,
    };
    let result = match &cli.command {
        Command::Run { config } => commands::run(config, &overrides),
        Command::Compare { configs } => commands::compare(configs, &overrides),
        Command::Verify { trajectory, config } => commands::verify(trajectory, config, &overrides),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
