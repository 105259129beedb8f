use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use hardgraph::cli::{self, Command};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Sub {
    Spectrum,
    Bounds,
    Correct,
    Factorize,
    Probe,
    Train,
    Perturb,
}

impl From<Sub> for Command {
    fn from(s: Sub) -> Self {
        match s {
            Sub::Spectrum => Command::Spectrum,
            Sub::Bounds => Command::Bounds,
            Sub::Correct => Command::Correct,
            Sub::Factorize => Command::Factorize,
            Sub::Probe => Command::Probe,
            Sub::Train => Command::Train,
            Sub::Perturb => Command::Perturb,
        }
    }
}

/// Similarity-graph experiments on difficult-to-learn examples.
#[derive(Debug, Parser)]
#[command(name = "hardgraph", version)]
struct Args {
    #[arg(value_enum)]
    subcommand: Sub,
    /// Flat key = value config file.
    #[arg(long)]
    config: PathBuf,
    /// Output directory, created if absent.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the config's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Overwrite existing CSVs.
    #[arg(long)]
    force: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let command = Command::from(args.subcommand);
    match cli::run(command, &args.config, &args.out, args.seed, args.force) {
        Ok((report, written)) => {
            for line in &report.summary {
                println!("{line}");
            }
            for path in &written {
                println!("wrote {}", path.display());
            }
            if report.all_hold() {
                ExitCode::SUCCESS
            } else {
                for failure in &report.failures {
                    eprintln!("FAILED: {failure}");
                }
                ExitCode::from(1)
            }
        }
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}
