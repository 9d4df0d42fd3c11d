use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use clipbias_cli::{run, CommandName, Settings};

/// Clipped SGD / DP-SGD experiments with exact clipping-bias diagnostics.
#[derive(Debug, Parser)]
#[command(name = "clipbias", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON file of settings; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (default: runs/<command>).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(flatten)]
    settings: Settings,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Noisy clipped SGD on Example 1, Example 2 or the mixture dataset.
    Examples,
    /// Clipped descent under Gaussian perturbation across d and k.
    Table1,
    /// Symmetric-noise lower bound against the expectation in 1-D.
    Table2,
    /// Per-step descent ledger plus symmetry probes.
    Diagnose,
    /// Noise scale and regime check for a privacy budget.
    Calibrate,
    /// Bias and transport bound for two finite distributions.
    Wasserstein,
}

impl Command {
    fn name(&self) -> CommandName {
        match self {
            Command::Examples => CommandName::Examples,
            Command::Table1 => CommandName::Table1,
            Command::Table2 => CommandName::Table2,
            Command::Diagnose => CommandName::Diagnose,
            Command::Calibrate => CommandName::Calibrate,
            Command::Wasserstein => CommandName::Wasserstein,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cmd = cli.command.name();
    let settings = match &cli.config {
        Some(path) => match Settings::load(path) {
            Ok(file) => file.overlay(&cli.settings),
            Err(e) => {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
        },
        None => cli.settings.clone(),
    };
    let out = cli.out.clone().unwrap_or_else(|| PathBuf::from("runs").join(cmd.as_str()));
    match run(cmd, &settings, &out) {
        Ok(outcome) => {
            for check in &outcome.checks {
                println!("{check}");
            }
            println!("wrote {} files to {}", outcome.manifest.len() + 1, outcome.out_dir.display());
            if outcome.all_passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
