//! `slrt`: spectra, parameter sweeps, histograms and run reports for the
//! driven billiard.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numerical failure in a
//! command other than `sweep` (sweep failures become status rows), 1 I/O.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};

use config::{ConfigError, Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "slrt", version, about = "Linear and semi-linear heating rates of a vibrating billiard")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration; presets and defaults fill missing keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Replaces the configured seed list with this single seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, value_parser = ["as1", "as20"])]
    preset: Option<String>,
    /// Worker threads; defaults to the number of CPUs.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Level list (index, energy, dominant mode) of every sweep point.
    Spectrum,
    /// Band averages, network averages and estimates over (u, sigma, seed).
    Sweep,
    /// Log-histograms of the band with average markers.
    Histogram,
    /// JSON summary of the output directory.
    Report,
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    let overrides = Overrides { preset: cli.preset.clone(), seed: cli.seed };
    let config = RunConfig::load(cli.config.as_deref(), &overrides)?;
    std::fs::create_dir_all(&cli.out).with_context(|| format!("cannot create {}", cli.out.display()))?;
    let written = match cli.command {
        Command::Spectrum => commands::spectrum(&config, &cli.out, cli.jobs)?,
        Command::Sweep => commands::sweep(&config, &cli.out, cli.jobs)?,
        Command::Histogram => commands::histogram(&config, &cli.out, cli.jobs)?,
        Command::Report => vec![commands::report(&config, &cli.out)?],
    };
    let mut stdout = std::io::stdout().lock();
    for path in written {
        if let Err(e) = writeln!(stdout, "{}", path.display()) {
            // A closed pipe (`slrt sweep | head`) is not a failure of the run.
            if e.kind() != std::io::ErrorKind::BrokenPipe {
                return Err(e.into());
            }
            break;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<ConfigError>().is_some() {
                ExitCode::from(2)
            } else if e.chain().any(|c| c.downcast_ref::<slrt_core::Error>().is_some()) {
                ExitCode::from(3)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
