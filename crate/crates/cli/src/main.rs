//! `deltasl`: spectra, first eigenvalue surfaces, reconstruction and the
//! bump-approximation study from the command line.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use crate::config::ConfigError;

#[derive(Parser)]
#[command(name = "deltasl", version, about = "First eigenvalue functions of Sturm-Liouville problems with a point interaction")]
struct Cli {
    /// JSON run configuration. Every section is optional.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads for surfaces and studies.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Number of uniform grid points (overrides `problem.grid_points`).
    #[arg(long, global = true)]
    grid: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// First eigenvalues and normalized eigenfunctions of the unperturbed problem.
    Spectrum,
    /// Tabulate lambda(t, r) on a grid.
    FefSurface,
    /// Rebuild the potential from a surface.
    Reconstruct {
        /// Surface file (CSV/JSON) or `sine-law:<lambda1>,<a>`.
        #[arg(long)]
        surface: Option<String>,
        /// Also run the validator and write validation.json.
        #[arg(long)]
        validate: bool,
    },
    /// Check a candidate first eigenvalue function.
    ValidateFef {
        /// Candidate file (CSV/JSON) or `sine-law:<lambda1>,<a>`.
        #[arg(long)]
        candidate: Option<String>,
    },
    /// Bump approximations of the point interaction.
    Weakstar,
}

fn run(cli: Cli) -> Result<()> {
    let (mut cfg, base) = config::load(cli.config.as_deref())?;
    if let Some(n) = cli.grid {
        cfg.problem.grid_points = n;
    }
    if cli.threads.is_some() {
        cfg.threads = cli.threads;
    }
    let mut resolved = cfg.resolve(&base)?;
    // Sources given on the command line are relative to the working directory.
    let cwd = std::env::current_dir()?;
    match &cli.command {
        Command::Reconstruct { surface: Some(s), .. } => {
            resolved.reconstruct_source = Some(config::surface_source(&cwd, "--surface", s)?.require("--surface")?.clone());
        }
        Command::ValidateFef { candidate: Some(c) } => {
            resolved.candidate = Some(config::surface_source(&cwd, "--candidate", c)?.require("--candidate")?.clone());
        }
        _ => {}
    }
    if let Some(out) = cli.out {
        resolved.output_dir = out;
    }
    if let Some(n) = resolved.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| ConfigError::new("threads", e.to_string()))?;
    }

    match cli.command {
        Command::Spectrum => commands::spectrum(&resolved),
        Command::FefSurface => commands::fef_surface(&resolved),
        Command::Reconstruct { validate, .. } => commands::reconstruct_cmd(&resolved, validate),
        Command::ValidateFef { .. } => commands::validate_cmd(&resolved),
        Command::Weakstar => commands::weakstar(&resolved),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (code, json) = output::classify(&e);
            eprintln!("{json}");
            ExitCode::from(code as u8)
        }
    }
}
