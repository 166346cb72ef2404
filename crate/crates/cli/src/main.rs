// SPDX-License-Identifier: Apache-2.0

//! `cpuf`: simulate, enroll, authenticate and attack memory-based
//! combination PUF devices.
//!
//! Exit codes: 0 success, 1 other failure, 2 configuration error,
//! 3 missing artifact, 4 failed `--verify` assertion.

mod artifacts;
mod commands;
mod config;
mod error;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use artifacts::Layout;
use commands::Context;
use config::Config;
use error::{CliError, CliResult};

#[derive(Parser, Debug)]
#[command(name = "cpuf", version, about = "Memory-based combination PUF simulator and authenticator")]
struct Cli {
    /// Flat key=value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for databases, CSVs and manifests.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Master seed (overrides `seed` from config and environment).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Response-size scale factor relative to the full-scale Size_D.
    #[arg(long, global = true)]
    scale: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write the device table.
    Forge,
    /// Enroll every device and write one CRP database per device.
    Enroll,
    /// Authenticate every device against every database at each temperature.
    Auth {
        /// Exit with status 4 unless TPR is 1 and FPR is 0.
        #[arg(long)]
        verify: bool,
    },
    /// Characterize devices and store the chosen match policy in each database.
    Characterize,
    /// Re-enroll with a new SRAM address and/or refresh pause; old databases are retired.
    Reconfigure {
        #[arg(long)]
        addr_s: Option<u64>,
        #[arg(long)]
        refresh_pause: Option<f64>,
    },
    /// Counterfeit DRAM swap against one device's database.
    Attack {
        #[arg(long, default_value_t = 0)]
        device: u64,
        /// Exit with status 4 if the database policy accepts any counterfeit.
        #[arg(long)]
        verify: bool,
    },
    /// Uniqueness, DRAM-only baseline, aging and CRP-count report.
    Report,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Forge => "forge",
            Command::Enroll => "enroll",
            Command::Auth { .. } => "auth",
            Command::Characterize => "characterize",
            Command::Reconfigure { .. } => "reconfigure",
            Command::Attack { .. } => "attack",
            Command::Report => "report",
        }
    }
}

fn load_config(cli: &Cli) -> CliResult<Config> {
    let text = match &cli.config {
        Some(p) => Some(std::fs::read_to_string(p).map_err(|e| {
            if e.kind() == std::io::ErrorKind::NotFound {
                CliError::MissingArtifact(format!("config file {}", p.display()))
            } else {
                CliError::Io { context: format!("reading {}", p.display()), source: e }
            }
        })?),
        None => None,
    };
    let path = cli.config.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
    let mut overrides = Vec::new();
    if let Some(s) = cli.seed {
        overrides.push(("seed", s.to_string()));
    }
    if let Some(s) = cli.scale {
        overrides.push(("scale", s.to_string()));
    }
    Config::resolve(text.as_deref().map(|t| (path.as_str(), t)), |k| std::env::var(k).ok(), &overrides)
}

fn run(cli: Cli) -> CliResult<()> {
    let config = load_config(&cli)?;
    let ctx = Context::new(config, Layout::new(&cli.out));
    let details = match &cli.command {
        Command::Forge => commands::forge(&ctx)?,
        Command::Enroll => commands::enroll(&ctx)?,
        Command::Auth { verify } => commands::auth(&ctx, *verify)?,
        Command::Characterize => commands::characterize_cmd(&ctx)?,
        Command::Reconfigure { addr_s, refresh_pause } => commands::reconfigure_cmd(&ctx, *addr_s, *refresh_pause)?,
        Command::Attack { device, verify } => commands::attack(&ctx, *device, *verify)?,
        Command::Report => commands::report(&ctx)?,
    };
    let manifest = ctx.layout.write_manifest(cli.command.name(), &ctx.config, details)?;
    log::info!("manifest {}", manifest.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cpuf: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
