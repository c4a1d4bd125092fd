mod commands;
mod config;
mod output;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{parse_kappa_list, parse_resolution, ConfigError, ExperimentConfig};

/// Only environment variable the harness reads.
const OUT_DIR_VAR: &str = "FREESURF_OUT_DIR";

#[derive(Parser, Debug)]
#[command(name = "freesurf", version, about = "Free-surface Euler experiments on the disk")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML experiment file; built-in defaults when absent.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Output directory, ahead of FREESURF_OUT_DIR and `output.dir`.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Comma-separated sound speeds (`inf` allowed). Replaces `kappa_list`
    /// for sweep and `kappa` otherwise.
    #[arg(long, global = true, value_name = "LIST")]
    kappa: Option<String>,
    /// Energy order r.
    #[arg(long, global = true, value_name = "R")]
    order: Option<usize>,
    /// Grid size, radial by angular, e.g. 33x64.
    #[arg(long, global = true, value_name = "NRxNT")]
    resolution: Option<String>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Command {
    /// Build compatible initial data and its iteration trace.
    BuildData,
    /// Evolve built data and record energies.
    Run,
    /// Compare compressible runs against the incompressible one.
    Sweep,
    /// Evaluate the elliptic and commutator monitors.
    Check,
    /// Write a gnuplot script for the tables in the output directory.
    Report,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::BuildData => "build-data",
            Command::Run => "run",
            Command::Sweep => "sweep",
            Command::Check => "check",
            Command::Report => "report",
        }
    }
}

#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numerical(String),
    Io(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 1,
            Failure::Numerical(_) => 2,
            Failure::Io(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Config(m) => write!(f, "configuration error: {m}"),
            Failure::Numerical(m) => write!(f, "numerical error: {m}"),
            Failure::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

impl From<freesurf::Error> for Failure {
    fn from(e: freesurf::Error) -> Self {
        Failure::Numerical(format!("{}: {e}", commands::error_kind(&e)))
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e.to_string())
    }
}

fn resolve(cli: &Cli) -> Result<(ExperimentConfig, PathBuf), ConfigError> {
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(list) = &cli.kappa {
        let kappas = parse_kappa_list(list)?;
        if cli.command == Command::Sweep {
            config.physics.kappa_list = kappas;
        } else if let [kappa] = kappas[..] {
            config.physics.kappa = kappa;
        } else {
            return Err(ConfigError::new("--kappa", format!("{} takes a single value", cli.command.name())));
        }
    }
    if let Some(order) = cli.order {
        config.time.order = order;
    }
    if let Some(res) = &cli.resolution {
        (config.grid.n_r, config.grid.n_theta) = parse_resolution(res)?;
    }
    let out = cli
        .out
        .clone()
        .or_else(|| std::env::var_os(OUT_DIR_VAR).filter(|v| !v.is_empty()).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(&config.output.dir));
    config.output.dir = out.display().to_string();
    config.validate().map_err(|mut e| {
        e.message = format!("{} (after command-line overrides)", e.message);
        e
    })?;
    Ok((config, out))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return if usage { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let outcome = resolve(&cli).map_err(Failure::from).and_then(|(config, out)| {
        let mut ctx = commands::Context::new(config, out, cli.command.name())?;
        let result = match cli.command {
            Command::BuildData => commands::build_data(&mut ctx),
            Command::Run => commands::run(&mut ctx),
            Command::Sweep => commands::sweep(&mut ctx),
            Command::Check => commands::check(&mut ctx),
            Command::Report => report::report(&mut ctx),
        };
        ctx.finish(result.as_ref().err())?;
        result
    });
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("freesurf: {e}");
            ExitCode::from(e.code())
        }
    }
}
