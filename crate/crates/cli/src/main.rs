//! `heatlocus` command line: geodesics, distances, cut loci, midpoint
//! classification and heat-kernel exponent predictions from a JSON config.
//!
//! Exit status: 0 success, 2 invalid config, 3 numerical failure,
//! 4 continuous family of minimizers.

mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "heatlocus", version, about = "Geodesics, cut loci and small-time heat asymptotics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config's sampling seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Adds a numerical fit of the midpoint integral to `predict`.
    #[arg(long, global = true)]
    verify: bool,
    /// Output file; a JSON sidecar, when produced, goes to `<out>.json`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Trajectory CSV with conjugate/cut sidecar.
    Geodesic,
    /// Distance and minimizing covectors.
    Distance,
    /// Cut and conjugate times over a fan of directions.
    Cutlocus,
    /// Midpoint profile and exponential-map singularity per minimizer.
    Classify,
    /// Heat-kernel exponent prediction.
    Predict,
    /// Two-term Laplace expansion against quadrature.
    LaplaceCheck,
}

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Core(heatlocus::Error),
    /// Explanatory report for a continuous family of minimizers.
    Continuum(Vec<u8>),
    Io(String),
}

impl From<heatlocus::Error> for CliError {
    fn from(e: heatlocus::Error) -> Self {
        use heatlocus::Error as E;
        match e {
            E::InvalidInput(m) | E::Catalog(m) | E::InvalidStructure(m) => CliError::Config(m),
            E::Expression { column, message } => CliError::Config(format!("expression error at column {column}: {message}")),
            E::Continuum(k) => CliError::Continuum(output::json(&serde_json::json!({ "error": "continuum", "roots_found": k }))),
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    fn status(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Core(_) | CliError::Io(_) => 3,
            CliError::Continuum(_) => 4,
        }
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("HEATLOCUS_THREADS") else { return Ok(()) };
    let n: usize = v.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| CliError::Config(format!("HEATLOCUS_THREADS must be a positive integer, got '{v}'")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| CliError::Io(e.to_string()))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    std::fs::write(path, bytes).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn run(cli: &Cli) -> Result<(), CliError> {
    configure_threads()?;
    let path = cli.config.as_ref().ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = config::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let out = match cli.command {
        Command::Geodesic => commands::geodesic(&cfg)?,
        Command::Distance => commands::distance(&cfg)?,
        Command::Cutlocus => commands::cutlocus(&cfg)?,
        Command::Classify => commands::classify(&cfg)?,
        Command::Predict => commands::predict(&cfg, cli.verify)?,
        Command::LaplaceCheck => commands::laplace_check(&cfg)?,
    };
    let target = cli.out.clone().or_else(|| cfg.output_path.as_ref().map(|p| cfg.base_dir.join(p)));
    match target {
        Some(p) => {
            write_file(&p, &out.main)?;
            if let Some(side) = &out.sidecar {
                let mut sp = p.into_os_string();
                sp.push(".json");
                write_file(Path::new(&sp), side)?;
            }
        }
        None => {
            std::io::stdout().write_all(&out.main).map_err(|e| CliError::Io(e.to_string()))?;
            if let Some(side) = &out.sidecar {
                std::io::stderr().write_all(side).map_err(|e| CliError::Io(e.to_string()))?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            match &e {
                CliError::Continuum(report) => {
                    let _ = std::io::stdout().write_all(report);
                    eprintln!("error: minimizers form a continuous family");
                }
                CliError::Config(m) => eprintln!("error: invalid config: {m}"),
                CliError::Core(err) => eprintln!("error: {err}"),
                CliError::Io(m) => eprintln!("error: {m}"),
            }
            ExitCode::from(e.status())
        }
    }
}
