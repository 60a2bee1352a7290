//! `metalidar`: run bundled or custom lidar scenarios, build calibration
//! maps, analyze run outputs and execute the acceptance checks.
//!
//! Exit codes: 0 success, 1 I/O failure, 2 configuration error,
//! 3 acceptance or property check failure.

mod analyze;
mod calibrate;
mod manifest;
mod simulate;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use metalidar::config::RunConfig;
use metalidar::harness::{Scenario, TableRow};
use metalidar::verify;
use metalidar::Error;

#[derive(Parser)]
#[command(name = "metalidar", version, about = "Metasurface-enhanced lidar simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize waveforms, reconstruct frames and export them with a manifest.
    Simulate(simulate::SimulateArgs),
    /// Write the calibration curve, voltage maps and a coverage report.
    Calibrate(calibrate::CalibrateArgs),
    /// Post-process run outputs or evaluate analysis models.
    Analyze(analyze::AnalyzeArgs),
    /// Run the acceptance checks.
    Verify {
        /// Skip the two long scenario runs.
        #[arg(long)]
        quick: bool,
    },
}

/// Where the run configuration comes from.
#[derive(Args, Clone, Debug)]
pub struct ConfigSource {
    /// Configuration file (TOML).
    #[arg(long, conflicts_with = "scenario")]
    pub config: Option<PathBuf>,
    /// Bundled scenario: fig2, fig3, fig4 or fig5.
    #[arg(long)]
    pub scenario: Option<String>,
    /// Parameter set 1, 2 or 3 (fig5 only).
    #[arg(long, requires = "scenario")]
    pub row: Option<u8>,
    /// Overrides the configured seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the configured output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl ConfigSource {
    pub fn load(&self) -> metalidar::Result<RunConfig> {
        let mut c = match (&self.config, &self.scenario) {
            (Some(path), _) => RunConfig::load(path)?,
            (None, Some(name)) => {
                let row = self.row.map(TableRow::from_index).transpose()?;
                name.parse::<Scenario>()?.config(row)?
            }
            (None, None) => return Err(Error::Config("one of --config or --scenario is required".into())),
        };
        if let Some(seed) = self.seed {
            c.seed = Some(seed);
        }
        if let Some(out) = &self.out {
            c.output_dir = out.clone();
        }
        Ok(c)
    }
}

/// A command failure and the exit code it maps to.
pub enum Failure {
    Error(Error),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Error(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Error(e.into())
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate(a) => simulate::run(&a),
        Command::Calibrate(a) => calibrate::run(&a),
        Command::Analyze(a) => analyze::run(&a),
        Command::Verify { quick } => {
            let checks = verify::all(quick);
            for c in &checks {
                println!("{c}");
            }
            let passed = checks.iter().filter(|c| c.passed()).count();
            println!("{passed}/{} criteria passed", checks.len());
            if passed == checks.len() {
                Ok(())
            } else {
                Err(Failure::Check(format!("{} check(s) failed", checks.len() - passed)))
            }
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(Failure::Error(e)) => {
            eprintln!("error: {e}");
            match e.root() {
                Error::Io(_) => ExitCode::from(1),
                _ => ExitCode::from(2),
            }
        }
    }
}
