use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use contdef::harness::{self, OutputFormat, ScenarioConfig, Series, TrajectoryLog};
use contdef::Error;

/// Resilient continuum-deformation coordination simulator.
#[derive(Debug, Parser)]
#[command(name = "contdef", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write its trajectory log.
    Simulate {
        scenario: PathBuf,
        /// Output directory.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
    },
    /// Build the reference network and report the safety bounds.
    Check { scenario: PathBuf },
    /// Print a data series from a JSON log as CSV.
    Analyze {
        /// `log.json`, or a directory containing one.
        log: PathBuf,
        #[arg(long, value_parser = ["positions", "sigma", "weight-bounds", "cem-paths"])]
        series: String,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Format {
    Csv,
    Json,
}

/// Failures mapped onto the documented exit codes.
enum Failure {
    Scenario(String),
    Numeric(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Numeric { .. } => Failure::Numeric(e.to_string()),
            other => Failure::Scenario(other.to_string()),
        }
    }
}

fn simulate(path: &Path, out: &Path, format: Format) -> Result<(), Failure> {
    let cfg = ScenarioConfig::from_path(path)?;
    let log = harness::run_scenario(&cfg)?;
    let format = match format {
        Format::Csv => OutputFormat::Csv,
        Format::Json => OutputFormat::Json,
    };
    for e in &log.events {
        println!("{:>10.3}  {:<24} {}", e.time, e.kind(), e.payload());
    }
    for p in log.write(out, format)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

fn check(path: &Path) -> Result<(), Failure> {
    let cfg = ScenarioConfig::from_path(path)?;
    let report = harness::check_scenario(&cfg)?;
    println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
    if !report.safe {
        log::warn!(
            "smallest deformation singular value {} at t = {} is below the collision threshold {}",
            report.sigma_min,
            report.sigma_min_time,
            report.threshold
        );
    }
    Ok(())
}

fn analyze(path: &Path, series: &str) -> Result<(), Failure> {
    let series: Series = series.parse()?;
    let file = if path.is_dir() { path.join("log.json") } else { path.to_path_buf() };
    let log = TrajectoryLog::read_json(&file)?;
    harness::write_series(&log, series, std::io::stdout().lock())?;
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate { scenario, out, format } => simulate(scenario, out, *format),
        Command::Check { scenario } => check(scenario),
        Command::Analyze { log, series } => analyze(log, series),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Scenario(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numeric(msg)) => {
            eprintln!("numeric failure: {msg}");
            ExitCode::from(3)
        }
    }
}
