//! Command-line front end: `spectrum`, `limits`, `simulate`, `verify`, `report`.
//!
//! Exit codes: 0 success, 1 validation or configuration error, 2 numerical
//! failure, 3 verification FAIL, 64 usage error.

mod commands;
pub mod manifest;
mod render;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};
use superclt::simulate::{Scheme, DEFAULT_STEP};
use superclt::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_VERIFY_FAIL: i32 = 3;
pub const EXIT_USAGE: i32 = 64;

/// Environment override for the worker-thread count.
pub const THREADS_ENV: &str = "SUPERCLT_THREADS";

#[derive(Debug, Parser)]
#[command(name = "superclt", version = manifest::VERSION, about = "Spectral limits, simulation and CLT verification for finite-type superprocesses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Eigenvalues, multiplicities, classification and the Perron vector.
    Spectrum(SpectrumArgs),
    /// Closed-form limit covariances on a tau grid.
    Limits(LimitsArgs),
    /// Simulate replica paths and write them as CSV.
    Simulate(SimulateArgs),
    /// Monte Carlo verification of the limit theorem.
    Verify(VerifyArgs),
    /// Merge verification reports from independent runs.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
struct SpectrumArgs {
    #[arg(long)]
    config: PathBuf,
    /// Tolerance for the critical band `lambda_1 = 2 lambda_k`.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// How coefficient lists given on the command line are read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Basis {
    /// Coefficients in the m-orthonormal eigenbasis.
    Eigen,
    /// Pointwise values over the types, projected onto the eigenbasis.
    Values,
}

#[derive(Debug, Args)]
struct FunctionArgs {
    /// Function in the small-eigenvalue space (comma-separated).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    f: Option<Vec<f64>>,
    /// Function in the critical space.
    #[arg(long = "h-fn", value_delimiter = ',', allow_hyphen_values = true)]
    h_fn: Option<Vec<f64>>,
    /// Function in the large-eigenvalue space.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    g: Option<Vec<f64>>,
    #[arg(long, value_enum, default_value = "eigen")]
    basis: Basis,
}

#[derive(Debug, Args)]
struct LimitsArgs {
    #[arg(long)]
    config: PathBuf,
    #[command(flatten)]
    functions: FunctionArgs,
    #[arg(long, value_delimiter = ',', default_value = "0,1")]
    taus: Vec<f64>,
    /// Resolvent parameter; defaults to the smallest admissible integer.
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_parser = parse_scheme, default_value = "strang_exact")]
    scheme: Scheme,
    /// Time step.
    #[arg(long, default_value_t = DEFAULT_STEP)]
    h: f64,
    /// Final time; defaults to the last grid time.
    #[arg(long)]
    horizon: Option<f64>,
    /// Observation times (comma-separated); defaults to the horizon alone.
    #[arg(long, value_delimiter = ',')]
    grid: Vec<f64>,
    #[arg(long, default_value_t = 1000)]
    replicas: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct VerifyArgs {
    #[arg(long)]
    config: PathBuf,
    /// Base time; defaults to `ceil(6 / |lambda_1|)`, at least 25 with a critical part.
    #[arg(long)]
    t: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    taus: Option<Vec<f64>>,
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    replicas: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Pass band in standard errors.
    #[arg(long)]
    level: Option<f64>,
    /// Comma-separated subset, e.g. `sigma,beta,eta-zero`; empty runs all that apply.
    #[arg(long, default_value = "")]
    tests: String,
    #[command(flatten)]
    functions: FunctionArgs,
    #[arg(long, value_parser = parse_scheme, default_value = "strang_exact")]
    scheme: Scheme,
    /// Simulation time step.
    #[arg(long, default_value_t = DEFAULT_STEP)]
    step: f64,
    /// Earlier base time for the critical decay test.
    #[arg(long = "decay-t")]
    decay_t: Option<f64>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Output directories (or their `report.json`) of earlier `verify` runs.
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Why a run did not finish cleanly.
#[derive(Debug)]
enum Failure {
    Run(Error),
    VerifyFailed,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(Error::Io(e))
    }
}

pub fn exit_code_for(error: &Error) -> i32 {
    match error {
        Error::Numerical(_) | Error::SimulationDiverged(_) | Error::NoConvergence(_) => EXIT_NUMERICAL,
        _ => EXIT_INVALID,
    }
}

/// Parse `argv` (program name first), run the subcommand and return the exit code.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
        }
    };
    let result = match cli.command {
        Command::Spectrum(a) => commands::spectrum(a),
        Command::Limits(a) => commands::limits(a),
        Command::Simulate(a) => commands::simulate(a),
        Command::Verify(a) => commands::verify(a),
        Command::Report(a) => commands::report(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(Failure::VerifyFailed) => EXIT_VERIFY_FAIL,
        Err(Failure::Run(e)) => {
            eprintln!("superclt: {e}");
            exit_code_for(&e)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_64() {
        assert_eq!(dispatch(["superclt", "spectrum", "--bogus"]), EXIT_USAGE);
        assert_eq!(dispatch(["superclt", "frobnicate"]), EXIT_USAGE);
        assert_eq!(dispatch(["superclt", "simulate", "--config", "x.json", "--scheme", "rk4"]), EXIT_USAGE);
        assert_eq!(dispatch(["superclt", "--version"]), EXIT_OK);
    }

    #[test]
    fn error_classes_map_to_codes() {
        assert_eq!(exit_code_for(&Error::Config("x".into())), EXIT_INVALID);
        assert_eq!(exit_code_for(&Error::ManifestMismatch("x".into())), EXIT_INVALID);
        assert_eq!(exit_code_for(&Error::NoConvergence("x".into())), EXIT_NUMERICAL);
        assert_eq!(exit_code_for(&Error::SimulationDiverged("x".into())), EXIT_NUMERICAL);
    }
}
