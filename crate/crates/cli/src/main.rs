//! `fcalc`: parse, check, evaluate and simulate field-calculus programs.

mod commands;
mod envfile;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "fcalc", version, about = "Field calculus toolchain")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse a program and print it back.
    Parse(Source),
    /// Print a program with every functional parameter expanded away.
    Expand(Source),
    /// Print the kind of main and of each function instance.
    Kindcheck(Source),
    /// Classify every rep of a program and print the report.
    Check(CheckArgs),
    /// Fire one device against a value-tree environment file.
    Eval(EvalArgs),
    /// Run a program over a scenario and write the trace as CSV.
    Simulate(SimulateArgs),
    /// Compare block variants under one perturbation mode.
    Compare(CompareArgs),
    /// Run a case study.
    Casestudy(CaseStudyArgs),
    /// Print minimal path weights from the source devices of a scenario.
    Oracle(OracleArgs),
}

#[derive(Args, Debug)]
struct Source {
    file: PathBuf,
    /// Prepend the building-block library.
    #[arg(long)]
    library: bool,
}

#[derive(Args, Debug)]
struct CheckArgs {
    #[command(flatten)]
    source: Source,
    /// Property annotations, one per line.
    #[arg(long)]
    registry: Option<PathBuf>,
    /// Print the report as CSV.
    #[arg(long)]
    csv: bool,
    /// Also run the empirical battery on this scenario.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 400)]
    rounds_max: usize,
    #[arg(long, default_value_t = 1e-9)]
    tolerance: f64,
    #[arg(long, default_value_t = 3)]
    inits: usize,
    #[arg(long, default_value_t = 3)]
    schedules: usize,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long)]
    device: u32,
    /// Lines of `label: tree`, one per neighbour.
    #[arg(long)]
    env: Option<PathBuf>,
    /// Reading of snsNum(); defaults to the device id.
    #[arg(long)]
    num: Option<f64>,
    /// `name=value`, read by `name()`.
    #[arg(long = "sensor", value_name = "NAME=VALUE")]
    sensors: Vec<String>,
    /// `label=metres`, read by nbrRange.
    #[arg(long = "range", value_name = "LABEL=METRES")]
    ranges: Vec<String>,
    #[arg(long, default_value_t = 1.0)]
    interval: f64,
    /// Print the tree one node per line.
    #[arg(long)]
    indented: bool,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Staleness horizon in seconds.
    #[arg(long)]
    horizon: Option<f64>,
    /// Stop after this many rounds of the longest period.
    #[arg(long)]
    rounds_max: Option<usize>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// G, C or T.
    #[arg(long)]
    family: String,
    /// small-spatial, large-spatial, small-temporal or large-temporal.
    #[arg(long)]
    mode: String,
    /// First seed.
    #[arg(long)]
    seed: u64,
    /// Number of consecutive seeds.
    #[arg(long, default_value_t = 1)]
    runs: u64,
    /// Comma-separated variant names.
    #[arg(long, value_delimiter = ',')]
    variants: Vec<String>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CaseStudyArgs {
    /// crowd or evacuation.
    study: String,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    runs: u64,
    /// Comma-separated block choices such as `G'+C+T`.
    #[arg(long, value_delimiter = ',')]
    variants: Vec<String>,
    #[arg(long)]
    duration: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    manifest: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct OracleArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Boolean sensor marking sources.
    #[arg(long, default_value = "source")]
    source: String,
    /// `range` sums distances, `hops` counts edges.
    #[arg(long, default_value = "range")]
    metric: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failures, split by who is to blame.
#[derive(Debug)]
pub enum CliError {
    /// Bad input: exit status 1.
    User(String),
    /// A fault of the tool: exit status 2.
    Internal(String),
    /// Ran to completion with a negative verdict: exit status 1, report already printed.
    Rejected,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Rejected) => ExitCode::from(1),
        Err(CliError::User(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(CliError::Internal(m)) => {
            eprintln!("internal error: {m}");
            ExitCode::from(2)
        }
    }
}
