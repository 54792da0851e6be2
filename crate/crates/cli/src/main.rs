//! `distlab`: runs the distortion-lab checks for a preset and writes a report.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod options;
mod presets;
mod report;

use std::collections::BTreeMap;
use std::fmt;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::Value;

use options::{Format, Options};
use report::{Report, Runner};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numeric(String),
    Internal(String),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Numeric(m) => write!(f, "numeric error: {m}"),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

macro_rules! numeric_error {
    ($($t:ty),*) => {$(
        impl From<$t> for CliError {
            fn from(e: $t) -> Self {
                CliError::Numeric(e.to_string())
            }
        }
    )*};
}

numeric_error!(
    distortion_lab::fields::CheckError,
    distortion_lab::quadrature::QuadError,
    distortion_lab::lemmas::LemmaError,
    distortion_lab::family::FamilyError
);

#[derive(Parser, Debug)]
#[command(
    name = "distlab",
    version,
    about = "Numerical checks for maps with |Df|^2 <= K J + Sigma"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    opts: Options,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Inclusion residuals, derivatives, interface gaps and blow-up witnesses.
    Verify,
    /// Integrability claims of the preset, classified over shells.
    Norms,
    /// Sweep an exponent grid and locate the convergence boundary.
    Scan,
    /// Modulus of continuity at the origin and its log exponent.
    Modulus,
    /// Randomized and closed-form suites for the standalone inequalities.
    Lemmas,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::Norms => "norms",
            Command::Scan => "scan",
            Command::Modulus => "modulus",
            Command::Lemmas => "lemmas",
        }
    }
}

fn execute(command: Command, opts: &Options) -> Result<Report, CliError> {
    let mut runner = Runner::new();
    let mut settings: BTreeMap<String, Value> = BTreeMap::new();
    let (preset, parameters) = if let Command::Lemmas = command {
        commands::lemmas(opts, &mut runner, &mut settings)?;
        (None, BTreeMap::new())
    } else {
        let resolved = presets::resolve(opts)?;
        match command {
            Command::Verify => commands::verify(&resolved, opts, &mut runner, &mut settings)?,
            Command::Norms => commands::norms(&resolved, opts, &mut runner, &mut settings)?,
            Command::Scan => commands::scan(&resolved, opts, &mut runner, &mut settings)?,
            Command::Modulus => commands::modulus(&resolved, opts, &mut runner, &mut settings)?,
            Command::Lemmas => unreachable!(),
        }
        (
            Some(resolved.preset.name().to_string()),
            resolved.parameters,
        )
    };
    Ok(runner.finish(command.name(), preset, parameters, settings, opts.seed()))
}

fn run(cli: Cli) -> Result<bool, CliError> {
    let mut opts = cli.opts;
    if let Some(path) = opts.config.clone() {
        opts.apply_config_file(&path)?;
    }
    let report = execute(cli.command, &opts)?;
    let text = match opts.format.unwrap_or(Format::Json) {
        Format::Json => report.to_json(),
        Format::Csv => report.to_csv()?,
        Format::Table => report.to_table(),
    };
    match &opts.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Internal(format!("cannot write {}: {e}", path.display())))?,
        None => print!("{text}"),
    }
    Ok(!report.any_failed())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("distlab: {e}");
            ExitCode::from(match e {
                CliError::Usage(_) => 2,
                CliError::Numeric(_) | CliError::Internal(_) => 3,
            })
        }
    }
}
