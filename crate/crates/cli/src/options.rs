//! Command-line flags and the key-value config file that backs them.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
    Table,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        <Format as ValueEnum>::from_str(s, true)
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct Options {
    /// Map family preset, e.g. cusp-lp-duality or power-log.
    #[arg(long, global = true)]
    pub preset: Option<String>,
    #[arg(long, global = true)]
    pub p: Option<f64>,
    #[arg(long, global = true)]
    pub q: Option<f64>,
    #[arg(long, global = true)]
    pub s: Option<f64>,
    #[arg(long, global = true)]
    pub mu: Option<f64>,
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    #[arg(long, global = true)]
    pub nu: Option<f64>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Sample count for pointwise checks and randomized suites.
    #[arg(long, global = true)]
    pub samples: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Number of shells in convergence profiles.
    #[arg(long, global = true)]
    pub depth: Option<usize>,
    /// Ratio between consecutive shell radii.
    #[arg(long, global = true)]
    pub ratio: Option<f64>,
    /// Angular cells per shell.
    #[arg(long, global = true)]
    pub cells: Option<usize>,
    /// Gauss-Legendre order per cell direction.
    #[arg(long, global = true)]
    pub order: Option<usize>,
    /// Exponents for `scan`, comma separated.
    #[arg(long, global = true, value_delimiter = ',')]
    pub grid: Option<Vec<f64>>,
    /// Classify K in L^p and Sigma/K in L^q over the grid, without predictions.
    #[arg(long, global = true)]
    pub explore: bool,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<Format>,
    /// File of `key = value` lines using the flag names; flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value
        .parse()
        .map_err(|_| CliError::Usage(format!("config: bad value {value:?} for {key}")))
}

fn fill<T: FromStr>(slot: &mut Option<T>, key: &str, value: &str) -> Result<(), CliError> {
    if slot.is_none() {
        *slot = Some(parse(key, value)?);
    }
    Ok(())
}

impl Options {
    pub fn apply_config_file(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        self.apply_config(&text)
    }

    pub fn apply_config(&mut self, text: &str) -> Result<(), CliError> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::Usage(format!("config line {}: expected key = value", n + 1))
            })?;
            let key = key.trim().trim_start_matches("--").replace('_', "-");
            let value = value.trim();
            match key.as_str() {
                "preset" => fill(&mut self.preset, &key, value)?,
                "p" => fill(&mut self.p, &key, value)?,
                "q" => fill(&mut self.q, &key, value)?,
                "s" => fill(&mut self.s, &key, value)?,
                "mu" => fill(&mut self.mu, &key, value)?,
                "lambda" => fill(&mut self.lambda, &key, value)?,
                "eps" => fill(&mut self.eps, &key, value)?,
                "nu" => fill(&mut self.nu, &key, value)?,
                "alpha" => fill(&mut self.alpha, &key, value)?,
                "samples" => fill(&mut self.samples, &key, value)?,
                "seed" => fill(&mut self.seed, &key, value)?,
                "depth" => fill(&mut self.depth, &key, value)?,
                "ratio" => fill(&mut self.ratio, &key, value)?,
                "cells" => fill(&mut self.cells, &key, value)?,
                "order" => fill(&mut self.order, &key, value)?,
                "out" => fill(&mut self.out, &key, value)?,
                "format" => fill(&mut self.format, &key, value)?,
                "explore" => self.explore |= parse::<bool>(&key, value)?,
                "grid" => {
                    if self.grid.is_none() {
                        let items = value
                            .split(',')
                            .map(|v| parse::<f64>(&key, v.trim()))
                            .collect::<Result<Vec<_>, _>>()?;
                        self.grid = Some(items);
                    }
                }
                other => return Err(CliError::Usage(format!("config: unknown key {other:?}"))),
            }
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.unwrap_or(42)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_win_over_config() {
        let mut o = Options {
            p: Some(3.0),
            ..Options::default()
        };
        o.apply_config("p = 2\nseed = 7 # comment\ngrid = 1.5, 2\nformat = csv\n")
            .unwrap();
        assert_eq!(o.p, Some(3.0));
        assert_eq!(o.seed, Some(7));
        assert_eq!(o.grid, Some(vec![1.5, 2.0]));
        assert_eq!(o.format, Some(Format::Csv));
    }

    #[test]
    fn unknown_keys_are_usage_errors() {
        let mut o = Options::default();
        assert!(matches!(
            o.apply_config("colour = red"),
            Err(CliError::Usage(_))
        ));
        assert!(matches!(
            o.apply_config("samples = many"),
            Err(CliError::Usage(_))
        ));
    }
}
