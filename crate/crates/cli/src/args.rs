//! Command-line arguments and their precedence over the config file.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "heavycov", version, about = "Eigenstructure experiments for heavy-tailed linear processes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Eigenvalues and leading eigenvectors of P(s1, s2) or A(s1, s2).
    Spectrum(RunArgs),
    /// Order-statistic predictions gamma_i, delta_i and predicted eigenvectors.
    Predict(RunArgs),
    /// Sample spectrum against the predictions.
    Compare(RunArgs),
    /// Normalized eigenvalues against their limit laws.
    Limits(RunArgs),
    /// Limiting spectral density against simulated light-tailed spectra.
    Lsd(RunArgs),
}

impl Command {
    pub fn kind(&self) -> ExperimentKind {
        match self {
            Command::Spectrum(_) => ExperimentKind::Spectrum,
            Command::Predict(_) => ExperimentKind::Predict,
            Command::Compare(_) => ExperimentKind::Compare,
            Command::Limits(_) => ExperimentKind::Limits,
            Command::Lsd(_) => ExperimentKind::Lsd,
        }
    }

    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Spectrum(a) | Command::Predict(a) | Command::Compare(a) | Command::Limits(a) | Command::Lsd(a) => {
                a
            }
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Run a single seed.
    #[arg(long, conflicts_with = "seeds")]
    pub seed: Option<u64>,
    /// Seed range `a..b` (exclusive) or `a..=b` (inclusive).
    #[arg(long, value_parser = parse_seed_range)]
    pub seeds: Option<SeedRange>,
    /// Output directory; defaults to the config's `out`, then `out`.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to the number of cores.
    #[arg(long)]
    pub threads: Option<usize>,
}

/// Seeds parsed from a `--seeds` range.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedRange(pub Vec<u64>);

pub fn parse_seed_range(s: &str) -> Result<SeedRange, String> {
    let (lo, hi, inclusive) = if let Some((a, b)) = s.split_once("..=") {
        (a, b, true)
    } else if let Some((a, b)) = s.split_once("..") {
        (a, b, false)
    } else {
        return Err(format!("expected a..b or a..=b, got {s:?}"));
    };
    let lo: u64 = lo.trim().parse().map_err(|e| format!("bad range start {lo:?}: {e}"))?;
    let hi: u64 = hi.trim().parse().map_err(|e| format!("bad range end {hi:?}: {e}"))?;
    Ok(SeedRange(if inclusive { (lo..=hi).collect() } else { (lo..hi).collect() }))
}

/// Loads the config and applies the command-line overrides.
pub fn resolve(command: &Command) -> Result<(ExperimentConfig, PathBuf), CliError> {
    let args = command.args();
    let mut cfg = ExperimentConfig::load(&args.config)?;
    let kind = command.kind();
    match cfg.kind {
        Some(k) if k != kind => {
            return Err(CliError::Config(format!(
                "config kind `{}` does not match subcommand `{}`",
                k.name(),
                kind.name()
            )))
        }
        _ => cfg.kind = Some(kind),
    }
    if let Some(seed) = args.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(seeds) = &args.seeds {
        cfg.seeds = seeds.0.clone();
    }
    let out = args.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("out"));
    cfg.out = None;
    Ok((cfg, out))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seed_ranges() {
        assert_eq!(parse_seed_range("3..6").unwrap().0, vec![3, 4, 5]);
        assert_eq!(parse_seed_range("3..=6").unwrap().0, vec![3, 4, 5, 6]);
        assert!(parse_seed_range("5..5").unwrap().0.is_empty());
        assert!(parse_seed_range("5").is_err());
        assert!(parse_seed_range("a..3").is_err());
    }
}
