//! Run configuration.
//!
//! Every setting can come from a command-line flag or from a TOML file
//! passed with `--config`. A flag always wins over the file, and the file
//! wins over the built-in default. Environment variables are never read.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use clap::Args;
use runoff::election::Fallback;
use runoff::model::{PriorKind, DEFAULT_SCALE};
use runoff::numerics::QuadratureSpec;
use serde::Deserialize;

use crate::error::CliError;

/// Fewest oracle draws accepted; below this the standard error is too coarse
/// to separate quadrature bugs from noise.
pub const MIN_DRAWS: u64 = 10_000;
pub const DEFAULT_DRAWS: u64 = 1_000_000;
pub const DEFAULT_SEED: u64 = 20181007;
pub const DEFAULT_STORE: &str = "posteriors.txt";

/// Flags shared by every subcommand. All optional so that unset flags fall
/// through to the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML file with defaults for any of the flags below.
    #[arg(long, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Poll file to ingest.
    #[arg(long, value_name = "PATH")]
    pub polls: Option<PathBuf>,
    /// Posterior store to write (update) or read (everything else).
    #[arg(long, value_name = "PATH")]
    pub store: Option<PathBuf>,
    /// Only process this pollster.
    #[arg(long, value_name = "NAME")]
    pub pollster: Option<String>,
    /// Prior for the first poll of each chain: uniform or jeffreys.
    #[arg(long)]
    pub prior: Option<PriorKind>,
    /// Factor applied to the previous posterior before the next poll, in (0, 1].
    #[arg(long, value_name = "W")]
    pub scale: Option<f64>,
    /// Absolute quadrature tolerance (default 1e-10).
    #[arg(long, value_name = "X")]
    pub abs_tol: Option<f64>,
    /// Relative quadrature tolerance (default 1e-8).
    #[arg(long, value_name = "X")]
    pub rel_tol: Option<f64>,
    /// Bisections allowed beyond the initial partition of each integral.
    #[arg(long, value_name = "N")]
    pub max_subdivisions: Option<usize>,
    /// Runoff probability for pairs never polled head to head: half or skip.
    #[arg(long)]
    pub fallback: Option<Fallback>,
    /// Directory for report tables.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Oracle seed; equal seeds give identical oracle tables.
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// Monte Carlo draws per oracle kernel (at least 10000).
    #[arg(long, value_name = "N")]
    pub draws: Option<u64>,
    /// Report date (YYYY-MM-DD) for elect, top2 and oracle; latest when absent.
    #[arg(long, value_name = "DATE")]
    pub date: Option<NaiveDate>,
    /// Also render SVG line charts next to the report tables.
    #[arg(long)]
    pub charts: bool,
}

/// Contents of a `--config` file. Keys mirror the long flag names with
/// dashes replaced by underscores.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub polls: Option<PathBuf>,
    pub store: Option<PathBuf>,
    pub pollster: Option<String>,
    pub prior: Option<String>,
    pub scale: Option<f64>,
    pub abs_tol: Option<f64>,
    pub rel_tol: Option<f64>,
    pub max_subdivisions: Option<usize>,
    pub fallback: Option<String>,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub draws: Option<u64>,
    /// YYYY-MM-DD.
    pub date: Option<String>,
    pub charts: Option<bool>,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub polls: Option<PathBuf>,
    pub store: PathBuf,
    pub pollster: Option<String>,
    pub prior: PriorKind,
    pub scale: f64,
    pub quadrature: QuadratureSpec,
    pub fallback: Fallback,
    pub out: PathBuf,
    pub seed: u64,
    pub draws: u64,
    pub date: Option<NaiveDate>,
    pub charts: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            polls: None,
            store: PathBuf::from(DEFAULT_STORE),
            pollster: None,
            prior: PriorKind::default(),
            scale: DEFAULT_SCALE,
            quadrature: QuadratureSpec::default(),
            fallback: Fallback::default(),
            out: PathBuf::from("."),
            seed: DEFAULT_SEED,
            draws: DEFAULT_DRAWS,
            date: None,
            charts: false,
        }
    }
}

fn parse_opt<T: std::str::FromStr<Err = String>>(
    s: &Option<String>,
) -> Result<Option<T>, CliError> {
    s.as_deref()
        .map(str::parse)
        .transpose()
        .map_err(CliError::Config)
}

impl RunConfig {
    /// Layers flags over the optional config file over the defaults.
    pub fn resolve(flags: &Overrides) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(path) => FileConfig::load(path)?,
            None => FileConfig::default(),
        };
        Self::layer(flags, &file)
    }

    pub fn layer(flags: &Overrides, file: &FileConfig) -> Result<Self, CliError> {
        let d = Self::default();
        let file_prior: Option<PriorKind> = parse_opt(&file.prior)?;
        let file_fallback: Option<Fallback> = parse_opt(&file.fallback)?;
        let file_date = file
            .date
            .as_deref()
            .map(|s| NaiveDate::parse_from_str(s, "%Y-%m-%d"))
            .transpose()
            .map_err(|e| CliError::Config(format!("date: {e}")))?;
        let config = Self {
            polls: flags.polls.clone().or_else(|| file.polls.clone()),
            store: flags
                .store
                .clone()
                .or_else(|| file.store.clone())
                .unwrap_or(d.store),
            pollster: flags.pollster.clone().or_else(|| file.pollster.clone()),
            prior: flags.prior.or(file_prior).unwrap_or(d.prior),
            scale: flags.scale.or(file.scale).unwrap_or(d.scale),
            quadrature: QuadratureSpec {
                abs_tol: flags
                    .abs_tol
                    .or(file.abs_tol)
                    .unwrap_or(d.quadrature.abs_tol),
                rel_tol: flags
                    .rel_tol
                    .or(file.rel_tol)
                    .unwrap_or(d.quadrature.rel_tol),
                max_subdivisions: flags
                    .max_subdivisions
                    .or(file.max_subdivisions)
                    .unwrap_or(d.quadrature.max_subdivisions),
            },
            fallback: flags.fallback.or(file_fallback).unwrap_or(d.fallback),
            out: flags
                .out
                .clone()
                .or_else(|| file.out.clone())
                .unwrap_or(d.out),
            seed: flags.seed.or(file.seed).unwrap_or(d.seed),
            draws: flags.draws.or(file.draws).unwrap_or(d.draws),
            date: flags.date.or(file_date),
            charts: flags.charts || file.charts.unwrap_or(false),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if !(self.scale > 0.0 && self.scale <= 1.0) {
            return Err(CliError::Config(format!(
                "scale must lie in (0, 1], got {}",
                self.scale
            )));
        }
        let q = &self.quadrature;
        if !(q.abs_tol > 0.0 && q.abs_tol.is_finite() && q.rel_tol > 0.0 && q.rel_tol.is_finite()) {
            return Err(CliError::Config(format!(
                "tolerances must be positive, got abs {} rel {}",
                q.abs_tol, q.rel_tol
            )));
        }
        if q.max_subdivisions == 0 {
            return Err(CliError::Config("max_subdivisions must be positive".into()));
        }
        if self.draws < MIN_DRAWS {
            return Err(CliError::Config(format!(
                "draws must be at least {MIN_DRAWS}, got {}",
                self.draws
            )));
        }
        Ok(())
    }

    pub fn polls_path(&self) -> Result<&Path, CliError> {
        self.polls
            .as_deref()
            .ok_or_else(|| CliError::Config("no poll file given (--polls)".into()))
    }
}
