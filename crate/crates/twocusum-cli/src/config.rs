//! Run configuration: defaults, config-file loading, flag overrides, and
//! resolution into the library's validated types.
//!
//! Precedence is command-line flags over config file over built-in
//! defaults. A config file is plain TOML with the `RunConfig` keys at the
//! top level; a file containing a `config` table (an emitted report) is
//! accepted too and re-runs from its embedded configuration.

use std::path::Path;

use serde::{Deserialize, Serialize};
use twocusum::analytic::corollary_bounds;
use twocusum::types::{DriftPair, Measure, ThresholdPair};

use crate::CliError;

/// Horizon multiple applied to the analytic delay upper bound when `t_max`
/// is not given explicitly.
const AUTO_HORIZON_FACTOR: f64 = 50.0;

/// Horizon in steps when `t_max` is not given and no thresholds are
/// available to size it analytically.
const AUTO_HORIZON_STEPS: f64 = 1e4;

fn default_mu() -> f64 {
    1.0
}

fn default_dt() -> f64 {
    1e-3
}

fn default_n_paths() -> u64 {
    10_000
}

fn default_measure() -> Measure {
    Measure::Infinity
}

/// The full run configuration. Every emitted report embeds its resolved
/// form, so any report can be re-run from itself.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_mu")]
    pub mu1: f64,
    #[serde(default = "default_mu")]
    pub mu2: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
    #[serde(default = "default_n_paths")]
    pub n_paths: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_measure")]
    pub measure: Measure,
    #[serde(default)]
    pub tau: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mu1: default_mu(),
            mu2: default_mu(),
            nu1: None,
            nu2: None,
            gamma: None,
            dt: default_dt(),
            t_max: None,
            n_paths: default_n_paths(),
            seed: 0,
            measure: default_measure(),
            tau: 0.0,
        }
    }
}

/// Flag-level overrides shared by every subcommand.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Config file (plain TOML, or a previously emitted report)
    #[arg(long, value_name = "FILE")]
    pub config: Option<std::path::PathBuf>,
    /// Write the report to this file instead of standard output
    #[arg(long, value_name = "FILE")]
    pub out: Option<std::path::PathBuf>,
    /// Post-change drift magnitude of the positive direction
    #[arg(long, value_name = "REAL")]
    pub mu1: Option<f64>,
    /// Post-change drift magnitude of the negative direction
    #[arg(long, value_name = "REAL")]
    pub mu2: Option<f64>,
    /// Alarm threshold of the positive-side statistic
    #[arg(long, value_name = "REAL")]
    pub nu1: Option<f64>,
    /// Alarm threshold of the negative-side statistic
    #[arg(long, value_name = "REAL")]
    pub nu2: Option<f64>,
    /// Minimum allowed mean time between false alarms
    #[arg(long, value_name = "REAL")]
    pub gamma: Option<f64>,
    /// Simulation step size
    #[arg(long, value_name = "REAL")]
    pub dt: Option<f64>,
    /// Simulation horizon; derived from the thresholds when omitted
    #[arg(long, value_name = "REAL")]
    pub t_max: Option<f64>,
    /// Monte Carlo path count
    #[arg(long, value_name = "N")]
    pub n_paths: Option<u64>,
    /// Master random seed
    #[arg(long, value_name = "SEED")]
    pub seed: Option<u64>,
    /// Governing measure: infinity, post-change-positive, or
    /// post-change-negative (aliases inf, pos, neg)
    #[arg(long, value_name = "TAG")]
    pub measure: Option<String>,
    /// Change time for the post-change measures
    #[arg(long, value_name = "REAL")]
    pub tau: Option<f64>,
}

impl RunConfig {
    /// Loads a configuration following the precedence rules: defaults,
    /// then the config file if given, then individual flags.
    pub fn resolve(overrides: &Overrides) -> Result<RunConfig, CliError> {
        let mut config = match &overrides.config {
            Some(path) => RunConfig::from_file(path)?,
            None => RunConfig::default(),
        };
        config.apply(overrides)?;
        Ok(config)
    }

    fn from_file(path: &Path) -> Result<RunConfig, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let table: toml::Table = text
            .parse()
            .map_err(|e| CliError::Usage(format!("cannot parse config {}: {e}", path.display())))?;
        // A report file carries the configuration under [config]; a plain
        // config file carries it at the top level.
        let value = match table.get("config") {
            Some(toml::Value::Table(inner)) => inner.clone(),
            _ => table,
        };
        value
            .try_into()
            .map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    fn apply(&mut self, overrides: &Overrides) -> Result<(), CliError> {
        if let Some(v) = overrides.mu1 {
            self.mu1 = v;
        }
        if let Some(v) = overrides.mu2 {
            self.mu2 = v;
        }
        if let Some(v) = overrides.nu1 {
            self.nu1 = Some(v);
        }
        if let Some(v) = overrides.nu2 {
            self.nu2 = Some(v);
        }
        if let Some(v) = overrides.gamma {
            self.gamma = Some(v);
        }
        if let Some(v) = overrides.dt {
            self.dt = v;
        }
        if let Some(v) = overrides.t_max {
            self.t_max = Some(v);
        }
        if let Some(v) = overrides.n_paths {
            self.n_paths = v;
        }
        if let Some(v) = overrides.seed {
            self.seed = v;
        }
        if let Some(tag) = &overrides.measure {
            self.measure = tag.parse().map_err(CliError::Usage)?;
        }
        if let Some(v) = overrides.tau {
            self.tau = v;
        }
        Ok(())
    }

    pub fn drifts(&self) -> Result<DriftPair, CliError> {
        DriftPair::new(self.mu1, self.mu2).map_err(CliError::from_usage)
    }

    /// Both thresholds, required: missing ones are a usage error.
    pub fn thresholds(&self) -> Result<ThresholdPair, CliError> {
        match (self.nu1, self.nu2) {
            (Some(nu1), Some(nu2)) => {
                ThresholdPair::new(nu1, nu2).map_err(CliError::from_usage)
            }
            _ => Err(CliError::Usage(
                "this command needs both thresholds; pass --nu1 and --nu2 or set them in the config".into(),
            )),
        }
    }

    pub fn gamma(&self) -> Result<f64, CliError> {
        self.gamma.ok_or_else(|| {
            CliError::Usage(
                "this command needs a false-alarm constraint; pass --gamma or set it in the config"
                    .into(),
            )
        })
    }

    /// Fills in `t_max` if absent: a multiple of the analytic delay upper
    /// bound when thresholds are available, otherwise a fixed step count.
    pub fn resolve_t_max(&mut self) -> Result<(), CliError> {
        if self.t_max.is_some() {
            return Ok(());
        }
        let horizon = match (self.nu1, self.nu2) {
            (Some(nu1), Some(nu2)) => {
                let thresholds = ThresholdPair::new(nu1, nu2).map_err(CliError::from_usage)?;
                let drifts = self.drifts()?;
                let bracket = corollary_bounds(thresholds, drifts, self.measure).map_err(|e| {
                    CliError::Usage(format!(
                        "cannot derive a horizon from the thresholds ({e}); pass --t-max"
                    ))
                })?;
                AUTO_HORIZON_FACTOR * bracket.upper
            }
            _ => AUTO_HORIZON_STEPS * self.dt,
        };
        self.t_max = Some(horizon.max(self.dt));
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_an_empty_document() {
        let config: RunConfig = toml::from_str("").unwrap();
        assert_eq!(config, RunConfig::default());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<RunConfig>("mu3 = 1.0").unwrap_err();
        assert!(err.to_string().contains("mu3"), "{err}");
    }

    #[test]
    fn measure_tags_round_trip() {
        let config: RunConfig = toml::from_str("measure = \"post-change-negative\"").unwrap();
        assert_eq!(config.measure, Measure::PostChangeNegative);
        let text = toml::to_string(&config).unwrap();
        assert!(text.contains("post-change-negative"));
    }
}
