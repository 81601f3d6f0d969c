//! Report records: a single TOML document per run, with the fully
//! resolved configuration embedded so every report can be re-run from
//! itself.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use twocusum::design::DesignResult;
use twocusum::sim::McEstimate;
use twocusum::types::{BoundBracket, RuleClass, ThresholdPair};

use crate::config::RunConfig;
use crate::CliError;

/// Wrapper serialized as `[config]` plus `[result]`.
#[derive(Debug, Serialize)]
pub struct Report<T: Serialize> {
    pub config: RunConfig,
    pub result: T,
}

impl<T: Serialize> Report<T> {
    pub fn new(config: RunConfig, result: T) -> Self {
        Report { config, result }
    }

    pub fn render(&self) -> Result<String, CliError> {
        toml::to_string_pretty(self)
            .map_err(|e| CliError::Usage(format!("cannot serialize report: {e}")))
    }

    /// Writes the rendered report to `out` when given, otherwise to
    /// standard output.
    pub fn emit(&self, out: Option<&Path>) -> Result<(), CliError> {
        let text = self.render()?;
        match out {
            Some(path) => std::fs::write(path, &text).map_err(|e| {
                CliError::Usage(format!("cannot write report {}: {e}", path.display()))
            }),
            None => {
                let stdout = std::io::stdout();
                let mut lock = stdout.lock();
                lock.write_all(text.as_bytes())
                    .and_then(|()| lock.flush())
                    .map_err(|e| CliError::Usage(format!("cannot write report: {e}")))
            }
        }
    }
}

/// One calibrated rule with its forward-evaluated mean time between false
/// alarms, reported to make the round trip visible.
#[derive(Debug, Serialize)]
pub struct CalibratedRule {
    pub nu: f64,
    pub e_inf_forward: f64,
}

#[derive(Debug, Serialize)]
pub struct CalibrateReport {
    pub gamma: f64,
    pub harmonic: CalibratedRule,
    pub one_sided_positive: CalibratedRule,
    pub one_sided_negative: CalibratedRule,
}

#[derive(Debug, Serialize)]
pub struct BracketRow {
    pub lower: f64,
    pub upper: f64,
}

impl From<BoundBracket> for BracketRow {
    fn from(b: BoundBracket) -> Self {
        BracketRow {
            lower: b.lower,
            upper: b.upper,
        }
    }
}

#[derive(Debug, Serialize)]
pub struct BoundsReport {
    pub rule_class: RuleClass,
    /// Upper bound on the worst detection delay, max of the two post-change
    /// bracket uppers.
    pub jl_upper_bound: f64,
    pub brackets: BracketTable,
}

#[derive(Debug, Serialize)]
pub struct BracketTable {
    pub infinity: BracketRow,
    #[serde(rename = "post-change-positive")]
    pub post_change_positive: BracketRow,
    #[serde(rename = "post-change-negative")]
    pub post_change_negative: BracketRow,
}

#[derive(Debug, Serialize)]
pub struct SimulateReport {
    pub thresholds: ThresholdPair,
    pub estimate: McEstimate,
    /// 0 when the run is clean, 1 when censoring exceeded the warning
    /// threshold and the estimate is truncation-biased.
    pub warning_status: u8,
}

#[derive(Debug, Serialize)]
pub struct SearchReport {
    pub mode: String,
    pub budget: u64,
    pub design: DesignResult,
}

/// Alarm record for `detect`: the crossing time, the side after tie
/// resolution, its overshoot, and both reflected statistics at the alarm.
#[derive(Debug, Clone, Serialize)]
pub struct AlarmRecord {
    pub time: f64,
    pub side: String,
    pub overshoot: f64,
    pub y_plus: f64,
    pub y_minus: f64,
}

/// End-of-stream summary for `detect` when no alarm fired.
#[derive(Debug, Clone, Serialize)]
pub struct NoAlarmSummary {
    pub rows: u64,
    pub t_last: f64,
    pub y_plus: f64,
    pub y_minus: f64,
}

#[derive(Debug, Serialize)]
pub struct DetectReport {
    pub alarm: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub event: Option<AlarmRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<NoAlarmSummary>,
}
