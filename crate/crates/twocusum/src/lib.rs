//! Two-sided CUSUM rules for detecting a drift change of unknown sign in a
//! Brownian observation stream.
//!
//! The observation gains drift +mu1 or -mu2 at an unknown time; a two-sided
//! rule runs one CUSUM statistic per sign and alarms when either reflected
//! statistic reaches its threshold. This crate provides:
//!
//! - [`engine`]: the online statistic recursion and stopping check, usable
//!   on recorded or streaming increments;
//! - [`analytic`]: closed forms for expected stopping times (one-sided,
//!   equal-threshold, unequal-threshold bounds, and the exact composite
//!   expression driven by a limit factor);
//! - [`sim`]: bridge-corrected Monte Carlo estimators for stopping times,
//!   threshold-race probabilities, and the limit factor, reproducible for
//!   any worker count;
//! - [`design`]: threshold calibration against a false-alarm constraint and
//!   the search for the rule minimizing the worse of the two post-change
//!   delays.
//!
//! Times are in the units of the Brownian clock and thresholds live on the
//! reflected-statistic scale.

pub mod analytic;
pub mod design;
pub mod engine;
pub mod error;
pub mod sim;
pub mod types;

pub use design::{DesignConstraint, DesignResult, EvaluationMethod, SearchMode};
pub use engine::{CusumState, FiredSide, StoppingReport};
pub use error::{Error, Result};
pub use sim::{LimitFactorEstimate, McEstimate, Scenario};
pub use types::{BoundBracket, DriftPair, Measure, RuleClass, Side, ThresholdPair};
