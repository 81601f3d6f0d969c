//! Streaming computation of the two CUSUM statistics and the two-sided
//! stopping rule on a discretely sampled observation path.
//!
//! The engine is exact with respect to its discrete inputs: alarm times are
//! reported at the end of the crossing step and no interpolation is applied.
//! Sub-step crossing bias is a sampling concern and is handled statistically
//! in the path simulator instead.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{DriftPair, ThresholdPair};

/// Streaming state of the two drift-compensated statistics u+ and u-, their
/// running minima, and the reflected statistics y = u - min.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CusumState {
    pub u_plus: f64,
    pub u_minus: f64,
    pub min_plus: f64,
    pub min_minus: f64,
    pub y_plus: f64,
    pub y_minus: f64,
    pub t: f64,
}

/// Which statistic triggered the alarm. Both crossing on the same update is
/// impossible in continuous time but possible after discretization; the
/// engine reports it as a tie and leaves policy to the caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FiredSide {
    Positive,
    Negative,
    Tie,
}

/// Outcome of a stopping check or a full run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StoppingReport {
    pub stopped: bool,
    pub alarm_time: Option<f64>,
    pub fired_side: Option<FiredSide>,
    pub overshoot: Option<f64>,
}

impl StoppingReport {
    fn not_stopped() -> Self {
        StoppingReport {
            stopped: false,
            alarm_time: None,
            fired_side: None,
            overshoot: None,
        }
    }
}

/// The state at time zero: every statistic starts at zero.
pub fn init_state() -> CusumState {
    CusumState {
        u_plus: 0.0,
        u_minus: 0.0,
        min_plus: 0.0,
        min_minus: 0.0,
        y_plus: 0.0,
        y_minus: 0.0,
        t: 0.0,
    }
}

/// Advances the state by one observation increment `d_xi` over `dt`:
/// du+ = d_xi - (mu1/2) dt and du- = -d_xi - (mu2/2) dt, followed by the
/// running-minimum update min' = min(min, u') and y' = u' - min'.
///
/// The running-minimum form is canonical; it keeps y = u - min exact by
/// construction. The equivalent reset recursion y' = max(y + du, 0) agrees
/// with it exactly in real arithmetic and to rounding error in floating
/// point.
pub fn update(state: &CusumState, d_xi: f64, dt: f64, drifts: DriftPair) -> Result<CusumState> {
    if !d_xi.is_finite() {
        return Err(Error::NonFiniteIncrement);
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::InvalidParameter {
            name: "dt",
            requirement: "finite and > 0",
            value: dt,
        });
    }
    let u_plus = state.u_plus + d_xi - 0.5 * drifts.mu1 * dt;
    let u_minus = state.u_minus - d_xi - 0.5 * drifts.mu2 * dt;
    let min_plus = state.min_plus.min(u_plus);
    let min_minus = state.min_minus.min(u_minus);
    Ok(CusumState {
        u_plus,
        u_minus,
        min_plus,
        min_minus,
        y_plus: u_plus - min_plus,
        y_minus: u_minus - min_minus,
        t: state.t + dt,
    })
}

/// Tests the state against the thresholds. On a crossing the alarm time is
/// the state's current time (the end of the crossing step) and the overshoot
/// is the crossed statistic minus its threshold; when both sides cross on
/// the same update the side is `Tie` and the overshoot is the larger one.
pub fn check_stop(state: &CusumState, thresholds: ThresholdPair) -> StoppingReport {
    let over_plus = state.y_plus - thresholds.nu1;
    let over_minus = state.y_minus - thresholds.nu2;
    let (fired_side, overshoot) = match (over_plus >= 0.0, over_minus >= 0.0) {
        (true, true) => (FiredSide::Tie, over_plus.max(over_minus)),
        (true, false) => (FiredSide::Positive, over_plus),
        (false, true) => (FiredSide::Negative, over_minus),
        (false, false) => return StoppingReport::not_stopped(),
    };
    StoppingReport {
        stopped: true,
        alarm_time: Some(state.t),
        fired_side: Some(fired_side),
        overshoot: Some(overshoot),
    }
}

/// Runs the rule over a finite increment sequence and reports the first
/// crossing; an exhausted sequence yields `stopped = false`.
pub fn run_to_stop<I>(
    increments: I,
    thresholds: ThresholdPair,
    drifts: DriftPair,
) -> Result<StoppingReport>
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let mut state = init_state();
    for (d_xi, dt) in increments {
        state = update(&state, d_xi, dt, drifts)?;
        let report = check_stop(&state, thresholds);
        if report.stopped {
            return Ok(report);
        }
    }
    Ok(StoppingReport::not_stopped())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_drifts() -> DriftPair {
        DriftPair::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn hand_recursion_example() {
        // Increments chosen so du+ = [0.5, -0.3, 0.9] with mu1 = 1, dt = 1.
        let drifts = unit_drifts();
        let mut state = init_state();
        let mut seen = Vec::new();
        for du in [0.5, -0.3, 0.9] {
            state = update(&state, du + 0.5, 1.0, drifts).unwrap();
            seen.push(state.y_plus);
        }
        let expected = [0.5, 0.2, 1.1];
        for (got, want) in seen.iter().zip(expected) {
            assert!((got - want).abs() < 1e-12, "{seen:?}");
        }
    }

    #[test]
    fn zero_increments_never_fire() {
        let drifts = unit_drifts();
        let thresholds = ThresholdPair::new(0.5, 0.5).unwrap();
        let path = std::iter::repeat((0.0, 0.01)).take(10_000);
        let report = run_to_stop(path, thresholds, drifts).unwrap();
        assert!(!report.stopped);
    }

    #[test]
    fn rejects_non_finite_increment() {
        let err = update(&init_state(), f64::NAN, 0.1, unit_drifts()).unwrap_err();
        assert_eq!(err, Error::NonFiniteIncrement);
    }

    #[test]
    fn tie_reports_larger_overshoot() {
        let state = CusumState {
            u_plus: 1.2,
            u_minus: 1.5,
            min_plus: 0.0,
            min_minus: 0.0,
            y_plus: 1.2,
            y_minus: 1.5,
            t: 3.0,
        };
        let report = check_stop(&state, ThresholdPair::new(1.0, 1.0).unwrap());
        assert_eq!(report.fired_side, Some(FiredSide::Tie));
        assert!((report.overshoot.unwrap() - 0.5).abs() < 1e-15);
    }
}
