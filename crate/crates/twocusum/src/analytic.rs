//! Closed-form machinery for two-sided CUSUM rules on Brownian motion with a
//! two-sided drift change: the special functions f, C and lambda, one-sided
//! and harmonic-mean expected stopping times, upper/lower bound brackets for
//! unequal-threshold rules, and the exact composite expectation driven by an
//! externally estimated limit factor.

use crate::error::{Error, Result};
use crate::types::{BoundBracket, DriftPair, Measure, Side, ThresholdPair};

/// Exponential arguments above this raise [`Error::Overflow`] instead of
/// returning infinity.
pub const EXP_ARG_LIMIT: f64 = 700.0;

/// Below this value of |y*x| the function f switches to its Taylor series;
/// the direct expression loses roughly half the mantissa to cancellation
/// well before the series truncation error becomes visible.
const SERIES_CUTOFF: f64 = 1e-2;

/// The function f_x(y) = (e^(yx) - yx - 1) / y^2, extended continuously to
/// y = 0 where it equals x^2 / 2. Nonnegative for all real x, y.
pub fn f(x: f64, y: f64) -> Result<f64> {
    let z = y * x;
    if z > EXP_ARG_LIMIT {
        return Err(Error::Overflow {
            exponent: z,
            limit: EXP_ARG_LIMIT,
        });
    }
    let value = if z.abs() < SERIES_CUTOFF {
        // (e^z - z - 1) / y^2 = x^2 * sum_{k>=0} z^k / (k+2)!
        let tail = 1.0 / 720.0 + z / 5040.0;
        let series = 0.5 + z * (1.0 / 6.0 + z * (1.0 / 24.0 + z * (1.0 / 120.0 + z * tail)));
        x * x * series
    } else {
        (z.exp_m1() - z) / (y * y)
    };
    Ok(value.max(0.0))
}

/// The constant C_m(x, y) = f_m(x)^2 / (f_m(x) + f_m(y)).
pub fn big_c(m: f64, x: f64, y: f64) -> Result<f64> {
    let fx = f(m, x)?;
    let fy = f(m, y)?;
    let denom = fx + fy;
    if denom == 0.0 {
        return Err(Error::ZeroDenominator {
            context: "C_m(x, y): both f values vanish",
        });
    }
    Ok(fx * fx / denom)
}

/// The decay rate lambda_x(y) = 1 / (y * f_x(y) + x).
pub fn lambda(x: f64, y: f64) -> Result<f64> {
    let denom = y * f(x, y)? + x;
    if denom == 0.0 {
        return Err(Error::ZeroDenominator {
            context: "lambda_x(y)",
        });
    }
    Ok(1.0 / denom)
}

/// The drift argument carried by each one-sided expectation: the positive
/// side sees {mu1, -mu1, mu1 + 2 mu2} under {no change, positive change,
/// negative change}, and the negative side the mu1 <-> mu2 mirror of that.
pub fn drift_argument(side: Side, measure: Measure, drifts: DriftPair) -> f64 {
    match (side, measure) {
        (Side::Positive, Measure::Infinity) => drifts.mu1,
        (Side::Positive, Measure::PostChangePositive) => -drifts.mu1,
        (Side::Positive, Measure::PostChangeNegative) => drifts.mu1 + 2.0 * drifts.mu2,
        (Side::Negative, Measure::Infinity) => drifts.mu2,
        (Side::Negative, Measure::PostChangePositive) => drifts.mu2 + 2.0 * drifts.mu1,
        (Side::Negative, Measure::PostChangeNegative) => -drifts.mu2,
    }
}

/// Expected stopping time of a single one-sided CUSUM rule at level `nu`
/// whose underlying statistic carries drift argument `rho`: 2 f_nu(rho).
pub fn one_sided_expectation(nu: f64, rho: f64) -> Result<f64> {
    if !(nu.is_finite() && nu > 0.0) {
        return Err(Error::InvalidParameter {
            name: "nu",
            requirement: "finite and > 0",
            value: nu,
        });
    }
    Ok(2.0 * f(nu, rho)?)
}

/// Expected stopping time of the equal-threshold rule at level `nu` under
/// `measure`: the harmonic-mean combination E1 E2 / (E1 + E2) of the two
/// one-sided expectations.
pub fn harmonic_mean_expectation(nu: f64, drifts: DriftPair, measure: Measure) -> Result<f64> {
    let e1 = one_sided_expectation(nu, drift_argument(Side::Positive, measure, drifts))?;
    let e2 = one_sided_expectation(nu, drift_argument(Side::Negative, measure, drifts))?;
    Ok(e1 * e2 / (e1 + e2))
}

/// Upper and lower bounds on the expected stopping time of the two-sided
/// rule under `measure`.
///
/// With m the smaller threshold, M the larger, L the led side (the one
/// stopping at m) and O the other, both bounds share the shape
///
/// ```text
///     2 f_m(rho_L) * [1 - (C_m(rho_L, rho_O) / f_m(rho_L)) * e^(-rate (M - m))]
/// ```
///
/// where the upper bound decays at rate lambda_m(-rho_O) and the lower at
/// lambda_m(rho_L). At M = m both collapse to the harmonic-mean value.
pub fn corollary_bounds(
    thresholds: ThresholdPair,
    drifts: DriftPair,
    measure: Measure,
) -> Result<BoundBracket> {
    let m = thresholds.lower();
    let gap = thresholds.upper() - m;
    let led = thresholds.led_side();
    let rho_led = drift_argument(led, measure, drifts);
    let rho_other = drift_argument(led.opposite(), measure, drifts);

    let f_led = f(m, rho_led)?;
    let f_other = f(m, rho_other)?;
    let fraction = f_led / (f_led + f_other);
    let e_led = 2.0 * f_led;

    let rate_upper = lambda(m, -rho_other)?;
    let rate_lower = lambda(m, rho_led)?;
    // rho_led + rho_other = mu1 + mu2 > 0 under every measure, so
    // -rho_other < rho_led and (lambda being decreasing in its argument)
    // rate_upper >= rate_lower: the bracket is always well ordered.
    let upper = e_led * (1.0 - fraction * (-rate_upper * gap).exp());
    let lower = e_led * (1.0 - fraction * (-rate_lower * gap).exp());
    Ok(BoundBracket { lower, upper })
}

/// Exact expected stopping time of an unequal-threshold rule, given the
/// limit factor L of the threshold-gap power limit:
///
/// ```text
///     E[T] = E_led(m) * [1 - (E_led(m) / (E_led(m) + E_other(m))) * L]
/// ```
///
/// L = 1 recovers the harmonic-mean value and L = 0 the single-sided rule
/// at level m. The factor is estimated by the path simulator.
pub fn exact_2cusum_expectation(
    thresholds: ThresholdPair,
    drifts: DriftPair,
    measure: Measure,
    limit_factor: f64,
) -> Result<f64> {
    if !(0.0..=1.0).contains(&limit_factor) {
        return Err(Error::LimitOutOfRange {
            value: limit_factor,
        });
    }
    let m = thresholds.lower();
    let led = thresholds.led_side();
    let e_led = one_sided_expectation(m, drift_argument(led, measure, drifts))?;
    let e_other = one_sided_expectation(m, drift_argument(led.opposite(), measure, drifts))?;
    Ok(e_led * (1.0 - e_led / (e_led + e_other) * limit_factor))
}

/// The detection-delay criterion of a two-sided rule: the worse of its two
/// post-change expected delays.
pub fn lorden_value(delay_pos: f64, delay_neg: f64) -> f64 {
    delay_pos.max(delay_neg)
}
