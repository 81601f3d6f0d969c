//! Closed-form layer checks: frozen high-precision reference values, the
//! bracket geometry over a parameter grid, and the identities tying the
//! exact expectation to the harmonic mean, the one-sided limit, and the
//! bracket endpoints.

use twocusum::analytic::{
    big_c, corollary_bounds, drift_argument, exact_2cusum_expectation, f,
    harmonic_mean_expectation, lambda, lorden_value, one_sided_expectation,
};
use twocusum::error::Error;
use twocusum::types::{DriftPair, Measure, RuleClass, Side, ThresholdPair};

fn assert_rel(actual: f64, expected: f64, tol: f64, label: &str) {
    let scale = expected.abs().max(1e-300);
    assert!(
        (actual - expected).abs() <= tol * scale,
        "{label}: {actual:.17} vs {expected:.17}"
    );
}

const MEASURES: [Measure; 3] = [
    Measure::Infinity,
    Measure::PostChangePositive,
    Measure::PostChangeNegative,
];

#[test]
fn special_function_reference_values() {
    // References computed with 50-digit arithmetic and rounded to f64.
    assert_rel(f(1.0, 1.0).unwrap(), 0.71828182845904523, 1e-14, "f(1,1)");
    assert_rel(f(1.0, 0.0).unwrap(), 0.5, 1e-15, "f(1,0)");
    assert_rel(f(2.0, -1.0).unwrap(), 1.13533528323661270, 1e-14, "f(2,-1)");
    assert_rel(f(0.5, 3.0).unwrap(), 0.22018767448200720, 1e-14, "f(0.5,3)");
    assert_rel(
        big_c(1.0, 1.0, 1.0).unwrap(),
        0.35914091422952262,
        1e-14,
        "C_1(1,1)",
    );
    assert_rel(
        big_c(1.0, 0.0, 1.0).unwrap(),
        0.20520703351228242,
        1e-14,
        "C_1(0,1)",
    );
    assert_rel(
        big_c(2.0, 1.0, -1.0).unwrap(),
        3.48704718889829809,
        1e-14,
        "C_2(1,-1)",
    );
    assert_rel(
        lambda(1.0, 1.0).unwrap(),
        0.58197670686932642,
        1e-14,
        "lambda_1(1)",
    );
    assert_rel(lambda(2.0, 0.0).unwrap(), 0.5, 1e-15, "lambda_2(0)");
    assert_rel(
        lambda(1.0, -1.0).unwrap(),
        1.58197670686932642,
        1e-14,
        "lambda_1(-1)",
    );
}

#[test]
fn f_is_nonnegative_and_increasing_in_its_argument() {
    for &x in &[0.1, 0.5, 1.0, 2.0, 5.0] {
        let mut prev = -1.0;
        for i in -40..=40 {
            let y = i as f64 * 0.2;
            let value = f(x, y).unwrap();
            assert!(value >= 0.0);
            assert!(value > prev, "f({x}, {y}) not increasing");
            prev = value;
        }
    }
}

#[test]
fn drift_argument_covers_all_six_cells() {
    let drifts = DriftPair::new(1.5, 0.25).unwrap();
    let expect = [
        (Side::Positive, Measure::Infinity, 1.5),
        (Side::Positive, Measure::PostChangePositive, -1.5),
        (Side::Positive, Measure::PostChangeNegative, 2.0),
        (Side::Negative, Measure::Infinity, 0.25),
        (Side::Negative, Measure::PostChangePositive, 3.25),
        (Side::Negative, Measure::PostChangeNegative, -0.25),
    ];
    for (side, measure, value) in expect {
        assert_eq!(drift_argument(side, measure, drifts), value);
    }
}

#[test]
fn one_sided_reference_values() {
    assert_rel(
        one_sided_expectation(2.0, 1.0).unwrap(),
        8.77811219786130046,
        1e-14,
        "2 f_2(1)",
    );
    assert_rel(
        one_sided_expectation(2.0, -1.0).unwrap(),
        2.27067056647322539,
        1e-14,
        "2 f_2(-1)",
    );
    assert!(matches!(
        one_sided_expectation(-1.0, 1.0),
        Err(Error::InvalidParameter { name: "nu", .. })
    ));
}

#[test]
fn harmonic_reference_values() {
    let equal = DriftPair::new(1.0, 1.0).unwrap();
    let skew = DriftPair::new(1.0, 2.0).unwrap();
    assert_rel(
        harmonic_mean_expectation(2.0, equal, Measure::Infinity).unwrap(),
        4.38905609893065023,
        1e-14,
        "harmonic nu=2",
    );
    assert_rel(
        harmonic_mean_expectation(1.0, skew, Measure::Infinity).unwrap(),
        0.86821801674880179,
        1e-14,
        "harmonic nu=1 mu=(1,2)",
    );
    // The harmonic mean is invariant under relabeling the two sides.
    let swapped = harmonic_mean_expectation(1.0, skew.swapped(), Measure::Infinity).unwrap();
    let direct = harmonic_mean_expectation(1.0, skew, Measure::Infinity).unwrap();
    assert_rel(swapped, direct, 1e-15, "relabel invariance");
}

#[test]
fn bracket_frozen_values() {
    let equal = DriftPair::new(1.0, 1.0).unwrap();
    let wide = corollary_bounds(
        ThresholdPair::new(2.0, 1.0).unwrap(),
        equal,
        Measure::Infinity,
    )
    .unwrap();
    assert_rel(wide.lower, 1.03519301121152918, 1e-14, "LB m=1 M=2");
    assert_rel(wide.upper, 1.28890764807293974, 1e-14, "UB m=1 M=2");

    let narrow = corollary_bounds(
        ThresholdPair::new(1.5, 1.0).unwrap(),
        equal,
        Measure::Infinity,
    )
    .unwrap();
    assert_rel(narrow.lower, 0.89963047551848980, 1e-14, "LB m=1 M=1.5");
    assert_rel(narrow.upper, 1.11089722018218760, 1e-14, "UB m=1 M=1.5");
}

#[test]
fn brackets_are_ordered_and_monotone_over_the_grid() {
    let drift_grid = [(1.0, 1.0), (1.0, 2.0), (2.0, 1.0), (0.5, 1.5)];
    let gaps = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0];
    for &(mu1, mu2) in &drift_grid {
        let drifts = DriftPair::new(mu1, mu2).unwrap();
        for &m in &[0.5, 1.0, 2.0] {
            for measure in MEASURES {
                let mut prev: Option<(f64, f64)> = None;
                for &gap in &gaps {
                    // C1 orientation: the gap sits on the positive side.
                    let t = ThresholdPair::new(m + gap, m).unwrap();
                    let b = corollary_bounds(t, drifts, measure).unwrap();
                    assert!(
                        b.lower <= b.upper,
                        "disordered bracket at m={m} gap={gap} mu=({mu1},{mu2}) {measure}"
                    );
                    let led = drift_argument(Side::Negative, measure, drifts);
                    let e_led = one_sided_expectation(m, led).unwrap();
                    let harmonic = harmonic_mean_expectation_at(m, drifts, measure);
                    assert!(b.lower >= harmonic - 1e-12 * harmonic.abs());
                    assert!(b.upper <= e_led + 1e-12 * e_led);
                    if let Some((lo_prev, up_prev)) = prev {
                        // Widening the gap pushes both ends up toward the
                        // one-sided value.
                        assert!(b.lower >= lo_prev - 1e-12 * lo_prev.abs());
                        assert!(b.upper >= up_prev - 1e-12 * up_prev.abs());
                    }
                    prev = Some((b.lower, b.upper));
                }
            }
        }
    }
}

fn harmonic_mean_expectation_at(m: f64, drifts: DriftPair, measure: Measure) -> f64 {
    harmonic_mean_expectation(m, drifts, measure).unwrap()
}

#[test]
fn equal_thresholds_collapse_to_the_harmonic_value() {
    for &(mu1, mu2) in &[(1.0, 1.0), (1.0, 2.0), (0.7, 0.3)] {
        let drifts = DriftPair::new(mu1, mu2).unwrap();
        for &nu in &[0.5, 1.0, 2.0, 3.0] {
            let t = ThresholdPair::new(nu, nu).unwrap();
            for measure in MEASURES {
                let b = corollary_bounds(t, drifts, measure).unwrap();
                let h = harmonic_mean_expectation(nu, drifts, measure).unwrap();
                assert_rel(b.lower, h, 1e-12, "collapsed lower");
                assert_rel(b.upper, h, 1e-12, "collapsed upper");
            }
        }
    }
}

#[test]
fn huge_gap_reaches_the_one_sided_value() {
    let equal = DriftPair::new(1.0, 1.0).unwrap();
    let t = ThresholdPair::new(51.0, 1.0).unwrap();
    let b = corollary_bounds(t, equal, Measure::Infinity).unwrap();
    assert_rel(b.lower, 1.43656365691809047, 1e-10, "one-sided limit LB");
    assert_rel(b.upper, 1.43656365691809047, 1e-10, "one-sided limit UB");
}

#[test]
fn exact_expectation_interpolates_harmonic_and_one_sided() {
    let drifts = DriftPair::new(1.0, 2.0).unwrap();
    let t = ThresholdPair::new(2.5, 1.0).unwrap();
    for measure in MEASURES {
        let at_one = exact_2cusum_expectation(t, drifts, measure, 1.0).unwrap();
        let harmonic = harmonic_mean_expectation(1.0, drifts, measure).unwrap();
        assert_rel(at_one, harmonic, 1e-13, "L=1 gives the harmonic value");

        let at_zero = exact_2cusum_expectation(t, drifts, measure, 0.0).unwrap();
        let led = drift_argument(Side::Negative, measure, drifts);
        let one_sided = one_sided_expectation(1.0, led).unwrap();
        assert_rel(at_zero, one_sided, 1e-13, "L=0 gives the led one-sided");

        // Between the endpoints the map is linear and decreasing in L.
        let mid = exact_2cusum_expectation(t, drifts, measure, 0.5).unwrap();
        assert!(harmonic < mid && mid < one_sided);
    }
    assert!(matches!(
        exact_2cusum_expectation(t, drifts, Measure::Infinity, 1.5),
        Err(Error::LimitOutOfRange { .. })
    ));
    assert!(matches!(
        exact_2cusum_expectation(t, drifts, Measure::Infinity, -0.1),
        Err(Error::LimitOutOfRange { .. })
    ));
}

#[test]
fn bracket_endpoints_match_exact_at_the_implied_limit_factors() {
    // The bracket is the exact expression evaluated at the two geometric
    // decay factors, so feeding those factors back must reproduce the
    // endpoints identically.
    let drifts = DriftPair::new(1.0, 1.5).unwrap();
    let t = ThresholdPair::new(2.0, 1.0).unwrap();
    let gap = 1.0;
    for measure in MEASURES {
        let b = corollary_bounds(t, drifts, measure).unwrap();
        let rho_led = drift_argument(Side::Negative, measure, drifts);
        let rho_other = drift_argument(Side::Positive, measure, drifts);
        let l_fast = (-lambda(1.0, -rho_other).unwrap() * gap).exp();
        let l_slow = (-lambda(1.0, rho_led).unwrap() * gap).exp();
        let upper = exact_2cusum_expectation(t, drifts, measure, l_fast).unwrap();
        let lower = exact_2cusum_expectation(t, drifts, measure, l_slow).unwrap();
        assert_rel(upper, b.upper, 1e-12, "UB via exact");
        assert_rel(lower, b.lower, 1e-12, "LB via exact");
    }
}

#[test]
fn thresholds_classify_and_lead_consistently() {
    let c1 = ThresholdPair::new(2.0, 1.0).unwrap();
    let c2 = ThresholdPair::new(1.0, 2.0).unwrap();
    let g = ThresholdPair::new(1.5, 1.5).unwrap();
    assert_eq!(c1.classify(), RuleClass::C1);
    assert_eq!(c2.classify(), RuleClass::C2);
    assert_eq!(g.classify(), RuleClass::G);
    assert_eq!(c1.led_side(), Side::Negative);
    assert_eq!(c2.led_side(), Side::Positive);
    assert_eq!(c1.lower(), 1.0);
    assert_eq!(c1.upper(), 2.0);
}

#[test]
fn error_paths_are_typed() {
    assert!(matches!(
        f(100.0, 8.0),
        Err(Error::Overflow { exponent, .. }) if exponent == 800.0
    ));
    assert!(matches!(
        lambda(0.0, 1.0),
        Err(Error::ZeroDenominator { .. })
    ));
    assert!(matches!(
        big_c(0.0, 1.0, 1.0),
        Err(Error::ZeroDenominator { .. })
    ));
    assert!(DriftPair::new(0.0, 1.0).is_err());
    assert!(DriftPair::new(1.0, f64::NAN).is_err());
    assert!(ThresholdPair::new(1.0, -1.0).is_err());
}

#[test]
fn lorden_value_is_the_max() {
    assert_eq!(lorden_value(1.0, 2.0), 2.0);
    assert_eq!(lorden_value(3.0, 2.0), 3.0);
}
