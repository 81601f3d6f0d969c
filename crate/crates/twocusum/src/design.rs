//! Threshold calibration against the false-alarm constraint and the search
//! for the best two-sided rule under the worst-delay criterion.
//!
//! The search walks the two-parameter family (m, Delta): m is the smaller
//! threshold, Delta >= 0 the gap, and the orientation decides which side
//! gets the gap. For each candidate gap the smaller threshold is pinned to
//! the feasibility boundary (the certified mean time between false alarms
//! equals gamma), which reduces the search to one dimension per
//! orientation: a coarse gap grid followed by golden-section refinement.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analytic::{
    corollary_bounds, drift_argument, harmonic_mean_expectation, one_sided_expectation,
};
use crate::error::{Error, Result};
use crate::sim::{estimate_stopping_expectation, McEstimate, Scenario};
use crate::types::{DriftPair, Measure, RuleClass, Side, ThresholdPair, CLASS_TOLERANCE};

/// Largest threshold the search will consider.
pub const NU_MAX: f64 = 64.0;

/// Largest threshold gap the search will consider.
pub const DELTA_MAX: f64 = 16.0;

/// The search stops refining once the gap interval is this narrow.
const DELTA_RESOLUTION: f64 = 1e-3;

/// Hard cap on candidate evaluations per search.
const MAX_EVALUATIONS: usize = 200;

/// Relative tolerance of the calibration root-finders.
const CALIBRATION_REL_TOL: f64 = 1e-9;

/// Step size used by the Monte Carlo candidate evaluators. Coarser than the
/// simulation default: candidates share paths (common random numbers), so
/// the discretization bias largely cancels in comparisons.
const MC_DT: f64 = 1e-2;

/// Horizon of Monte Carlo false-alarm evaluations, as a multiple of gamma.
const INF_HORIZON_FACTOR: f64 = 8.0;

/// Horizon of Monte Carlo delay evaluations, as a multiple of the analytic
/// delay upper bound.
const DELAY_HORIZON_FACTOR: f64 = 50.0;

/// The false-alarm constraint: designs must keep the mean time between
/// false alarms at or above `gamma`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignConstraint {
    pub gamma: f64,
}

impl DesignConstraint {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::InvalidParameter {
                name: "gamma",
                requirement: "finite and > 0",
                value: gamma,
            });
        }
        Ok(DesignConstraint { gamma })
    }
}

/// How candidates are scored during the search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SearchMode {
    /// Analytic bounds only: delay upper bounds as the objective, the
    /// false-alarm lower bound for feasibility. Deterministic and cheap; the
    /// reported numbers are certified bounds rather than exact values.
    Bound,
    /// Monte Carlo for both the objective and the feasibility check
    /// (estimate minus two standard errors must clear gamma).
    MonteCarlo,
    /// Analytic feasibility with Monte Carlo delays.
    Hybrid,
}

impl fmt::Display for SearchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SearchMode::Bound => write!(f, "bound"),
            SearchMode::MonteCarlo => write!(f, "monte-carlo"),
            SearchMode::Hybrid => write!(f, "hybrid"),
        }
    }
}

impl FromStr for SearchMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "bound" => Ok(SearchMode::Bound),
            "monte-carlo" | "mc" => Ok(SearchMode::MonteCarlo),
            "hybrid" => Ok(SearchMode::Hybrid),
            other => Err(format!(
                "unknown search mode {other:?} (expected bound, monte-carlo, or hybrid)"
            )),
        }
    }
}

/// Provenance of the numbers inside a [`DesignResult`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvaluationMethod {
    AnalyticBound,
    MonteCarlo,
    Hybrid,
}

impl From<SearchMode> for EvaluationMethod {
    fn from(mode: SearchMode) -> Self {
        match mode {
            SearchMode::Bound => EvaluationMethod::AnalyticBound,
            SearchMode::MonteCarlo => EvaluationMethod::MonteCarlo,
            SearchMode::Hybrid => EvaluationMethod::Hybrid,
        }
    }
}

impl fmt::Display for EvaluationMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EvaluationMethod::AnalyticBound => write!(f, "analytic-bound"),
            EvaluationMethod::MonteCarlo => write!(f, "monte-carlo"),
            EvaluationMethod::Hybrid => write!(f, "hybrid"),
        }
    }
}

/// One scored candidate from the search trace.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CandidateEvaluation {
    pub thresholds: ThresholdPair,
    pub rule_class: RuleClass,
    pub jl_value: f64,
    pub e_inf: f64,
}

/// The selected design with its performance numbers and the search trace.
///
/// In Bound and Hybrid modes `e_inf` is the certified analytic lower bound
/// on the mean time between false alarms (so `e_inf >= gamma` certifies
/// feasibility), and in Bound mode `e_pos`/`e_neg` are delay upper bounds;
/// Monte Carlo numbers are estimates. `predicted_class` is the class the
/// drift ordering selects (smaller drift gets the larger threshold; equal
/// drifts give the equal-threshold class); `agreement` flags whether the
/// search landed there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignResult {
    pub thresholds: ThresholdPair,
    pub rule_class: RuleClass,
    pub jl_value: f64,
    pub e_inf: f64,
    pub e_pos: f64,
    pub e_neg: f64,
    pub method: EvaluationMethod,
    pub constraint: DesignConstraint,
    pub predicted_class: RuleClass,
    pub agreement: bool,
    pub evaluations: Vec<CandidateEvaluation>,
}

/// The optimal class as a function of the drift ordering: the side with the
/// smaller post-change drift gets the larger threshold, equal drifts give
/// equal thresholds.
pub fn predicted_rule_class(drifts: DriftPair) -> RuleClass {
    let scale = drifts.mu1.max(drifts.mu2);
    if (drifts.mu1 - drifts.mu2).abs() <= CLASS_TOLERANCE * scale {
        RuleClass::G
    } else if drifts.mu1 < drifts.mu2 {
        RuleClass::C2
    } else {
        RuleClass::C1
    }
}

/// Maps overflow from an analytic evaluation to positive infinity; any
/// other error still propagates. Used where an overflowed quantity only
/// needs comparing against a finite target.
fn value_or_inf(result: Result<f64>) -> Result<f64> {
    match result {
        Ok(v) => Ok(v),
        Err(Error::Overflow { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma.is_finite() && gamma > 0.0) {
        return Err(Error::InvalidParameter {
            name: "gamma",
            requirement: "finite and > 0",
            value: gamma,
        });
    }
    Ok(())
}

/// Root of `eval(x) = target` for a continuous strictly increasing map with
/// eval(0+) < target: doubling to bracket, then bisection until the value
/// is within the calibration tolerance.
fn solve_increasing<F>(eval: F, target: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut lo = 0.0f64;
    let mut hi = 1.0f64;
    for _ in 0..200 {
        if eval(hi)? >= target {
            break;
        }
        lo = hi;
        hi *= 2.0;
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let value = eval(mid)?;
        if (value - target).abs() <= CALIBRATION_REL_TOL * target {
            return Ok(mid);
        }
        if value < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

/// Threshold of a single one-sided rule whose mean time between false
/// alarms equals `gamma`.
pub fn calibrate_one_sided(mu: f64, gamma: f64) -> Result<f64> {
    if !(mu.is_finite() && mu > 0.0) {
        return Err(Error::InvalidParameter {
            name: "mu",
            requirement: "finite and > 0",
            value: mu,
        });
    }
    check_gamma(gamma)?;
    solve_increasing(|nu| value_or_inf(one_sided_expectation(nu, mu)), gamma)
}

/// Equal thresholds whose two-sided mean time between false alarms equals
/// `gamma`.
pub fn calibrate_harmonic(drifts: DriftPair, gamma: f64) -> Result<ThresholdPair> {
    check_gamma(gamma)?;
    let nu = solve_increasing(
        |nu| value_or_inf(harmonic_mean_expectation(nu, drifts, Measure::Infinity)),
        gamma,
    )?;
    ThresholdPair::new(nu, nu)
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    thresholds: ThresholdPair,
    e_inf: f64,
    e_inf_stderr: f64,
    e_pos: f64,
    e_neg: f64,
    jl: f64,
}

struct Searcher {
    drifts: DriftPair,
    gamma: f64,
    mode: SearchMode,
    budget: u64,
    seed: u64,
    evaluations: Vec<CandidateEvaluation>,
    best: Option<Candidate>,
    best_equal: Option<Candidate>,
}

impl Searcher {
    fn exhausted(&self) -> bool {
        self.evaluations.len() >= MAX_EVALUATIONS
    }

    /// Thresholds with the smaller level `m` on the led side and the gap on
    /// the other.
    fn make_thresholds(&self, led: Side, m: f64, delta: f64) -> Result<ThresholdPair> {
        match led {
            Side::Negative => ThresholdPair::new(m + delta, m),
            Side::Positive => ThresholdPair::new(m, m + delta),
        }
    }

    fn inf_lower_bound(&self, thresholds: ThresholdPair) -> Result<f64> {
        value_or_inf(corollary_bounds(thresholds, self.drifts, Measure::Infinity).map(|b| b.lower))
    }

    /// Smaller threshold pinning the certified false-alarm lower bound to
    /// gamma for the given gap, or None when gamma is out of reach inside
    /// the search box. The returned value sits on the feasible side of the
    /// root.
    fn tight_lower_threshold(&self, led: Side, delta: f64) -> Result<Option<f64>> {
        if delta > DELTA_MAX {
            return Ok(None);
        }
        let cap = NU_MAX - delta;
        let eval =
            |m: f64| -> Result<f64> { self.inf_lower_bound(self.make_thresholds(led, m, delta)?) };
        if eval(cap)? < self.gamma {
            return Ok(None);
        }
        let mut lo = 0.0f64;
        let mut hi = 1.0f64.min(cap);
        while eval(hi)? < self.gamma {
            lo = hi;
            hi = (hi * 2.0).min(cap);
        }
        for _ in 0..200 {
            if hi - lo <= 1e-12 * hi.max(1.0) {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if eval(mid)? < self.gamma {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(Some(hi))
    }

    /// Upper bound on the expected delay under the given post-change
    /// measure: the bracket upper bound, capped by the one-sided
    /// expectation of the matching side (the two-sided rule never stops
    /// later than either of its halves).
    fn capped_delay_upper(&self, thresholds: ThresholdPair, measure: Measure) -> Result<f64> {
        let bracket =
            value_or_inf(corollary_bounds(thresholds, self.drifts, measure).map(|b| b.upper))?;
        let (side, nu) = match measure {
            Measure::PostChangePositive => (Side::Positive, thresholds.nu1),
            Measure::PostChangeNegative => (Side::Negative, thresholds.nu2),
            Measure::Infinity => {
                return Err(Error::InvalidParameter {
                    name: "measure",
                    requirement: "a post-change measure",
                    value: f64::NAN,
                })
            }
        };
        let cap = one_sided_expectation(nu, drift_argument(side, measure, self.drifts))?;
        Ok(bracket.min(cap))
    }

    fn delay_estimate(&self, thresholds: ThresholdPair, measure: Measure) -> Result<McEstimate> {
        let horizon =
            (DELAY_HORIZON_FACTOR * self.capped_delay_upper(thresholds, measure)?).max(10.0);
        let scenario = Scenario::new(measure, self.drifts, 0.0, MC_DT, horizon, self.seed)?;
        estimate_stopping_expectation(&scenario, thresholds, self.budget.max(2))
    }

    fn inf_estimate(&self, thresholds: ThresholdPair) -> Result<McEstimate> {
        let horizon = (INF_HORIZON_FACTOR * self.gamma).max(10.0);
        let scenario = Scenario::new(
            Measure::Infinity,
            self.drifts,
            0.0,
            MC_DT,
            horizon,
            self.seed,
        )?;
        estimate_stopping_expectation(&scenario, thresholds, self.budget.max(2))
    }

    /// Scores the candidate with the given gap and orientation, pinning the
    /// smaller threshold to the feasibility boundary. Returns None when no
    /// feasible threshold exists in the box.
    fn evaluate(&mut self, led: Side, delta: f64) -> Result<Option<Candidate>> {
        let Some(m) = self.tight_lower_threshold(led, delta)? else {
            return Ok(None);
        };
        let candidate = match self.mode {
            SearchMode::Bound => {
                let thresholds = self.make_thresholds(led, m, delta)?;
                let e_pos = self.capped_delay_upper(thresholds, Measure::PostChangePositive)?;
                let e_neg = self.capped_delay_upper(thresholds, Measure::PostChangeNegative)?;
                Candidate {
                    thresholds,
                    e_inf: self.inf_lower_bound(thresholds)?,
                    e_inf_stderr: 0.0,
                    e_pos,
                    e_neg,
                    jl: e_pos.max(e_neg),
                }
            }
            SearchMode::Hybrid => {
                let thresholds = self.make_thresholds(led, m, delta)?;
                let pos = self.delay_estimate(thresholds, Measure::PostChangePositive)?;
                let neg = self.delay_estimate(thresholds, Measure::PostChangeNegative)?;
                Candidate {
                    thresholds,
                    e_inf: self.inf_lower_bound(thresholds)?,
                    e_inf_stderr: 0.0,
                    e_pos: pos.mean,
                    e_neg: neg.mean,
                    jl: pos.mean.max(neg.mean),
                }
            }
            SearchMode::MonteCarlo => {
                // The analytic boundary is conservative, so the sampled
                // criterion usually passes at once; nudge the smaller
                // threshold upward until it does.
                let mut m = m;
                let mut found = None;
                for _ in 0..60 {
                    if m + delta > NU_MAX {
                        break;
                    }
                    let thresholds = self.make_thresholds(led, m, delta)?;
                    let inf = self.inf_estimate(thresholds)?;
                    if inf.mean - 2.0 * inf.stderr >= self.gamma {
                        found = Some((thresholds, inf));
                        break;
                    }
                    m *= 1.03;
                }
                let Some((thresholds, inf)) = found else {
                    return Ok(None);
                };
                let pos = self.delay_estimate(thresholds, Measure::PostChangePositive)?;
                let neg = self.delay_estimate(thresholds, Measure::PostChangeNegative)?;
                Candidate {
                    thresholds,
                    e_inf: inf.mean,
                    e_inf_stderr: inf.stderr,
                    e_pos: pos.mean,
                    e_neg: neg.mean,
                    jl: pos.mean.max(neg.mean),
                }
            }
        };
        self.register(candidate);
        Ok(Some(candidate))
    }

    fn register(&mut self, candidate: Candidate) {
        self.evaluations.push(CandidateEvaluation {
            thresholds: candidate.thresholds,
            rule_class: candidate.thresholds.classify(),
            jl_value: candidate.jl,
            e_inf: candidate.e_inf,
        });
        if self.best.map_or(true, |b| candidate.jl < b.jl) {
            self.best = Some(candidate);
        }
        if candidate.thresholds.classify() == RuleClass::G
            && self.best_equal.map_or(true, |b| candidate.jl < b.jl)
        {
            self.best_equal = Some(candidate);
        }
    }

    fn objective(&mut self, led: Side, delta: f64) -> Result<f64> {
        Ok(self
            .evaluate(led, delta)?
            .map(|c| c.jl)
            .unwrap_or(f64::INFINITY))
    }

    /// Golden-section refinement of the gap on one orientation.
    fn refine(&mut self, led: Side, mut a: f64, mut b: f64) -> Result<()> {
        const PHI: f64 = 0.618_033_988_749_894_9;
        let mut c = b - PHI * (b - a);
        let mut d = a + PHI * (b - a);
        let mut fc = self.objective(led, c)?;
        let mut fd = self.objective(led, d)?;
        while b - a > DELTA_RESOLUTION && !self.exhausted() {
            if fc <= fd {
                b = d;
                d = c;
                fd = fc;
                c = b - PHI * (b - a);
                fc = self.objective(led, c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + PHI * (b - a);
                fd = self.objective(led, d)?;
            }
        }
        Ok(())
    }
}

/// Finds the best two-sided rule for the drift pair under the false-alarm
/// constraint `gamma`.
///
/// `budget` is the Monte Carlo path count per candidate evaluation (ignored
/// by [`SearchMode::Bound`]); `seed` drives the Monte Carlo modes, which
/// score all candidates on common random numbers. The whole search is
/// deterministic given its arguments.
///
/// The equal-threshold candidate always competes, and exact ties resolve in
/// its favor. The result records whether the selected class agrees with the
/// drift-order prediction; disagreement is reported, not hidden.
pub fn search_best_rule(
    drifts: DriftPair,
    gamma: f64,
    mode: SearchMode,
    budget: u64,
    seed: u64,
) -> Result<DesignResult> {
    check_gamma(gamma)?;
    if budget == 0 {
        return Err(Error::InvalidParameter {
            name: "budget",
            requirement: ">= 1",
            value: 0.0,
        });
    }
    let mut searcher = Searcher {
        drifts,
        gamma,
        mode,
        budget,
        seed,
        evaluations: Vec::new(),
        best: None,
        best_equal: None,
    };

    // The equal-threshold candidate: gap zero, orientation irrelevant.
    searcher.evaluate(Side::Negative, 0.0)?;

    const COARSE: [f64; 15] = [
        0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0, 10.0, 12.0, 16.0,
    ];
    let mut orientation_best: [Option<(usize, f64)>; 2] = [None, None];
    for (slot, led) in [Side::Negative, Side::Positive].into_iter().enumerate() {
        for (idx, &delta) in COARSE.iter().enumerate() {
            if searcher.exhausted() {
                break;
            }
            if let Some(candidate) = searcher.evaluate(led, delta)? {
                if orientation_best[slot].map_or(true, |(_, jl)| candidate.jl < jl) {
                    orientation_best[slot] = Some((idx, candidate.jl));
                }
            }
        }
    }

    let winner = match (orientation_best[0], orientation_best[1]) {
        (Some((i, a)), Some((j, b))) => Some(if a <= b {
            (Side::Negative, i)
        } else {
            (Side::Positive, j)
        }),
        (Some((i, _)), None) => Some((Side::Negative, i)),
        (None, Some((j, _))) => Some((Side::Positive, j)),
        (None, None) => None,
    };
    if let Some((led, idx)) = winner {
        if !searcher.exhausted() {
            let lo = if idx == 0 {
                DELTA_RESOLUTION
            } else {
                COARSE[idx - 1]
            };
            let hi = if idx + 1 < COARSE.len() {
                COARSE[idx + 1]
            } else {
                DELTA_MAX
            };
            searcher.refine(led, lo, hi)?;
        }
    }

    let best = searcher.best;
    let chosen = match (best, searcher.best_equal) {
        (None, None) => return Err(Error::Infeasible { gamma }),
        (Some(b), Some(g)) if g.jl <= b.jl + 1e-9 * b.jl.abs().max(1.0) => g,
        (Some(b), _) => b,
        (None, Some(g)) => g,
    };

    // Defensive re-check of the mode's feasibility criterion.
    let feasible = match mode {
        SearchMode::Bound | SearchMode::Hybrid => chosen.e_inf >= gamma * (1.0 - 1e-6),
        SearchMode::MonteCarlo => chosen.e_inf - 2.0 * chosen.e_inf_stderr >= gamma,
    };
    if !feasible {
        return Err(Error::Infeasible { gamma });
    }

    let rule_class = chosen.thresholds.classify();
    let predicted_class = predicted_rule_class(drifts);
    Ok(DesignResult {
        thresholds: chosen.thresholds,
        rule_class,
        jl_value: chosen.e_pos.max(chosen.e_neg),
        e_inf: chosen.e_inf,
        e_pos: chosen.e_pos,
        e_neg: chosen.e_neg,
        method: mode.into(),
        constraint: DesignConstraint { gamma },
        predicted_class,
        agreement: rule_class == predicted_class,
        evaluations: searcher.evaluations,
    })
}
