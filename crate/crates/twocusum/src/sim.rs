//! Monte Carlo engine: scenario path generation, expected-stopping-time
//! estimation for two-sided rules, the race probability between the two
//! drift-compensated statistics, and the extrapolated limit factor of the
//! exact expectation.
//!
//! Reproducibility contract: every path depends only on (scenario, path
//! index). Each path owns two ChaCha substreams, one for its Gaussian
//! increments and one for its bridge-crossing uniforms, so estimates are
//! bit-identical for any worker count and disjoint path ranges merge to the
//! pooled result.

use std::sync::OnceLock;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{DriftPair, Measure, ThresholdPair};

/// Fraction of censored paths above which a stopping-time estimate carries a
/// truncation warning.
const CENSOR_WARN_FRACTION: f64 = 0.01;

/// Fraction of neither-event paths above which a race-probability estimate
/// carries a truncation warning (a longer horizon is recommended).
const NEITHER_WARN_FRACTION: f64 = 0.05;

/// Bridge-crossing draws are skipped when the exponent 2 g / dt exceeds
/// this, i.e. when the crossing probability is below exp(-30) ~ 1e-13.
const BRIDGE_EXPONENT_SKIP: f64 = 30.0;

/// Environment variable naming the worker-thread count for path simulation.
/// The value 1 forces fully sequential execution.
pub const WORKERS_ENV: &str = "TWOCUSUM_WORKERS";

/// A fully specified simulation setting: the governing measure, candidate
/// drifts, change time, step size, truncation horizon, and master seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub measure: Measure,
    pub drifts: DriftPair,
    pub tau: f64,
    pub dt: f64,
    pub t_max: f64,
    pub seed: u64,
}

impl Scenario {
    pub fn new(
        measure: Measure,
        drifts: DriftPair,
        tau: f64,
        dt: f64,
        t_max: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(tau.is_finite() && tau >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "tau",
                requirement: "finite and >= 0",
                value: tau,
            });
        }
        if !(dt.is_finite() && dt > 0.0) {
            return Err(Error::InvalidParameter {
                name: "dt",
                requirement: "finite and > 0",
                value: dt,
            });
        }
        if !(t_max.is_finite() && t_max >= dt) {
            return Err(Error::InvalidParameter {
                name: "t_max",
                requirement: "finite and >= dt",
                value: t_max,
            });
        }
        if tau > t_max {
            return Err(Error::InvalidParameter {
                name: "tau",
                requirement: "<= t_max",
                value: tau,
            });
        }
        Ok(Scenario {
            measure,
            drifts,
            tau,
            dt,
            t_max,
            seed,
        })
    }

    /// Number of whole steps fitting in the horizon.
    pub fn n_steps(&self) -> usize {
        ((self.t_max / self.dt + 1e-9).floor() as usize).max(1)
    }

    /// Observation drift over a step whose left endpoint is `t_left`: zero
    /// before the change time, the signed post-change drift from the first
    /// step starting at or after it.
    fn drift_rate(&self, t_left: f64) -> f64 {
        match self.measure {
            Measure::Infinity => 0.0,
            Measure::PostChangePositive if t_left >= self.tau => self.drifts.mu1,
            Measure::PostChangeNegative if t_left >= self.tau => -self.drifts.mu2,
            _ => 0.0,
        }
    }
}

/// Monte Carlo estimate with its sampling error and censoring diagnostics.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: u64,
    pub n_censored: u64,
    pub truncation_warning: bool,
}

impl McEstimate {
    /// Pools estimates from disjoint path ranges into the combined estimate;
    /// `warn_fraction` re-applies the censoring warning threshold of the
    /// originating estimator.
    pub fn pooled(parts: &[McEstimate], warn_fraction: f64) -> Option<McEstimate> {
        let mut stats = RunningStats::new();
        let mut censored = 0u64;
        for part in parts {
            let n = part.n_paths as f64;
            let m2 = part.stderr * part.stderr * n * (part.n_paths.saturating_sub(1)) as f64;
            stats.merge(&RunningStats {
                n: part.n_paths,
                mean: part.mean,
                m2,
            });
            censored += part.n_censored;
        }
        if stats.n == 0 {
            return None;
        }
        Some(McEstimate {
            mean: stats.mean,
            stderr: stats.stderr(),
            n_paths: stats.n,
            n_censored: censored,
            truncation_warning: censored as f64 > warn_fraction * stats.n as f64,
        })
    }
}

/// Welford accumulator with the Chan pairwise merge.
#[derive(Debug, Clone, Copy)]
struct RunningStats {
    n: u64,
    mean: f64,
    m2: f64,
}

impl RunningStats {
    fn new() -> Self {
        RunningStats {
            n: 0,
            mean: 0.0,
            m2: 0.0,
        }
    }

    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }

    fn merge(&mut self, other: &RunningStats) {
        if other.n == 0 {
            return;
        }
        if self.n == 0 {
            *self = *other;
            return;
        }
        let n1 = self.n as f64;
        let n2 = other.n as f64;
        let delta = other.mean - self.mean;
        let total = n1 + n2;
        self.mean += delta * n2 / total;
        self.m2 += other.m2 + delta * delta * n1 * n2 / total;
        self.n += other.n;
    }

    fn stderr(&self) -> f64 {
        if self.n < 2 {
            return 0.0;
        }
        let n = self.n as f64;
        (self.m2 / (n - 1.0) / n).sqrt()
    }
}

/// One stream per path and purpose: stream 2i feeds path i's Gaussian
/// increments, stream 2i + 1 its bridge uniforms.
fn path_rng(seed: u64, path_index: u64, lane: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path_index.wrapping_mul(2).wrapping_add(lane));
    rng
}

fn workers() -> Option<usize> {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n >= 1)
}

fn custom_pool() -> Option<&'static rayon::ThreadPool> {
    static POOL: OnceLock<Option<rayon::ThreadPool>> = OnceLock::new();
    POOL.get_or_init(|| {
        workers().and_then(|n| rayon::ThreadPoolBuilder::new().num_threads(n).build().ok())
    })
    .as_ref()
}

/// Maps `job` over the path indices `[first, first + n)`, in parallel unless
/// the worker override forces sequential execution. Outputs come back in
/// path order, so downstream reductions are order-stable by construction.
fn map_paths<O, F>(first: u64, n: u64, job: F) -> Vec<O>
where
    O: Send,
    F: Fn(u64) -> O + Sync,
{
    if workers() == Some(1) {
        return (first..first + n).map(job).collect();
    }
    let run = || (first..first + n).into_par_iter().map(&job).collect();
    match custom_pool() {
        Some(pool) => pool.install(run),
        None => run(),
    }
}

/// Generates one observation path as (d_xi, dt) increments covering the
/// scenario horizon. Deterministic given the scenario seed.
pub fn simulate_path(scenario: &Scenario) -> Vec<(f64, f64)> {
    simulate_path_indexed(scenario, 0)
}

/// The per-path primitive behind [`simulate_path`]: path `path_index` of the
/// scenario's infinite family.
pub fn simulate_path_indexed(scenario: &Scenario, path_index: u64) -> Vec<(f64, f64)> {
    let mut rng = path_rng(scenario.seed, path_index, 0);
    let dt = scenario.dt;
    let sqrt_dt = dt.sqrt();
    let n = scenario.n_steps();
    let mut out = Vec::with_capacity(n);
    let mut t = 0.0;
    for _ in 0..n {
        let noise: f64 = rng.sample(StandardNormal);
        out.push((scenario.drift_rate(t) * dt + sqrt_dt * noise, dt));
        t += dt;
    }
    out
}

struct PathOutcome {
    time: f64,
    censored: bool,
}

/// One exact step of a statistic reflected at the origin: the new value is
/// the larger of the unreflected endpoint and the in-step excursion
/// candidate (du + sqrt(du^2 - 2 dt ln U)) / 2, the conditional maximum of
/// the negated driving bridge. Sampling the candidate makes the step
/// distributionally exact, removing the O(sqrt(dt)) boundary bias a
/// grid-point reflection would carry. The draw is skipped when the bridge
/// cannot plausibly reach the origin.
fn reflect_step(y: f64, du: f64, dt: f64, rng: &mut ChaCha8Rng) -> f64 {
    let linear = y + du;
    if 2.0 * y * linear >= BRIDGE_EXPONENT_SKIP * dt {
        return linear;
    }
    let u: f64 = rng.random();
    let excursion = 0.5 * (du + (du * du - 2.0 * dt * u.ln()).sqrt());
    linear.max(excursion)
}

/// Simulates one path of the two-sided rule: exact reflection sampling at
/// the origin and per-step bridge-crossing correction at each threshold.
fn run_stopping_path(
    scenario: &Scenario,
    thresholds: ThresholdPair,
    path_index: u64,
) -> PathOutcome {
    let mut gauss = path_rng(scenario.seed, path_index, 0);
    let mut bridge = path_rng(scenario.seed, path_index, 1);
    let drifts = scenario.drifts;
    let dt = scenario.dt;
    let sqrt_dt = dt.sqrt();
    let n = scenario.n_steps();
    let mut y_plus = 0.0f64;
    let mut y_minus = 0.0f64;
    let mut t = 0.0f64;
    for _ in 0..n {
        let noise: f64 = gauss.sample(StandardNormal);
        let d_xi = scenario.drift_rate(t) * dt + sqrt_dt * noise;
        let du = d_xi - 0.5 * drifts.mu1 * dt;
        let dv = -d_xi - 0.5 * drifts.mu2 * dt;
        let prev_plus = y_plus;
        let prev_minus = y_minus;
        y_plus = reflect_step(y_plus, du, dt, &mut bridge);
        y_minus = reflect_step(y_minus, dv, dt, &mut bridge);
        t += dt;
        // Alarms report the right endpoint of the step that produced them.
        if y_plus >= thresholds.nu1 || y_minus >= thresholds.nu2 {
            return PathOutcome {
                time: t,
                censored: false,
            };
        }
        // No endpoint crossing: both statistics sit strictly below their
        // thresholds at both ends of the step, and the in-step crossing
        // probability of each is exp(-2 (nu - y_k)(nu - y_{k+1}) / dt),
        // exact for a linear barrier. The interaction with the reflection
        // at the origin is negligible for thresholds well above the step
        // scale.
        let g_plus = (thresholds.nu1 - prev_plus) * (thresholds.nu1 - y_plus);
        if 2.0 * g_plus < BRIDGE_EXPONENT_SKIP * dt {
            let u: f64 = bridge.random();
            if u < (-2.0 * g_plus / dt).exp() {
                return PathOutcome {
                    time: t,
                    censored: false,
                };
            }
        }
        let g_minus = (thresholds.nu2 - prev_minus) * (thresholds.nu2 - y_minus);
        if 2.0 * g_minus < BRIDGE_EXPONENT_SKIP * dt {
            let u: f64 = bridge.random();
            if u < (-2.0 * g_minus / dt).exp() {
                return PathOutcome {
                    time: t,
                    censored: false,
                };
            }
        }
    }
    PathOutcome {
        time: scenario.t_max,
        censored: true,
    }
}

/// Estimates the expected stopping time of the rule under the scenario's
/// measure, with exact reflection sampling at the origin and bridge
/// crossing correction at the thresholds so the discretization bias is
/// O(dt) rather than O(sqrt(dt)). Censored paths contribute the horizon
/// `t_max` and are counted; above 1% of paths they raise the truncation
/// warning.
pub fn estimate_stopping_expectation(
    scenario: &Scenario,
    thresholds: ThresholdPair,
    n_paths: u64,
) -> Result<McEstimate> {
    estimate_stopping_expectation_range(scenario, thresholds, 0, n_paths)
}

/// Range variant of [`estimate_stopping_expectation`] over path indices
/// `[first_path, first_path + n_paths)`; disjoint ranges pool to the full
/// run.
pub fn estimate_stopping_expectation_range(
    scenario: &Scenario,
    thresholds: ThresholdPair,
    first_path: u64,
    n_paths: u64,
) -> Result<McEstimate> {
    if n_paths < 2 {
        return Err(Error::InvalidParameter {
            name: "n_paths",
            requirement: ">= 2",
            value: n_paths as f64,
        });
    }
    let outcomes = map_paths(first_path, n_paths, |i| {
        let out = run_stopping_path(scenario, thresholds, i);
        (out.time, out.censored)
    });
    let mut stats = RunningStats::new();
    let mut censored = 0u64;
    for (time, was_censored) in outcomes {
        stats.push(time);
        censored += was_censored as u64;
    }
    Ok(McEstimate {
        mean: stats.mean,
        stderr: stats.stderr(),
        n_paths,
        n_censored: censored,
        truncation_warning: censored as f64 > CENSOR_WARN_FRACTION * n_paths as f64,
    })
}

enum RaceOutcome {
    PlusFirst,
    MinusFirst,
    Neither,
}

/// Simulates the race between u+ reaching `a` and u- reaching `b` on one
/// path. Sub-step crossings are resolved by exact bridge probabilities; the
/// two in-step events are nearly exclusive (they are opposite excursions of
/// the same bridge), so a single uniform decides them jointly. Crossing
/// times inside a step use linear interpolation for endpoint crossings and
/// the step midpoint for bridge crossings.
fn run_pi_path(scenario: &Scenario, a: f64, b: f64, path_index: u64) -> RaceOutcome {
    let mut gauss = path_rng(scenario.seed, path_index, 0);
    let mut bridge = path_rng(scenario.seed, path_index, 1);
    let drifts = scenario.drifts;
    let dt = scenario.dt;
    let sqrt_dt = dt.sqrt();
    let n = scenario.n_steps();
    let mut u_plus = 0.0f64;
    let mut u_minus = 0.0f64;
    let mut t = 0.0f64;
    for _ in 0..n {
        let noise: f64 = gauss.sample(StandardNormal);
        let d_xi = scenario.drift_rate(t) * dt + sqrt_dt * noise;
        let prev_plus = u_plus;
        let prev_minus = u_minus;
        u_plus += d_xi - 0.5 * drifts.mu1 * dt;
        u_minus += -d_xi - 0.5 * drifts.mu2 * dt;
        match (u_plus >= a, u_minus >= b) {
            (true, true) => {
                let theta_plus = (a - prev_plus) / (u_plus - prev_plus);
                let theta_minus = (b - prev_minus) / (u_minus - prev_minus);
                return if theta_plus <= theta_minus {
                    RaceOutcome::PlusFirst
                } else {
                    RaceOutcome::MinusFirst
                };
            }
            (true, false) => {
                let g_minus = (b - prev_minus) * (b - u_minus);
                if 2.0 * g_minus < BRIDGE_EXPONENT_SKIP * dt {
                    let u: f64 = bridge.random();
                    if u < (-2.0 * g_minus / dt).exp() {
                        let theta_plus = (a - prev_plus) / (u_plus - prev_plus);
                        return if theta_plus <= 0.5 {
                            RaceOutcome::PlusFirst
                        } else {
                            RaceOutcome::MinusFirst
                        };
                    }
                }
                return RaceOutcome::PlusFirst;
            }
            (false, true) => {
                let g_plus = (a - prev_plus) * (a - u_plus);
                if 2.0 * g_plus < BRIDGE_EXPONENT_SKIP * dt {
                    let u: f64 = bridge.random();
                    if u < (-2.0 * g_plus / dt).exp() {
                        let theta_minus = (b - prev_minus) / (u_minus - prev_minus);
                        return if theta_minus < 0.5 {
                            RaceOutcome::MinusFirst
                        } else {
                            RaceOutcome::PlusFirst
                        };
                    }
                }
                return RaceOutcome::MinusFirst;
            }
            (false, false) => {
                let g_plus = (a - prev_plus) * (a - u_plus);
                let g_minus = (b - prev_minus) * (b - u_minus);
                let need_plus = 2.0 * g_plus < BRIDGE_EXPONENT_SKIP * dt;
                let need_minus = 2.0 * g_minus < BRIDGE_EXPONENT_SKIP * dt;
                if need_plus || need_minus {
                    let u: f64 = bridge.random();
                    let p_plus = if need_plus {
                        (-2.0 * g_plus / dt).exp()
                    } else {
                        0.0
                    };
                    let p_minus = if need_minus {
                        (-2.0 * g_minus / dt).exp()
                    } else {
                        0.0
                    };
                    if u < p_plus {
                        return RaceOutcome::PlusFirst;
                    }
                    if u < p_plus + p_minus {
                        return RaceOutcome::MinusFirst;
                    }
                }
            }
        }
        t += dt;
    }
    RaceOutcome::Neither
}

/// Estimates Pi(a, b), the probability that u+ reaches `a` strictly before
/// u- reaches `b` under the scenario's measure. Paths where neither event
/// occurs by the horizon count against the event; above 5% of paths they
/// raise the truncation warning.
pub fn estimate_pi(a: f64, b: f64, scenario: &Scenario, n_paths: u64) -> Result<McEstimate> {
    estimate_pi_range(a, b, scenario, 0, n_paths)
}

/// Range variant of [`estimate_pi`] over path indices
/// `[first_path, first_path + n_paths)`.
pub fn estimate_pi_range(
    a: f64,
    b: f64,
    scenario: &Scenario,
    first_path: u64,
    n_paths: u64,
) -> Result<McEstimate> {
    for (name, value) in [("a", a), ("b", b)] {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::InvalidParameter {
                name,
                requirement: "finite and > 0",
                value,
            });
        }
    }
    if n_paths < 2 {
        return Err(Error::InvalidParameter {
            name: "n_paths",
            requirement: ">= 2",
            value: n_paths as f64,
        });
    }
    let outcomes = map_paths(first_path, n_paths, |i| {
        match run_pi_path(scenario, a, b, i) {
            RaceOutcome::PlusFirst => (1.0f64, false),
            RaceOutcome::MinusFirst => (0.0, false),
            RaceOutcome::Neither => (0.0, true),
        }
    });
    let mut stats = RunningStats::new();
    let mut neither = 0u64;
    for (value, was_neither) in outcomes {
        stats.push(value);
        neither += was_neither as u64;
    }
    Ok(McEstimate {
        mean: stats.mean,
        stderr: stats.stderr(),
        n_paths,
        n_censored: neither,
        truncation_warning: neither as f64 > NEITHER_WARN_FRACTION * n_paths as f64,
    })
}

/// One grid point of the limit-factor extrapolation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitGridPoint {
    pub n: u32,
    pub pi: McEstimate,
    pub g: f64,
    pub g_stderr: f64,
}

/// Extrapolated limit factor L together with its exponent and propagated
/// sampling error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitFactorEstimate {
    pub l: f64,
    pub l_stderr: f64,
    pub g_infinity: f64,
    pub g_infinity_stderr: f64,
    pub grid: Vec<LimitGridPoint>,
}

/// Estimates the limit factor
///
/// ```text
///     L = lim_n Pi(1/n, m)^((M-m) n)            (class C1)
///     L = lim_n (1 - Pi(m, 1/n))^((M-m) n)      (class C2)
/// ```
///
/// by evaluating g(n) = n log p(n) on the grid and Richardson-extrapolating
/// g to n = infinity through the last three points (a quadratic in 1/n),
/// then clamping L = exp((M-m) g_inf) into [0, 1]. Equal thresholds return
/// L = 1 exactly. Each grid point runs `paths_per_point` race paths on its
/// own seed substream.
pub fn estimate_limit_factor(
    thresholds: ThresholdPair,
    scenario: &Scenario,
    n_grid: &[u32],
    paths_per_point: u64,
) -> Result<LimitFactorEstimate> {
    let m = thresholds.lower();
    let gap = thresholds.upper() - m;
    let led_is_minus = thresholds.nu1 >= thresholds.nu2;
    if gap == 0.0 {
        return Ok(LimitFactorEstimate {
            l: 1.0,
            l_stderr: 0.0,
            g_infinity: 0.0,
            g_infinity_stderr: 0.0,
            grid: Vec::new(),
        });
    }
    if n_grid.len() < 3 || n_grid.windows(2).any(|w| w[0] >= w[1]) || n_grid[0] == 0 {
        return Err(Error::InvalidParameter {
            name: "n_grid",
            requirement: "strictly increasing with at least 3 positive entries",
            value: n_grid.len() as f64,
        });
    }

    let mut grid = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let mut point_scenario = *scenario;
        point_scenario.seed = scenario
            .seed
            .wrapping_add((n as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let small = 1.0 / n as f64;
        // Class C1 shrinks the u+ barrier, class C2 the u- barrier; the
        // event probability is the one favoring the led side.
        let (pi, p_event) = if led_is_minus {
            let pi = estimate_pi(small, m, &point_scenario, paths_per_point)?;
            let p = pi.mean;
            (pi, p)
        } else {
            let pi = estimate_pi(m, small, &point_scenario, paths_per_point)?;
            let p = 1.0 - pi.mean;
            (pi, p)
        };
        if p_event <= 0.0 {
            let values = grid.iter().map(|p: &LimitGridPoint| p.g).collect();
            return Err(Error::ExtrapolationDiverged { values });
        }
        let g = n as f64 * p_event.ln();
        let g_stderr = n as f64 * pi.stderr / p_event;
        grid.push(LimitGridPoint { n, pi, g, g_stderr });
    }

    let g_values: Vec<f64> = grid.iter().map(|p| p.g).collect();
    let last3 = &grid[grid.len() - 3..];
    let points: Vec<(f64, f64)> = last3.iter().map(|p| (1.0 / p.n as f64, p.g)).collect();
    let weights = lagrange_weights_at_zero(&points);
    let g_infinity: f64 = weights.iter().zip(last3).map(|(w, p)| w * p.g).sum();
    let g_infinity_stderr: f64 = weights
        .iter()
        .zip(last3)
        .map(|(w, p)| (w * p.g_stderr).powi(2))
        .sum::<f64>()
        .sqrt();

    let diffs: Vec<f64> = g_values.windows(2).map(|w| w[1] - w[0]).collect();
    let monotone = diffs.iter().all(|&d| d >= 0.0) || diffs.iter().all(|&d| d <= 0.0);
    let spread = {
        let max = g_values.iter().cloned().fold(f64::MIN, f64::max);
        let min = g_values.iter().cloned().fold(f64::MAX, f64::min);
        (max - min) / g_infinity.abs().max(1e-12)
    };
    if !monotone && spread > 0.5 {
        return Err(Error::ExtrapolationDiverged { values: g_values });
    }

    let l_raw = (gap * g_infinity).exp();
    let l = l_raw.clamp(0.0, 1.0);
    let l_stderr = l * gap * g_infinity_stderr;
    Ok(LimitFactorEstimate {
        l,
        l_stderr,
        g_infinity,
        g_infinity_stderr,
        grid,
    })
}

/// Lagrange interpolation weights for evaluating at zero the polynomial
/// through the given abscissas.
fn lagrange_weights_at_zero(points: &[(f64, f64)]) -> Vec<f64> {
    let n = points.len();
    (0..n)
        .map(|i| {
            let (hi, _) = points[i];
            let mut w = 1.0;
            for (j, &(hj, _)) in points.iter().enumerate() {
                if j != i {
                    w *= hj / (hj - hi);
                }
            }
            w
        })
        .collect()
}
