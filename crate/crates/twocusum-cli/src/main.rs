//! Command-line interface for the two-sided CUSUM toolkit: calibration,
//! bound tables, Monte Carlo studies, threshold design search, and
//! streaming detection on observation logs.
//!
//! Exit codes are a stable contract: 0 success (including a detect alarm),
//! 1 end of stream without an alarm, 2 usage or parse error, 3 infeasible
//! design constraint.

mod config;
mod detect;
mod report;

use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use twocusum::analytic::{corollary_bounds, harmonic_mean_expectation, one_sided_expectation};
use twocusum::design::{calibrate_harmonic, calibrate_one_sided, search_best_rule, SearchMode};
use twocusum::sim::{estimate_stopping_expectation, Scenario};
use twocusum::types::Measure;
use twocusum::Error;

use config::{Overrides, RunConfig};
use detect::DetectOutcome;
use report::{
    BoundsReport, BracketTable, CalibrateReport, CalibratedRule, DetectReport, Report,
    SearchReport, SimulateReport,
};

/// CLI-level failure with its exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad arguments, bad config, or unreadable/malformed input: exit 2.
    Usage(String),
    /// The design constraint cannot be met: exit 3.
    Infeasible(String),
}

impl CliError {
    /// Library errors that reflect bad user input.
    fn from_usage(e: Error) -> CliError {
        CliError::Usage(e.to_string())
    }

    /// Library errors where infeasibility gets its own exit code.
    fn from_library(e: Error) -> CliError {
        match e {
            Error::Infeasible { .. } => CliError::Infeasible(e.to_string()),
            other => CliError::Usage(other.to_string()),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Infeasible(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Infeasible(m) => write!(f, "{m}"),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "twocusum",
    version,
    about = "Two-sided CUSUM detection of a Brownian drift change"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Thresholds meeting a false-alarm constraint, with forward checks
    Calibrate(Overrides),
    /// Closed-form expectation brackets for a threshold pair
    Bounds(Overrides),
    /// Monte Carlo estimate of the mean alarm time
    Simulate(Overrides),
    /// Run the detector over an observation log
    Detect(DetectArgs),
    /// Search for the best threshold pair under the constraint
    Search(SearchArgs),
}

#[derive(Args)]
struct DetectArgs {
    /// Observation file with header "t,x"; "-" or absent reads stdin
    input: Option<PathBuf>,
    /// Resume from a saved detector state
    #[arg(long, value_name = "FILE")]
    state_in: Option<PathBuf>,
    /// Save the detector state at exit
    #[arg(long, value_name = "FILE")]
    state_out: Option<PathBuf>,
    #[command(flatten)]
    common: Overrides,
}

#[derive(Args)]
struct SearchArgs {
    /// Candidate scoring: bound, monte-carlo, or hybrid
    #[arg(long, default_value = "bound")]
    mode: String,
    /// Monte Carlo paths per candidate evaluation
    #[arg(long, default_value_t = 10_000)]
    budget: u64,
    #[command(flatten)]
    common: Overrides,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Calibrate(args) => cmd_calibrate(&args),
        Command::Bounds(args) => cmd_bounds(&args),
        Command::Simulate(args) => cmd_simulate(&args),
        Command::Detect(args) => cmd_detect(&args),
        Command::Search(args) => cmd_search(&args),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn cmd_calibrate(args: &Overrides) -> Result<u8, CliError> {
    let config = RunConfig::resolve(args)?;
    let gamma = config.gamma()?;
    let drifts = config.drifts()?;
    let harmonic = calibrate_harmonic(drifts, gamma).map_err(CliError::from_library)?;
    let forward = harmonic_mean_expectation(harmonic.nu1, drifts, Measure::Infinity)
        .map_err(CliError::from_usage)?;
    let one_sided = |mu: f64| -> Result<CalibratedRule, CliError> {
        let nu = calibrate_one_sided(mu, gamma).map_err(CliError::from_library)?;
        let e_inf_forward = one_sided_expectation(nu, mu).map_err(CliError::from_usage)?;
        Ok(CalibratedRule { nu, e_inf_forward })
    };
    let result = CalibrateReport {
        gamma,
        harmonic: CalibratedRule {
            nu: harmonic.nu1,
            e_inf_forward: forward,
        },
        one_sided_positive: one_sided(config.mu1)?,
        one_sided_negative: one_sided(config.mu2)?,
    };
    Report::new(config, result).emit(args.out.as_deref())?;
    Ok(0)
}

fn cmd_bounds(args: &Overrides) -> Result<u8, CliError> {
    let config = RunConfig::resolve(args)?;
    let thresholds = config.thresholds()?;
    let drifts = config.drifts()?;
    let bracket = |measure| {
        corollary_bounds(thresholds, drifts, measure)
            .map(Into::into)
            .map_err(CliError::from_usage)
    };
    let infinity = bracket(Measure::Infinity)?;
    let positive: report::BracketRow = bracket(Measure::PostChangePositive)?;
    let negative: report::BracketRow = bracket(Measure::PostChangeNegative)?;
    let result = BoundsReport {
        rule_class: thresholds.classify(),
        jl_upper_bound: positive.upper.max(negative.upper),
        brackets: BracketTable {
            infinity,
            post_change_positive: positive,
            post_change_negative: negative,
        },
    };
    Report::new(config, result).emit(args.out.as_deref())?;
    Ok(0)
}

fn cmd_simulate(args: &Overrides) -> Result<u8, CliError> {
    let mut config = RunConfig::resolve(args)?;
    let thresholds = config.thresholds()?;
    let drifts = config.drifts()?;
    config.resolve_t_max()?;
    let scenario = Scenario::new(
        config.measure,
        drifts,
        config.tau,
        config.dt,
        config.t_max.expect("t_max resolved above"),
        config.seed,
    )
    .map_err(CliError::from_usage)?;
    let estimate = estimate_stopping_expectation(&scenario, thresholds, config.n_paths)
        .map_err(CliError::from_usage)?;
    let result = SimulateReport {
        thresholds,
        warning_status: estimate.truncation_warning as u8,
        estimate,
    };
    Report::new(config, result).emit(args.out.as_deref())?;
    Ok(0)
}

fn cmd_search(args: &SearchArgs) -> Result<u8, CliError> {
    let config = RunConfig::resolve(&args.common)?;
    let gamma = config.gamma()?;
    let drifts = config.drifts()?;
    let mode: SearchMode = args.mode.parse().map_err(CliError::Usage)?;
    let design = search_best_rule(drifts, gamma, mode, args.budget, config.seed)
        .map_err(CliError::from_library)?;
    let result = SearchReport {
        mode: mode.to_string(),
        budget: args.budget,
        design,
    };
    Report::new(config, result).emit(args.common.out.as_deref())?;
    Ok(0)
}

fn cmd_detect(args: &DetectArgs) -> Result<u8, CliError> {
    let config = RunConfig::resolve(&args.common)?;
    let thresholds = config.thresholds()?;
    let drifts = config.drifts()?;
    let resumed = match &args.state_in {
        Some(path) => Some(detect::load_state(path)?),
        None => None,
    };

    let outcome = match &args.input {
        Some(path) if path.as_os_str() != "-" => {
            let file = File::open(path)
                .map_err(|e| CliError::Usage(format!("cannot open {}: {e}", path.display())))?;
            detect::run_detect(BufReader::new(file), thresholds, drifts, resumed)?
        }
        _ => {
            let stdin = std::io::stdin();
            detect::run_detect(stdin.lock(), thresholds, drifts, resumed)?
        }
    };

    match outcome {
        DetectOutcome::Alarm(event, state) => {
            println!(
                "alarm = {{ time = {:?}, side = {:?}, overshoot = {:?}, y_plus = {:?}, y_minus = {:?} }}",
                event.time, event.side, event.overshoot, event.y_plus, event.y_minus
            );
            if let Some(path) = &args.state_out {
                detect::save_state(path, &state)?;
            }
            if args.common.out.is_some() {
                let result = DetectReport {
                    alarm: true,
                    event: Some(event),
                    summary: None,
                };
                Report::new(config, result).emit(args.common.out.as_deref())?;
            }
            Ok(0)
        }
        DetectOutcome::EndOfStream(summary, state) => {
            println!(
                "no-alarm = {{ rows = {}, t_last = {:?}, y_plus = {:?}, y_minus = {:?} }}",
                summary.rows, summary.t_last, summary.y_plus, summary.y_minus
            );
            if let Some(path) = &args.state_out {
                detect::save_state(path, &state)?;
            }
            if args.common.out.is_some() {
                let result = DetectReport {
                    alarm: false,
                    event: None,
                    summary: Some(summary),
                };
                Report::new(config, result).emit(args.common.out.as_deref())?;
            }
            Ok(1)
        }
    }
}
