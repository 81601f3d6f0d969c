//! Streaming detection on delimited observation logs.
//!
//! Input is header-bearing text with columns `t,x`: absolute time and the
//! observed level. Increments are taken as differences between consecutive
//! rows, so irregular spacing is fine and adding a constant to the whole
//! series changes nothing. The first row of a fresh run is the reference
//! point; with a resumed state the first row continues from the saved
//! trajectory instead.

use std::io::BufRead;
use std::path::Path;

use twocusum::engine::{check_stop, init_state, update, CusumState};
use twocusum::types::{DriftPair, ThresholdPair};

use crate::report::{AlarmRecord, NoAlarmSummary};
use crate::CliError;

/// Outcome of a detect run over one input stream.
#[derive(Debug)]
pub enum DetectOutcome {
    Alarm(AlarmRecord, CusumState),
    EndOfStream(NoAlarmSummary, CusumState),
}

fn malformed(line: usize, message: impl Into<String>) -> CliError {
    CliError::Usage(format!("line {line}: {}", message.into()))
}

fn parse_row(line: usize, text: &str) -> Result<(f64, f64), CliError> {
    let mut parts = text.split(',');
    let t_text = parts.next().unwrap_or("").trim();
    let x_text = parts
        .next()
        .ok_or_else(|| malformed(line, "expected two comma-separated columns"))?
        .trim();
    if parts.next().is_some() {
        return Err(malformed(line, "expected exactly two columns"));
    }
    let t: f64 = t_text
        .parse()
        .map_err(|_| malformed(line, format!("cannot parse time {t_text:?}")))?;
    let x: f64 = x_text
        .parse()
        .map_err(|_| malformed(line, format!("cannot parse value {x_text:?}")))?;
    if !t.is_finite() || !x.is_finite() {
        return Err(malformed(line, "non-finite observation"));
    }
    Ok((t, x))
}

/// Runs the detector over `reader`. `resumed` carries a previously saved
/// state; the last observed level is implied by that state, so monitoring
/// continues seamlessly across restarts.
pub fn run_detect<R: BufRead>(
    reader: R,
    thresholds: ThresholdPair,
    drifts: DriftPair,
    resumed: Option<CusumState>,
) -> Result<DetectOutcome, CliError> {
    // The statistics keep the identity u+ = x - (mu1/2) t in the raw input
    // coordinates (the reference row seeds u accordingly), so a saved state
    // alone determines the level the stream left off at.
    let (mut state, mut last): (CusumState, Option<(f64, f64)>) = match resumed {
        Some(state) => {
            let x_prev = state.u_plus + 0.5 * drifts.mu1 * state.t;
            (state, Some((state.t, x_prev)))
        }
        None => (init_state(), None),
    };
    let mut rows = 0u64;
    let mut header_seen = false;

    for (index, line) in reader.lines().enumerate() {
        let line_number = index + 1;
        let text = line.map_err(|e| malformed(line_number, format!("cannot read input: {e}")))?;
        let trimmed = text.trim();
        if trimmed.is_empty() {
            continue;
        }
        if !header_seen {
            let mut columns = trimmed.split(',').map(str::trim);
            if !(columns.next() == Some("t")
                && columns.next() == Some("x")
                && columns.next().is_none())
            {
                return Err(malformed(line_number, "expected header \"t,x\""));
            }
            header_seen = true;
            continue;
        }

        let (t, x) = parse_row(line_number, trimmed)?;
        rows += 1;
        match last {
            None => {
                // Reference point: monitoring starts here with both
                // reflected statistics at zero, and u anchored so that
                // u+ = x - (mu1/2) t holds in raw coordinates.
                let u_plus = x - 0.5 * drifts.mu1 * t;
                let u_minus = -x - 0.5 * drifts.mu2 * t;
                state = CusumState {
                    u_plus,
                    u_minus,
                    min_plus: u_plus,
                    min_minus: u_minus,
                    y_plus: 0.0,
                    y_minus: 0.0,
                    t,
                };
            }
            Some((t_prev, x_prev)) => {
                let dt = t - t_prev;
                if dt <= 0.0 {
                    return Err(malformed(
                        line_number,
                        format!("time must increase (got {t} after {t_prev})"),
                    ));
                }
                state = update(&state, x - x_prev, dt, drifts)
                    .map_err(|e| malformed(line_number, e.to_string()))?;
                let report = check_stop(&state, thresholds);
                if report.stopped {
                    return Ok(DetectOutcome::Alarm(
                        resolve_alarm(&state, thresholds),
                        state,
                    ));
                }
            }
        }
        last = Some((t, x));
    }

    if !header_seen {
        return Err(CliError::Usage(
            "empty input: expected header \"t,x\"".into(),
        ));
    }
    Ok(DetectOutcome::EndOfStream(
        NoAlarmSummary {
            rows,
            t_last: state.t,
            y_plus: state.y_plus,
            y_minus: state.y_minus,
        },
        state,
    ))
}

/// Maps the engine's report to the CLI alarm policy: when both sides cross
/// on the same update the larger overshoot wins, and an exact tie goes to
/// the positive side.
fn resolve_alarm(state: &CusumState, thresholds: ThresholdPair) -> AlarmRecord {
    let over_plus = state.y_plus - thresholds.nu1;
    let over_minus = state.y_minus - thresholds.nu2;
    let (side, overshoot) = if over_plus >= 0.0 && over_plus >= over_minus {
        ("positive", over_plus)
    } else {
        ("negative", over_minus)
    };
    AlarmRecord {
        time: state.t,
        side: side.to_string(),
        overshoot,
        y_plus: state.y_plus,
        y_minus: state.y_minus,
    }
}

/// Reads a saved detector state and checks its internal consistency.
pub fn load_state(path: &Path) -> Result<CusumState, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read state {}: {e}", path.display())))?;
    let state: CusumState = toml::from_str(&text)
        .map_err(|e| CliError::Usage(format!("invalid state {}: {e}", path.display())))?;
    let consistent =
        |y: f64, u: f64, min: f64| min <= u && (y - (u - min)).abs() <= 1e-9 * (1.0 + y.abs());
    if !(state.t >= 0.0
        && consistent(state.y_plus, state.u_plus, state.min_plus)
        && consistent(state.y_minus, state.u_minus, state.min_minus))
    {
        return Err(CliError::Usage(format!(
            "inconsistent state {}: reflected statistics do not match their minima",
            path.display()
        )));
    }
    Ok(state)
}

pub fn save_state(path: &Path, state: &CusumState) -> Result<(), CliError> {
    let text = toml::to_string(state)
        .map_err(|e| CliError::Usage(format!("cannot serialize state: {e}")))?;
    std::fs::write(path, text)
        .map_err(|e| CliError::Usage(format!("cannot write state {}: {e}", path.display())))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair(nu: f64) -> ThresholdPair {
        ThresholdPair::new(nu, nu).unwrap()
    }

    fn drifts() -> DriftPair {
        DriftPair::new(1.0, 1.0).unwrap()
    }

    #[test]
    fn rejects_missing_header() {
        let input = "0.0,0.0\n";
        let err = run_detect(input.as_bytes(), pair(1.0), drifts(), None).unwrap_err();
        assert!(err.to_string().contains("header"), "{err}");
    }

    #[test]
    fn reports_malformed_rows_with_line_numbers() {
        let input = "t,x\n0.0,0.0\n0.1,oops\n";
        let err = run_detect(input.as_bytes(), pair(1.0), drifts(), None).unwrap_err();
        assert!(err.to_string().starts_with("line 3:"), "{err}");
    }

    #[test]
    fn rejects_non_increasing_time() {
        let input = "t,x\n1.0,0.0\n1.0,0.5\n";
        let err = run_detect(input.as_bytes(), pair(1.0), drifts(), None).unwrap_err();
        assert!(err.to_string().contains("time must increase"), "{err}");
    }

    #[test]
    fn level_shift_is_invisible() {
        let base = "t,x\n0.0,0.0\n0.5,0.1\n1.0,-0.2\n";
        let shifted = "t,x\n0.0,100.0\n0.5,100.1\n1.0,99.8\n";
        let a = run_detect(base.as_bytes(), pair(1.0), drifts(), None).unwrap();
        let b = run_detect(shifted.as_bytes(), pair(1.0), drifts(), None).unwrap();
        match (a, b) {
            (DetectOutcome::EndOfStream(_, sa), DetectOutcome::EndOfStream(_, sb)) => {
                // The shift cancels in the increments up to rounding in the
                // raw differences.
                assert!((sa.y_plus - sb.y_plus).abs() < 1e-12);
                assert!((sa.y_minus - sb.y_minus).abs() < 1e-12);
            }
            _ => panic!("expected both streams to run out"),
        }
    }

    #[test]
    fn alarm_fires_on_a_strong_ramp() {
        let input = "t,x\n0.0,0.0\n0.1,0.6\n0.2,1.2\n0.3,1.8\n";
        match run_detect(input.as_bytes(), pair(1.0), drifts(), None).unwrap() {
            DetectOutcome::Alarm(record, _) => {
                assert_eq!(record.side, "positive");
                assert!(record.overshoot >= 0.0);
            }
            DetectOutcome::EndOfStream(..) => panic!("expected an alarm"),
        }
    }

    #[test]
    fn resume_matches_the_unbroken_stream() {
        let full = "t,x\n0.0,0.0\n0.5,0.2\n1.0,0.1\n1.5,0.4\n2.0,0.2\n";
        let head = "t,x\n0.0,0.0\n0.5,0.2\n1.0,0.1\n";
        let tail = "t,x\n1.5,0.4\n2.0,0.2\n";
        let unbroken = match run_detect(full.as_bytes(), pair(5.0), drifts(), None).unwrap() {
            DetectOutcome::EndOfStream(_, state) => state,
            _ => panic!("unexpected alarm"),
        };
        let saved = match run_detect(head.as_bytes(), pair(5.0), drifts(), None).unwrap() {
            DetectOutcome::EndOfStream(_, state) => state,
            _ => panic!("unexpected alarm"),
        };
        let resumed = match run_detect(tail.as_bytes(), pair(5.0), drifts(), Some(saved)).unwrap() {
            DetectOutcome::EndOfStream(_, state) => state,
            _ => panic!("unexpected alarm"),
        };
        assert!((resumed.y_plus - unbroken.y_plus).abs() < 1e-12);
        assert!((resumed.y_minus - unbroken.y_minus).abs() < 1e-12);
        assert!((resumed.t - unbroken.t).abs() < 1e-12);
    }
}
