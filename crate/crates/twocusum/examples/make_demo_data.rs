//! Regenerates the bundled demo sensor log:
//!
//! ```text
//! cargo run -p twocusum --example make_demo_data > data/demo_sensor.csv
//! ```
//!
//! The log drifts nowhere for the first five seconds, then picks up the
//! negative post-change drift, so a detector tuned to drifts (1.0, 1.5)
//! should raise a negative-side alarm shortly after t = 5.

use twocusum::sim::{simulate_path, Scenario};
use twocusum::types::{DriftPair, Measure};

fn main() {
    let drifts = DriftPair::new(1.0, 1.5).expect("valid drifts");
    let scenario = Scenario::new(Measure::PostChangeNegative, drifts, 5.0, 0.01, 12.0, 7)
        .expect("valid scenario");
    println!("t,x");
    println!("0.00,0.000000");
    let mut x = 0.0;
    for (step, (d_xi, dt)) in simulate_path(&scenario).into_iter().enumerate() {
        x += d_xi;
        let t = (step + 1) as f64 * dt;
        println!("{t:.2},{x:.6}");
    }
}
