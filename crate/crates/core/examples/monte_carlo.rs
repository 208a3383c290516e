//! A small Monte Carlo study in the layout of a simulation results table:
//! truth, mean estimate, bias, winsorized SE, coverage and acceptance.
//!
//!     cargo run --release --example monte_carlo

use nested_iv::sim::{self, EstimationScenario, OutcomeKind, StudyOptions};
use nested_iv::{Estimand, Method};

fn main() {
    let opts = StudyOptions { seed: 5, ..StudyOptions::default() };
    let methods = [
        (Estimand::Swate, Method::Wald),
        (Estimand::Swate, Method::OneStep),
        (Estimand::Swate, Method::EstEq),
    ];
    println!("{:<46} {:<8} {:>6} {:>7} {:>7} {:>6} {:>6} {:>6}", "scenario", "method", "truth", "mean", "bias", "se", "cover", "accept");
    for cell in [0, 3] {
        let s = EstimationScenario::grid(1000, cell, [2.0, 2.0, 2.0], OutcomeKind::Continuous, 5);
        let truth = sim::true_swate_oracle(&s, 500_000).value;
        for row in sim::run_monte_carlo_multi(&s, 100, &methods, &[truth; 3], &opts) {
            println!(
                "{:<46} {:<8} {:>6.3} {:>7.3} {:>7.3} {:>6.3} {:>6.3} {:>6.3}",
                row.scenario,
                format!("{:?}", row.method),
                row.truth,
                row.mean_estimate,
                row.bias,
                row.se_winsorized_mean,
                row.coverage,
                row.acceptance_rate
            );
        }
    }
}
