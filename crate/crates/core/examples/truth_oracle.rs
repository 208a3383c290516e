//! Brute-force truths from the retained potential outcomes, with the latent
//! strata shares that drive them.
//!
//!     cargo run --release --example truth_oracle

use nested_iv::sim::{self, EstimationScenario, OutcomeKind, Stratum, NOMINAL_SWITCHER_SHARE, REFERENCE_TRUTH_222};

fn main() {
    for cell in 0..4 {
        let s = EstimationScenario::grid(1000, cell, [2.0, 2.0, 2.0], OutcomeKind::Continuous, 1);
        let sw = sim::true_swate_oracle(&s, 1_000_000);
        let aco = sim::true_acoate_oracle(&s, 1_000_000);
        println!(
            "nominal {:>3.0}% switchers: share {:.3}, switcher effect {:.3} ± {:.3} (reference {}), always-complier effect {:.3}",
            100.0 * NOMINAL_SWITCHER_SHARE[cell],
            sw.share,
            sw.value,
            sw.mc_se,
            REFERENCE_TRUTH_222[cell],
            aco.value
        );
    }
    let s = EstimationScenario::grid(1000, 3, [2.0, 2.0, 2.0], OutcomeKind::Continuous, 1);
    let shares = sim::estimation_strata_shares(&s, 1_000_000);
    for (st, p) in Stratum::ALL.iter().zip(shares) {
        println!("  {st:?}: {p:.3}");
    }
}
