//! The covariate-free Wald ratio with sandwich and bootstrap standard errors,
//! on a randomized design where it is consistent.
//!
//!     cargo run --release --example wald_bootstrap

use nested_iv::estimators::{wald, WaldSe};
use nested_iv::sim::{self, TestingScenario};
use nested_iv::{EstimateOptions, Estimand};

fn main() -> nested_iv::Result<()> {
    let s = TestingScenario::new(4000, 0.6, [1.0, 2.5, 2.5], 3);
    let table = sim::gen_testing_data(&s)?.table;
    for se in [WaldSe::Sandwich, WaldSe::Bootstrap] {
        let opts = EstimateOptions { wald_se: se, boot_reps: 400, seed: 3, ..Default::default() };
        for estimand in [Estimand::Swate, Estimand::Acoate] {
            let r = wald(&table, estimand, &opts)?;
            println!("{se:?} {estimand:?}: {:.3} (se {:.3}, denominator {:.3})", r.point, r.se, r.denom);
        }
    }
    let o = sim::testing_oracle(&s, 500_000);
    println!("truth: switchers {:.3}, always-compliers {:.3}", o.switcher.value, o.always_complier.value);
    Ok(())
}
