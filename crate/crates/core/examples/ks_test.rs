//! Kolmogorov-Smirnov-type homogeneity test with a Gaussian multiplier
//! critical value, plus a look at the integrated contrast it is built on.
//!
//!     cargo run --release --example ks_test

use nested_iv::glm::Family;
use nested_iv::homogeneity::{ks_test, omega_hat, KsOptions};
use nested_iv::sim::{self, TestingScenario};
use nested_iv::{fit_nuisances, make_folds, ContrastId, NuisanceSpec};

fn main() -> nested_iv::Result<()> {
    let table = sim::gen_testing_data(&TestingScenario::new(3000, 0.4, [2.0, 3.0, 3.0], 8))?.table;
    let folds = make_folds(table.z(), 5, 8)?;
    let nuis = fit_nuisances(&table, &folds, &NuisanceSpec::glm(Family::LinearGaussian))?;
    let opts = KsOptions { seed: 8, ..KsOptions::default() };
    for j in ContrastId::ALL {
        let r = ks_test(&table, &nuis, j, &opts)?;
        println!(
            "T{j}: sup stat {:.2} vs Q {:.2} -> {} (grid {} points, jitter {:e})",
            r.statistic,
            r.critical_value,
            if r.reject { "reject" } else { "keep" },
            r.curve.len(),
            r.jitter.unwrap_or(0.0)
        );
    }
    // The integrated contrast along the diagonal c = (t, t).
    let j = ContrastId::new(3)?;
    for t in [-2.0, -1.0, 0.0, 1.0, 2.0] {
        println!("  Omega3({t:+.0}, {t:+.0}) = {:+.4}", omega_hat(&table, &nuis, j, &[t, t], 0.01)?);
    }
    Ok(())
}
