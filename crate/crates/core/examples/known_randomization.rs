//! When instrument assignment probabilities are known by design, plug them in
//! instead of fitting them. The estimating equation then stays consistent
//! even with an intercept-only outcome model.
//!
//!     cargo run --release --example known_randomization

use std::sync::Arc;

use nested_iv::glm::{Family, LearnerSpec};
use nested_iv::nuisance::PiSource;
use nested_iv::sim::{self, EstimationScenario, OutcomeKind};
use nested_iv::{estimators, fit_nuisances, make_folds, EstimateOptions, Estimand, Method, NuisanceSpec};

fn main() -> nested_iv::Result<()> {
    let s = EstimationScenario::grid(10_000, 3, [2.0, 2.0, 2.0], OutcomeKind::Continuous, 6);
    let table = sim::gen_estimation_data(&s)?.table;
    let folds = make_folds(table.z(), 5, 6)?;
    let specs = [
        ("fitted GLMs", NuisanceSpec::glm(Family::LinearGaussian)),
        (
            "known pi, constant outcome model",
            NuisanceSpec {
                pi: PiSource::Known(Arc::new(sim::estimation_pi)),
                mu_y: LearnerSpec::gaussian().intercept_only(),
                ..NuisanceSpec::glm(Family::LinearGaussian)
            },
        ),
    ];
    for (label, spec) in specs {
        let nuis = fit_nuisances(&table, &folds, &spec)?;
        let r = estimators::estimate(&table, Some(&nuis), Estimand::Swate, Method::EstEq, &EstimateOptions::default())?;
        println!("{label:<34} {:.3} (se {:.3})", r.point, r.se);
    }
    println!("{:<34} {:.3}", "oracle", sim::true_swate_oracle(&s, 1_000_000).value);
    Ok(())
}
