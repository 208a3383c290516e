//! Cross-fit nuisances once and report every estimator for every estimand.
//!
//!     cargo run --release --example estimate_switcher_effect

use nested_iv::glm::Family;
use nested_iv::sim::{self, EstimationScenario, OutcomeKind};
use nested_iv::{estimators, fit_nuisances, make_folds, validate, EstimateOptions, Estimand, Method, NuisanceSpec};

fn main() -> nested_iv::Result<()> {
    let scenario = EstimationScenario::grid(5000, 3, [2.0, 2.0, 2.0], OutcomeKind::Continuous, 11);
    let table = sim::gen_estimation_data(&scenario)?.table;

    let report = validate(&table, 10);
    report.require_estimable()?;
    println!("cells {:?}, raw compliance a={:.3} b={:.3}", report.cell_counts, report.compliance_a, report.compliance_b);

    let folds = make_folds(table.z(), 5, 11)?;
    let nuis = fit_nuisances(&table, &folds, &NuisanceSpec::glm(Family::LinearGaussian))?;
    let opts = EstimateOptions::default();

    println!("{:<8} {:<8} {:>8} {:>7} {:>18}", "estimand", "method", "point", "se", "95% ci");
    for estimand in [Estimand::Swate, Estimand::Acoate, Estimand::Coate] {
        for method in [Method::Wald, Method::OneStep, Method::EstEq] {
            let r = estimators::estimate(&table, Some(&nuis), estimand, method, &opts)?;
            println!(
                "{:<8} {:<8} {:>8.3} {:>7.3}   [{:>6.3}, {:>6.3}] {:?}",
                format!("{estimand:?}"),
                format!("{method:?}"),
                r.point,
                r.se,
                r.ci_lo,
                r.ci_hi,
                r.flags
            );
        }
    }
    let truth = sim::true_swate_oracle(&scenario, 1_000_000);
    println!("oracle switcher effect {:.3} (mc se {:.3})", truth.value, truth.mc_se);
    Ok(())
}
