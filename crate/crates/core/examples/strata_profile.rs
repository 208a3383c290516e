//! Who are the switchers? Covariate means among switchers and always-compliers
//! on the synthetic screening-trial fixture, with a Poisson outcome model for
//! incidence counts over follow-up time.
//!
//!     cargo run --release --example strata_profile

use nested_iv::config::NuisanceSection;
use nested_iv::estimators::{estimate, strata_profile};
use nested_iv::sim;
use nested_iv::{fit_nuisances, make_folds, EstimateOptions, Estimand, Method};

fn main() -> nested_iv::Result<()> {
    let table = sim::gen_plco_like(2)?.table;
    println!("{} participants, cells {:?}", table.n(), table.cell_counts());
    let spec = NuisanceSection::default().spec_for(Some(&table));
    let folds = make_folds(table.z(), 5, 2)?;
    let nuis = fit_nuisances(&table, &folds, &spec)?;

    let p = strata_profile(&table, &nuis)?;
    println!(
        "adjusted compliance: stage a {:.3}, stage b {:.3}; switcher mass {:.3}",
        p.mean_eta_a, p.mean_eta_b, p.switcher_mass
    );
    println!("{:<14} {:>9} {:>9} {:>9}", "feature", "switcher", "always", "overall");
    for r in &p.rows {
        println!("{:<14} {:>9.3} {:>9.3} {:>9.3}", r.name, r.switcher_mean, r.always_complier_mean, r.overall_mean);
    }
    let sw = estimate(&table, Some(&nuis), Estimand::Swate, Method::EstEq, &EstimateOptions::default())?;
    println!("switcher effect on incidence rate: {:.5} (se {:.5})", sw.point, sw.se);
    Ok(())
}
