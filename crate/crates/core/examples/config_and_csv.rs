//! Drive a run from a TOML configuration and a CSV file, the same way the
//! command-line tool does.
//!
//!     cargo run --release --example config_and_csv

use nested_iv::config::Config;
use nested_iv::sim::{self, TestingScenario};
use nested_iv::{estimators, fit_nuisances, homogeneity, make_folds, ContrastId, Estimand, Method, ObservationTable};

const CONFIG: &str = r#"
seed = 31

[nuisance]
folds = 4

[nuisance.mu_y]
use_boost = true
boost = { trees = 100, depth = 1, shrinkage = 0.1 }

[estimators]
level = 0.9

[tests]
basis = ["x1"]
"#;

fn main() -> nested_iv::Result<()> {
    let cfg = Config::from_toml_str(CONFIG)?;
    let seed = cfg.seed.unwrap_or(0);

    let dir = std::env::temp_dir().join("nested-iv-example");
    std::fs::create_dir_all(&dir).map_err(|e| nested_iv::Error::Usage(e.to_string()))?;
    let path = dir.join("trial.csv");
    sim::gen_testing_data(&TestingScenario::new(3000, 0.4, [1.0, 2.5, 2.5], seed))?
        .table
        .write_csv_path(&path)?;
    let table = ObservationTable::read_csv_path(&path)?;

    let folds = make_folds(table.z(), cfg.nuisance.folds, seed)?;
    let nuis = fit_nuisances(&table, &folds, &cfg.nuisance.spec_for(Some(&table)))?;
    let r = estimators::estimate(&table, Some(&nuis), Estimand::Swate, Method::OneStep, &cfg.estimators.options(seed))?;
    println!("switcher effect {:.3}, {:.0}% ci [{:.3}, {:.3}]", r.point, 100.0 * r.level, r.ci_lo, r.ci_hi);

    let popts = cfg.tests.projection(table.covariate_names())?;
    for j in ContrastId::ALL {
        let t = homogeneity::projection_test(&table, &nuis, j, &popts)?;
        println!("T{j} on basis (1, x1): W = {:.2}, df {}, p = {:.3}", t.statistic, t.df.unwrap_or(0), t.p_value);
    }
    Ok(())
}
