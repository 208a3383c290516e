use nested_iv::estimators::{EstimateOptions, Estimand, Method};
use nested_iv::sim::{
    self, EstimationScenario, OutcomeKind, Stratum, StudyOptions, TestingScenario,
    NOMINAL_SWITCHER_SHARE,
};
use nested_iv::InstrumentCode;

#[test]
fn treatment_follows_code_and_stratum() {
    assert_eq!(Stratum::Aco.treatment(InstrumentCode::ZERO_B), 0);
    assert_eq!(Stratum::Aco.treatment(InstrumentCode::ONE_A), 1);
    for code in InstrumentCode::ALL {
        assert_eq!(Stratum::Aat.treatment(code), 1);
        assert_eq!(Stratum::Ant.treatment(code), 0);
    }
    // Switchers comply under version b only.
    for s in [Stratum::Sw1, Stratum::Sw2] {
        let d = s.potential_d();
        assert_eq!(d[1], d[0]);
        assert_eq!((d[2], d[3]), (0, 1));
    }
}

#[test]
fn estimation_design_switcher_shares() {
    for (cell, &nominal) in NOMINAL_SWITCHER_SHARE.iter().enumerate() {
        let s = EstimationScenario::grid(1_000_000, cell, [2.0, 2.0, 2.0], OutcomeKind::Continuous, 3);
        let data = sim::gen_estimation_data(&s).unwrap();
        let share = data.latent.strata.iter().filter(|s| s.is_switcher()).count() as f64 / 1e6;
        assert!((share - nominal).abs() <= 0.01, "cell {cell}: {share} vs {nominal}");
    }
}

#[test]
fn testing_design_splits_a_fixed_pool() {
    let mut pools = Vec::new();
    for alpha in [0.1, 0.4, 0.9] {
        let s = TestingScenario::new(400_000, alpha, [1.0, 2.0, 2.0], 5);
        let data = sim::gen_testing_data(&s).unwrap();
        let n = data.latent.strata.len() as f64;
        let sw = data.latent.strata.iter().filter(|s| s.is_switcher()).count() as f64 / n;
        let aco = data.latent.strata.iter().filter(|&&s| s == Stratum::Aco).count() as f64 / n;
        assert!((sw - (1.0 - alpha) * (sw + aco)).abs() < 0.005, "alpha {alpha}");
        pools.push(sw + aco);
    }
    let spread = pools.iter().cloned().fold(f64::MIN, f64::max) - pools.iter().cloned().fold(f64::MAX, f64::min);
    assert!(spread < 0.005, "{pools:?}");
}

#[test]
fn null_oracles_agree_across_strata() {
    let s = TestingScenario::new(1000, 0.6, [1.0, 2.0, 2.0], 8);
    assert!(s.is_null());
    let o = sim::testing_oracle(&s, 1_000_000);
    let gap = (o.switcher.value - o.always_complier.value).abs();
    let se = (o.switcher.mc_se.powi(2) + o.always_complier.mc_se.powi(2)).sqrt();
    assert!(gap <= 2.0 * se, "gap {gap} se {se}");
}

#[test]
fn generation_is_seed_deterministic() {
    let s = EstimationScenario::grid(500, 1, [2.0, 2.0, 2.0], OutcomeKind::Binary, 77);
    let a = sim::gen_estimation_data(&s).unwrap();
    let b = sim::gen_estimation_data(&s).unwrap();
    assert_eq!(a.table, b.table);
    let other = EstimationScenario { seed: 78, ..s };
    assert_ne!(sim::gen_estimation_data(&other).unwrap().table, a.table);
    assert!(a.table.y().iter().all(|&y| y == 0.0 || y == 1.0));
}

#[test]
fn monte_carlo_rows_are_reproducible() {
    let s = EstimationScenario::grid(800, 3, [2.0, 2.0, 2.0], OutcomeKind::Continuous, 1);
    let opts = StudyOptions { seed: 42, ..StudyOptions::default() };
    let a = sim::run_monte_carlo(&s, 8, Estimand::Swate, Method::EstEq, 1.557, &opts);
    let b = sim::run_monte_carlo(&s, 8, Estimand::Swate, Method::EstEq, 1.557, &opts);
    assert_eq!(a, b);
    assert!((0.0..=1.0).contains(&a.coverage));
    assert!((0.0..=1.0).contains(&a.acceptance_rate));
}

#[test]
fn single_replicate_coverage_is_binary() {
    let s = EstimationScenario::grid(600, 3, [2.0, 2.0, 2.0], OutcomeKind::Continuous, 2);
    let opts = StudyOptions {
        seed: 3,
        estimate: EstimateOptions::default(),
        ..StudyOptions::default()
    };
    let row = sim::run_monte_carlo(&s, 1, Estimand::Swate, Method::Wald, 1.557, &opts);
    assert!(row.coverage == 0.0 || row.coverage == 1.0);
}

#[test]
fn plco_fixture_has_requested_cells_and_offset() {
    let data = sim::gen_plco_like_sized([300, 310, 320, 330], 4).unwrap();
    assert_eq!(data.table.cell_counts(), [300, 310, 320, 330]);
    assert!(data.table.offset().is_some());
    assert!(data.table.y().iter().all(|&y| y >= 0.0 && y.fract() == 0.0));
}

#[test]
fn winsorizing_clamps_both_tails() {
    let mut v: Vec<f64> = (1..=100).map(f64::from).collect();
    v[99] = 1e9;
    let w = sim::winsorized_mean(&v, 0.05, 0.95);
    assert!(w < 60.0 && w > 40.0, "{w}");
}
