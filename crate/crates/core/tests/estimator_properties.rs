use nested_iv::estimators::{
    eif_value, estimate, fold_summaries, wald, EstimateOptions, Estimand, Method, ReportFlag,
};
use nested_iv::glm::Family;
use nested_iv::homogeneity::{gradient_d, omega_hat, pointwise_contrast, ContrastId};
use nested_iv::sim::{self, EstimationScenario, OutcomeKind, TestingScenario};
use nested_iv::{fit_nuisances, make_folds, CrossFitNuisances, InstrumentCode, NuisanceSpec, ObservationTable};
use proptest::prelude::*;

fn estimation_table(n: usize, cell: usize, seed: u64) -> ObservationTable {
    let s = EstimationScenario::grid(n, cell, [2.0, 2.0, 2.0], OutcomeKind::Continuous, seed);
    sim::gen_estimation_data(&s).unwrap().table
}

fn testing_table(n: usize, seed: u64) -> ObservationTable {
    sim::gen_testing_data(&TestingScenario::new(n, 0.6, [2.0, 3.0, 3.0], seed))
        .unwrap()
        .table
}

fn cross_fit(t: &ObservationTable, seed: u64) -> CrossFitNuisances {
    let folds = make_folds(t.z(), 5, seed).unwrap();
    fit_nuisances(t, &folds, &NuisanceSpec::glm(Family::LinearGaussian)).unwrap()
}

#[test]
fn predictions_never_see_their_own_fold() {
    let t = testing_table(1500, 4);
    let folds = make_folds(t.z(), 5, 11).unwrap();
    let spec = NuisanceSpec::glm(Family::LinearGaussian);
    let base = fit_nuisances(&t, &folds, &spec).unwrap();
    let k = 2;
    let inside = folds.rows_in(k);
    let poisoned = ObservationTable::new(
        t.covariate_names().to_vec(),
        t.z().to_vec(),
        t.x().to_vec(),
        t.d().iter().enumerate().map(|(i, &d)| if inside.contains(&i) { 1 - d } else { d }).collect(),
        t.y().iter().enumerate().map(|(i, &y)| if inside.contains(&i) { y + 1e3 } else { y }).collect(),
        None,
    )
    .unwrap();
    let after = fit_nuisances(&poisoned, &folds, &spec).unwrap();
    for &i in &inside {
        assert_eq!(base.predict_nuisance(i), after.predict_nuisance(i), "row {i}");
    }
    let outside = folds.rows_outside(k);
    let moved = outside
        .iter()
        .filter(|&&i| base.predict_nuisance(i) != after.predict_nuisance(i))
        .count();
    assert_eq!(moved, outside.len());
}

#[test]
fn estimating_equation_solves_its_own_equation() {
    for seed in 0..6 {
        let t = estimation_table(1200, (seed % 4) as usize, seed);
        let nuis = cross_fit(&t, seed);
        for estimand in [Estimand::Swate, Estimand::Acoate, Estimand::Coate] {
            let w = estimand.weights();
            for f in fold_summaries(&t, &nuis, estimand) {
                let psi = f.estimating_equation();
                let mean: f64 = f
                    .rows
                    .iter()
                    .map(|&i| {
                        let r = nuis.predict_nuisance(i);
                        eif_value(w, t.z()[i], t.y()[i], f64::from(t.d()[i]), &r, psi, f.omega).unwrap()
                    })
                    .sum::<f64>()
                    / f.rows.len() as f64;
                assert!(mean.abs() < 1e-10, "seed {seed} {estimand:?}: {mean}");
            }
        }
    }
}

#[test]
fn one_step_and_ee_share_the_influence_variance_scale() {
    let t = estimation_table(4000, 3, 8);
    let nuis = cross_fit(&t, 8);
    let o = EstimateOptions::default();
    let os = estimate(&t, Some(&nuis), Estimand::Swate, Method::OneStep, &o).unwrap();
    let ee = estimate(&t, Some(&nuis), Estimand::Swate, Method::EstEq, &o).unwrap();
    assert!((os.se / ee.se - 1.0).abs() < 0.05, "{} vs {}", os.se, ee.se);
    assert_eq!(os.fold_estimates.len(), 5);
    assert!(os.ci_lo <= os.point && os.point <= os.ci_hi);
}

/// 400 rows per cell; `treated[c]` of them take treatment, outcome is 2d plus a row pattern.
fn cell_table(treated: [usize; 4]) -> ObservationTable {
    let (mut z, mut d, mut y) = (Vec::new(), Vec::new(), Vec::new());
    for (c, &k) in treated.iter().enumerate() {
        for i in 0..400 {
            let di = u8::from(i < k);
            z.push(InstrumentCode::from_index(c));
            d.push(di);
            y.push(2.0 * f64::from(di) + (i % 7) as f64 * 0.1);
        }
    }
    ObservationTable::from_rows(0, z, vec![], d, y, None).unwrap()
}

#[test]
fn weak_nested_instrument_is_flagged_not_fatal() {
    let t = cell_table([0, 200, 0, 204]);
    let o = EstimateOptions { boot_reps: 50, ..Default::default() };
    let r = wald(&t, Estimand::Swate, &o).unwrap();
    assert!(r.has(ReportFlag::WeakNestedIV));
    assert!((r.denom - 0.01).abs() < 1e-12);
    assert!(r.point.is_finite() && r.se.is_finite());
}

#[test]
fn equal_stage_compliance_is_degenerate() {
    let t = cell_table([0, 200, 0, 200]);
    let err = wald(&t, Estimand::Swate, &EstimateOptions::default()).unwrap_err();
    assert!(err.is_degenerate(), "{err}");
}

#[test]
fn contrast_one_is_the_difference_of_two_and_three() {
    let t = testing_table(2000, 21);
    let nuis = cross_fit(&t, 21);
    let [p1, p2, p3] = ContrastId::ALL.map(|j| pointwise_contrast(&t, &nuis, j, 0.01));
    for i in 0..t.n() {
        assert_eq!(p1.valid[i], p2.valid[i]);
        if p1.valid[i] {
            assert_eq!(p1.theta[i], p2.theta[i] - p3.theta[i]);
            assert_eq!(p1.gradient[i], p2.gradient[i] - p3.gradient[i]);
        }
    }
}

#[test]
fn switcher_gradient_is_the_influence_bracket() {
    let t = testing_table(500, 5);
    let nuis = cross_fit(&t, 5);
    let w = Estimand::Swate.weights();
    use nested_iv::data::Stage::{A, B};
    for i in 0..t.n() {
        let r = nuis.predict_nuisance(i);
        let omega = r.eta(B) - r.eta(A);
        if omega.abs() < 0.01 {
            continue;
        }
        let psi = (r.delta(B) - r.delta(A)) / omega;
        let (y, d) = (t.y()[i], f64::from(t.d()[i]));
        let g = gradient_d(2, t.z()[i], y, d, &r, 0.01).unwrap();
        let e = eif_value(w, t.z()[i], y, d, &r, psi, omega).unwrap();
        assert!((g - e).abs() <= 1e-12 * (1.0 + e.abs()));
    }
}

#[test]
fn integrated_contrast_at_grid_extremes() {
    let t = testing_table(1500, 13);
    let nuis = cross_fit(&t, 13);
    let dx = t.dx();
    let lo = vec![f64::NEG_INFINITY; dx];
    let hi = vec![f64::INFINITY; dx];
    for j in ContrastId::ALL {
        assert_eq!(omega_hat(&t, &nuis, j, &lo, 0.01).unwrap(), 0.0);
        let pc = pointwise_contrast(&t, &nuis, j, 0.01);
        let folds = nuis.folds();
        let mut acc = 0.0;
        for k in 0..folds.k() {
            let rows: Vec<usize> = folds.rows_in(k).into_iter().filter(|&i| pc.valid[i]).collect();
            acc += rows.iter().map(|&i| pc.theta[i] + pc.gradient[i]).sum::<f64>() / rows.len() as f64;
        }
        let full = omega_hat(&t, &nuis, j, &hi, 0.01).unwrap();
        assert!((full - acc / folds.k() as f64).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn location_shift_leaves_points_unchanged(seed in 0u64..1000, shift in -50.0f64..50.0) {
        let t = estimation_table(600, 3, seed);
        let moved = t.map_outcome(|y| y + shift).unwrap();
        let folds = make_folds(t.z(), 5, seed).unwrap();
        let spec = NuisanceSpec::glm(Family::LinearGaussian);
        let a = fit_nuisances(&t, &folds, &spec).unwrap();
        let b = fit_nuisances(&moved, &folds, &spec).unwrap();
        let o = EstimateOptions::default();
        for m in [Method::Wald, Method::OneStep, Method::EstEq] {
            for e in [Estimand::Swate, Estimand::Acoate] {
                let p = estimate(&t, Some(&a), e, m, &o).unwrap().point;
                let q = estimate(&moved, Some(&b), e, m, &o).unwrap().point;
                prop_assert!((p - q).abs() <= 1e-9 * (1.0 + p.abs()), "{m:?} {e:?}: {p} vs {q}");
            }
        }
    }

    #[test]
    fn fold_sizes_are_balanced_within_each_cell(seed in any::<u64>(), k in 2usize..8) {
        let t = estimation_table(400, 3, seed % 50);
        let f = make_folds(t.z(), k, seed).unwrap();
        for code in InstrumentCode::ALL {
            let mut per = vec![0usize; k];
            for i in 0..t.n() {
                if t.z()[i] == code {
                    per[f.fold_of(i)] += 1;
                }
            }
            let (lo, hi) = (per.iter().min().unwrap(), per.iter().max().unwrap());
            prop_assert!(hi - lo <= 1);
        }
    }
}
