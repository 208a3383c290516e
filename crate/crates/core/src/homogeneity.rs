//! Tests of effect homogeneity across latent strata: a best-linear-projection
//! Wald test and a Kolmogorov-Smirnov type test, for three pairwise contrasts
//! of conditional effects.
//!
//! Contrast 1 compares always-compliers with switchers, contrast 2
//! always-compliers with (0b,1b)-compliers, contrast 3 switchers with
//! (0b,1b)-compliers.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand_distr::{Distribution, StandardNormal};
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::data::{InstrumentCode, ObservationTable};
use crate::error::{Error, Result};
use crate::linalg::{chol_jitter, min_eigenvalue, spd_inverse};
use crate::nuisance::{CrossFitNuisances, RowNuisance};
use crate::rng::{self, StreamRng};

pub const DEFAULT_DENOM_POINT_TOL: f64 = 0.01;
pub const DEFAULT_GRID_MAX: usize = 500;
pub const DEFAULT_DRAWS: usize = 2000;
pub const DEFAULT_JITTER0: f64 = 1e-10;
const GRAM_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(into = "u8")]
pub struct ContrastId(u8);

impl ContrastId {
    pub const ALL: [ContrastId; 3] = [ContrastId(1), ContrastId(2), ContrastId(3)];

    pub fn new(j: u8) -> Result<Self> {
        if (1..=3).contains(&j) {
            Ok(Self(j))
        } else {
            Err(Error::Usage(format!("contrast must be 1, 2 or 3, got {j}")))
        }
    }

    pub fn get(self) -> u8 {
        self.0
    }
}

impl From<ContrastId> for u8 {
    fn from(c: ContrastId) -> u8 {
        c.0
    }
}

impl std::fmt::Display for ContrastId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TestKind {
    ProjectionWald,
    KS,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestReport {
    pub contrast: ContrastId,
    pub kind: TestKind,
    pub statistic: f64,
    pub critical_value: f64,
    /// Degrees of freedom of the reference chi-square (projection test only).
    pub df: Option<usize>,
    pub alpha: f64,
    pub reject: bool,
    pub p_value: f64,
    pub beta_hat: Option<Vec<f64>>,
    pub q_alpha: Option<f64>,
    pub draws: Option<usize>,
    pub jitter: Option<f64>,
    pub n_used: usize,
    pub excluded: usize,
    /// Grid points and the estimated integrated contrast (KS test only).
    #[serde(skip)]
    pub curve: Vec<(Vec<f64>, f64)>,
}

// ---------------------------------------------------------------------------
// Pointwise contrasts and gradients

/// Gradient of a pointwise ratio `num/den` given the residual combinations of
/// its numerator and denominator.
pub fn ratio_gradient(num_resid: f64, den_resid: f64, num: f64, den: f64) -> f64 {
    (num_resid - (num / den) * den_resid) / den
}

/// Inverse-propensity residual combinations `(R^Y_a, R^D_a, R^Y_b, R^D_b)`.
fn residuals(code: InstrumentCode, y: f64, d: f64, r: &RowNuisance) -> [f64; 4] {
    let c = code.index();
    let sign = if code.arm == crate::data::Arm::One { 1.0 } else { -1.0 };
    let ry = sign * (y - r.mu_y[c]) / r.pi[c];
    let rd = sign * (d - r.mu_d[c]) / r.pi[c];
    match code.stage {
        crate::data::Stage::A => [ry, rd, 0.0, 0.0],
        crate::data::Stage::B => [0.0, 0.0, ry, rd],
    }
}

/// Value of one of the three ratio gradients (1: stratum a, 2: switchers,
/// 3: stratum b) at a row, or `None` when its denominator is below `tol`.
pub fn gradient_d(
    component: u8,
    code: InstrumentCode,
    y: f64,
    d: f64,
    r: &RowNuisance,
    tol: f64,
) -> Option<f64> {
    let [rya, rda, ryb, rdb] = residuals(code, y, d, r);
    let (da, db) = (r.delta(crate::data::Stage::A), r.delta(crate::data::Stage::B));
    let (ea, eb) = (r.eta(crate::data::Stage::A), r.eta(crate::data::Stage::B));
    let (nr, dr, num, den) = match component {
        1 => (rya, rda, da, ea),
        2 => (ryb - rya, rdb - rda, db - da, eb - ea),
        3 => (ryb, rdb, db, eb),
        _ => panic!("gradient component must be 1, 2 or 3"),
    };
    (den.abs() >= tol).then(|| ratio_gradient(nr, dr, num, den))
}

/// Pointwise contrast and its gradient for every row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointwiseContrast {
    pub contrast: ContrastId,
    pub theta: Vec<f64>,
    pub gradient: Vec<f64>,
    pub valid: Vec<bool>,
    pub excluded: usize,
}

/// Per-row `(theta_2, theta_3, grad_2, grad_3)` with contrast 1 defined as
/// their difference, or `None` if any stratum denominator is too small.
fn row_parts(
    code: InstrumentCode,
    y: f64,
    d: f64,
    r: &RowNuisance,
    tol: f64,
) -> Option<[f64; 4]> {
    let g1 = gradient_d(1, code, y, d, r, tol)?;
    let g2 = gradient_d(2, code, y, d, r, tol)?;
    let g3 = gradient_d(3, code, y, d, r, tol)?;
    use crate::data::Stage::{A, B};
    let aco = r.delta(A) / r.eta(A);
    let sw = (r.delta(B) - r.delta(A)) / (r.eta(B) - r.eta(A));
    let co = r.delta(B) / r.eta(B);
    Some([aco - co, sw - co, g1 - g3, g2 - g3])
}

pub fn pointwise_contrast(
    table: &ObservationTable,
    nuis: &CrossFitNuisances,
    j: ContrastId,
    tol: f64,
) -> PointwiseContrast {
    let n = table.n();
    let (z, y, d) = (table.z(), table.y(), table.d());
    let mut theta = vec![0.0; n];
    let mut gradient = vec![0.0; n];
    let mut valid = vec![false; n];
    for i in 0..n {
        let r = nuis.predict_nuisance(i);
        if let Some([t2, t3, g2, g3]) = row_parts(z[i], y[i], f64::from(d[i]), &r, tol) {
            let (t, g) = match j.0 {
                1 => (t2 - t3, g2 - g3),
                2 => (t2, g2),
                _ => (t3, g3),
            };
            theta[i] = t;
            gradient[i] = g;
            valid[i] = true;
        }
    }
    let excluded = valid.iter().filter(|v| !**v).count();
    PointwiseContrast {
        contrast: j,
        theta,
        gradient,
        valid,
        excluded,
    }
}

// ---------------------------------------------------------------------------
// Projection test

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionOptions {
    pub alpha: f64,
    pub denom_point_tol: f64,
    /// Covariate columns entering the basis (all when `None`); an intercept
    /// is always prepended.
    pub columns: Option<Vec<usize>>,
}

impl Default for ProjectionOptions {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            denom_point_tol: DEFAULT_DENOM_POINT_TOL,
            columns: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionFit {
    pub beta_folds: Vec<DVector<f64>>,
    pub beta: DVector<f64>,
    pub sigma: DMatrix<f64>,
    /// Influence values at the one-step coefficients, one row per used row.
    pub phi: DMatrix<f64>,
    pub n_used: usize,
    pub excluded: usize,
}

fn basis_row(x: &[f64], columns: &Option<Vec<usize>>) -> Vec<f64> {
    let mut v = vec![1.0];
    match columns {
        Some(cols) => v.extend(cols.iter().map(|&c| x[c])),
        None => v.extend_from_slice(x),
    }
    v
}

/// Cross-fitted one-step projection coefficients and their covariance.
pub fn projection_fit(
    table: &ObservationTable,
    nuis: &CrossFitNuisances,
    j: ContrastId,
    opts: &ProjectionOptions,
) -> Result<ProjectionFit> {
    if let Some(cols) = &opts.columns {
        if let Some(&c) = cols.iter().find(|&&c| c >= table.dx()) {
            return Err(Error::Config(format!("basis column {c} out of range")));
        }
    }
    let pc = pointwise_contrast(table, nuis, j, opts.denom_point_tol);
    let p = 1 + opts.columns.as_ref().map_or(table.dx(), Vec::len);
    let folds = nuis.folds();
    let used: Vec<usize> = (0..table.n()).filter(|&i| pc.valid[i]).collect();
    let n_used = used.len();
    if n_used <= p {
        return Err(Error::SingularGram { min_eigen: 0.0 });
    }
    let xrow = |i: usize| DVector::from_vec(basis_row(table.x_row(i), &opts.columns));

    let mut gram = DMatrix::zeros(p, p);
    for &i in &used {
        let x = xrow(i);
        gram += &x * x.transpose();
    }
    gram /= n_used as f64;
    let min_eigen = min_eigenvalue(&gram);
    if min_eigen < GRAM_TOL {
        return Err(Error::SingularGram { min_eigen });
    }

    let mut beta_folds = Vec::with_capacity(folds.k());
    let mut phi = DMatrix::zeros(n_used, p);
    let mut r = 0;
    for k in 0..folds.k() {
        let rows: Vec<usize> = folds.rows_in(k).into_iter().filter(|&i| pc.valid[i]).collect();
        let nk = rows.len() as f64;
        let mut g = DMatrix::zeros(p, p);
        let mut m = DVector::zeros(p);
        for &i in &rows {
            let x = xrow(i);
            g += &x * x.transpose();
            m += &x * (pc.theta[i] + pc.gradient[i]);
        }
        g /= nk;
        m /= nk;
        let ginv = spd_inverse(&g).ok_or(Error::SingularGram {
            min_eigen: min_eigenvalue(&g),
        })?;
        let beta_k = &ginv * m;
        for &i in &rows {
            let x = xrow(i);
            let resid = pc.theta[i] + pc.gradient[i] - x.dot(&beta_k);
            phi.set_row(r, &(&ginv * x * resid).transpose());
            r += 1;
        }
        beta_folds.push(beta_k);
    }
    let beta = beta_folds.iter().fold(DVector::zeros(p), |a, b| a + b) / folds.k() as f64;
    let sigma = phi.tr_mul(&phi) / n_used as f64;
    Ok(ProjectionFit {
        beta_folds,
        beta,
        sigma,
        phi,
        n_used,
        excluded: pc.excluded,
    })
}

pub fn projection_test(
    table: &ObservationTable,
    nuis: &CrossFitNuisances,
    j: ContrastId,
    opts: &ProjectionOptions,
) -> Result<TestReport> {
    let fit = projection_fit(table, nuis, j, opts)?;
    let p = fit.beta.len();
    let scale = fit.sigma.diagonal().max();
    if !(scale > 0.0) || min_eigenvalue(&fit.sigma) <= 1e-12 * scale {
        return Err(Error::DegenerateCovariance);
    }
    let inv = spd_inverse(&fit.sigma).ok_or(Error::DegenerateCovariance)?;
    let w = fit.n_used as f64 * fit.beta.dot(&(&inv * &fit.beta));
    let chi = ChiSquared::new(p as f64).expect("positive degrees of freedom");
    let critical = chi.inverse_cdf(1.0 - opts.alpha);
    Ok(TestReport {
        contrast: j,
        kind: TestKind::ProjectionWald,
        statistic: w,
        critical_value: critical,
        df: Some(p),
        alpha: opts.alpha,
        reject: w > critical,
        p_value: 1.0 - chi.cdf(w),
        beta_hat: Some(fit.beta.iter().copied().collect()),
        q_alpha: None,
        draws: None,
        jitter: None,
        n_used: fit.n_used,
        excluded: fit.excluded,
        curve: Vec::new(),
    })
}

// ---------------------------------------------------------------------------
// KS test

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KsOptions {
    pub alpha: f64,
    pub draws: usize,
    pub grid_max: usize,
    pub jitter0: f64,
    pub denom_point_tol: f64,
    pub seed: u64,
}

impl Default for KsOptions {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            draws: DEFAULT_DRAWS,
            grid_max: DEFAULT_GRID_MAX,
            jitter0: DEFAULT_JITTER0,
            denom_point_tol: DEFAULT_DENOM_POINT_TOL,
            seed: 0,
        }
    }
}

fn below(x: &[f64], c: &[f64]) -> bool {
    x.iter().zip(c).all(|(a, b)| a <= b)
}

/// Cross-fitted one-step estimate of the integrated contrast at threshold `c`:
/// the fold average of `mean_k[(theta + D) 1{x <= c}]` over usable rows.
pub fn omega_hat(
    table: &ObservationTable,
    nuis: &CrossFitNuisances,
    j: ContrastId,
    c: &[f64],
    tol: f64,
) -> Result<f64> {
    let pc = pointwise_contrast(table, nuis, j, tol);
    let grid = [c.to_vec()];
    let parts = fold_indicator_parts(table, nuis, &pc, &grid)?;
    Ok(parts.omega[0])
}

struct FoldParts {
    omega: Vec<f64>,
    sigma: DMatrix<f64>,
    n_used: usize,
}

/// Integrated-contrast estimates on a grid and their fold-averaged covariance.
fn fold_indicator_parts(
    table: &ObservationTable,
    nuis: &CrossFitNuisances,
    pc: &PointwiseContrast,
    grid: &[Vec<f64>],
) -> Result<FoldParts> {
    let folds = nuis.folds();
    let gsize = grid.len();
    let mut omega = vec![0.0; gsize];
    let mut sigma = DMatrix::zeros(gsize, gsize);
    let mut n_used = 0;
    let mut live_folds = 0;
    for k in 0..folds.k() {
        let rows: Vec<usize> = folds.rows_in(k).into_iter().filter(|&i| pc.valid[i]).collect();
        if rows.is_empty() {
            continue;
        }
        live_folds += 1;
        n_used += rows.len();
        let nk = rows.len() as f64;
        let mut m = DMatrix::zeros(rows.len(), gsize);
        for (r, &i) in rows.iter().enumerate() {
            let psi = pc.theta[i] + pc.gradient[i];
            let x = table.x_row(i);
            for (g, c) in grid.iter().enumerate() {
                if below(x, c) {
                    m[(r, g)] = psi;
                }
            }
        }
        let om: Vec<f64> = (0..gsize).map(|g| m.column(g).sum() / nk).collect();
        for (g, o) in om.iter().enumerate() {
            m.column_mut(g).add_scalar_mut(-o);
            omega[g] += o;
        }
        sigma += m.tr_mul(&m) / nk;
    }
    if live_folds == 0 {
        return Err(Error::GridEmpty);
    }
    let kf = live_folds as f64;
    omega.iter_mut().for_each(|o| *o /= kf);
    sigma /= kf;
    Ok(FoldParts {
        omega,
        sigma,
        n_used,
    })
}

/// Empirical (type 7) quantile of a sample.
pub fn quantile(values: &mut [f64], p: f64) -> f64 {
    values.sort_by(f64::total_cmp);
    let h = (values.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    values[lo] + (h - lo as f64) * (values[hi] - values[lo])
}

/// Maxima of `|L z|` over `draws` standard normal vectors `z`.
pub fn gaussian_max_draws(l: &DMatrix<f64>, draws: usize, rng: &mut StreamRng) -> Vec<f64> {
    let g = l.nrows();
    let mut maxima = Vec::with_capacity(draws);
    let chunk = 256;
    let mut done = 0;
    while done < draws {
        let m = chunk.min(draws - done);
        let z = DMatrix::from_fn(g, m, |_, _| StandardNormal.sample(rng));
        let h = l * z;
        maxima.extend(h.column_iter().map(|c| c.amax()));
        done += m;
    }
    maxima
}

/// Monte Carlo `(1 - alpha)` quantile of `max |H|` for `H ~ N(0, L L^T)`.
pub fn gaussian_max_quantile(
    l: &DMatrix<f64>,
    alpha: f64,
    draws: usize,
    rng: &mut StreamRng,
) -> f64 {
    let mut maxima = gaussian_max_draws(l, draws, rng);
    quantile(&mut maxima, 1.0 - alpha)
}

/// Rows used as the threshold grid: all usable rows, or a seeded subsample.
fn ks_grid(valid: &[bool], grid_max: usize, seed: u64, j: ContrastId) -> Vec<usize> {
    let rows: Vec<usize> = (0..valid.len()).filter(|&i| valid[i]).collect();
    if rows.len() <= grid_max {
        return rows;
    }
    let mut r = rng::stream(seed, "ks_grid", u64::from(j.0));
    let mut picked: Vec<usize> = sample(&mut r, rows.len(), grid_max)
        .into_iter()
        .map(|p| rows[p])
        .collect();
    picked.sort_unstable();
    picked
}

pub fn ks_test(
    table: &ObservationTable,
    nuis: &CrossFitNuisances,
    j: ContrastId,
    opts: &KsOptions,
) -> Result<TestReport> {
    let pc = pointwise_contrast(table, nuis, j, opts.denom_point_tol);
    let grid_rows = ks_grid(&pc.valid, opts.grid_max, opts.seed, j);
    if grid_rows.is_empty() {
        return Err(Error::GridEmpty);
    }
    let grid: Vec<Vec<f64>> = grid_rows.iter().map(|&i| table.x_row(i).to_vec()).collect();
    let parts = fold_indicator_parts(table, nuis, &pc, &grid)?;
    let statistic =
        (parts.n_used as f64).sqrt() * parts.omega.iter().fold(0.0f64, |m, o| m.max(o.abs()));
    let chol = chol_jitter(&parts.sigma, opts.jitter0)?;
    let mut r = rng::stream(opts.seed, "ks_draws", u64::from(j.0));
    let mut maxima = gaussian_max_draws(&chol.l, opts.draws, &mut r);
    let exceed = maxima.iter().filter(|&&m| m >= statistic).count();
    let q = quantile(&mut maxima, 1.0 - opts.alpha);
    Ok(TestReport {
        contrast: j,
        kind: TestKind::KS,
        statistic,
        critical_value: q,
        df: None,
        alpha: opts.alpha,
        reject: statistic > q,
        p_value: exceed as f64 / opts.draws as f64,
        beta_hat: None,
        q_alpha: Some(q),
        draws: Some(opts.draws),
        jitter: Some(chol.jitter),
        n_used: parts.n_used,
        excluded: pc.excluded,
        curve: grid.into_iter().zip(parts.omega).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{eif_value, Estimand};
    use statrs::distribution::Normal;

    fn row() -> RowNuisance {
        RowNuisance {
            pi: [0.5, 0.5, 0.25, 0.25],
            mu_y: [0.0; 4],
            mu_d: [0.25, 0.75, 0.0, 0.9],
        }
    }

    #[test]
    fn single_term_gradient() {
        let r = RowNuisance {
            pi: [0.5; 4],
            mu_y: [0.0; 4],
            mu_d: [0.0, 0.5, 0.0, 0.9],
        };
        assert_eq!(gradient_d(1, InstrumentCode::ONE_A, 1.0, 0.5, &r, 0.01), Some(4.0));
    }

    #[test]
    fn zero_residuals_zero_gradients() {
        let r = RowNuisance {
            mu_y: [0.3, 0.9, 0.1, 1.4],
            ..row()
        };
        for code in InstrumentCode::ALL {
            let c = code.index();
            for comp in 1..=3 {
                let g = gradient_d(comp, code, r.mu_y[c], r.mu_d[c], &r, 0.01).unwrap();
                assert!(g.abs() < 1e-15);
            }
        }
    }

    #[test]
    fn switcher_gradient_matches_influence_function() {
        let r = RowNuisance {
            mu_y: [0.3, 0.9, 0.1, 1.4],
            ..row()
        };
        use crate::data::Stage::{A, B};
        let theta = (r.delta(B) - r.delta(A)) / (r.eta(B) - r.eta(A));
        let omega = r.eta(B) - r.eta(A);
        for code in InstrumentCode::ALL {
            let g = gradient_d(2, code, 2.0, 1.0, &r, 0.01).unwrap();
            let e = eif_value(Estimand::Swate.weights(), code, 2.0, 1.0, &r, theta, omega).unwrap();
            assert!((g - e).abs() < 1e-12);
        }
    }

    #[test]
    fn small_denominator_is_excluded() {
        let r = RowNuisance {
            mu_d: [0.3, 0.305, 0.0, 0.5],
            ..row()
        };
        assert!(gradient_d(1, InstrumentCode::ONE_A, 1.0, 1.0, &r, 0.01).is_none());
        assert!(gradient_d(3, InstrumentCode::ONE_A, 1.0, 1.0, &r, 0.01).is_some());
    }

    #[test]
    fn max_quantile_identity_oracle() {
        let alpha: f64 = 0.05;
        let target = 0.5 * (1.0 + (1.0 - alpha).powf(0.1));
        let q = Normal::standard().inverse_cdf(target);
        let mut r = rng::stream(3, "ks_oracle", 0);
        let est = gaussian_max_quantile(&DMatrix::identity(10, 10), alpha, 20_000, &mut r);
        assert!((est - q).abs() / q < 0.03, "{est} vs {q}");
    }

    #[test]
    fn contrast_id_range() {
        assert!(ContrastId::new(0).is_err());
        assert!(ContrastId::new(4).is_err());
        assert_eq!(ContrastId::new(2).unwrap().get(), 2);
    }
}
