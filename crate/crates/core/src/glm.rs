//! Penalized generalized linear models fitted by IRLS, with an optional
//! boosted-stump layer on the link scale.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    LinearGaussian,
    BinomialLogit,
    PoissonLog,
}

impl Family {
    pub fn inverse_link(self, eta: f64) -> f64 {
        match self {
            Family::LinearGaussian => eta,
            Family::BinomialLogit => expit(eta),
            Family::PoissonLog => eta.min(700.0).exp(),
        }
    }

    /// IRLS working weight, which is also the variance function at `mu`.
    fn weight(self, mu: f64) -> f64 {
        match self {
            Family::LinearGaussian => 1.0,
            Family::BinomialLogit => (mu * (1.0 - mu)).max(1e-12),
            Family::PoissonLog => mu.max(1e-12),
        }
    }

    /// Negative log-likelihood contribution, up to terms free of `mu`.
    fn nll(self, y: f64, mu: f64) -> f64 {
        match self {
            Family::LinearGaussian => 0.5 * (y - mu) * (y - mu),
            Family::BinomialLogit => {
                let m = mu.clamp(1e-300, 1.0 - 1e-16);
                -(y * m.ln() + (1.0 - y) * (1.0 - m).ln())
            }
            Family::PoissonLog => mu - y * mu.max(1e-300).ln(),
        }
    }

    fn check_response(self, y: f64) -> bool {
        match self {
            Family::LinearGaussian => y.is_finite(),
            Family::BinomialLogit => (0.0..=1.0).contains(&y),
            Family::PoissonLog => y >= 0.0 && y.is_finite(),
        }
    }
}

pub fn expit(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoostParams {
    pub trees: usize,
    pub depth: usize,
    pub shrinkage: f64,
}

impl Default for BoostParams {
    fn default() -> Self {
        Self {
            trees: 200,
            depth: 1,
            shrinkage: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerSpec {
    pub family: Family,
    pub ridge: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub use_boost: bool,
    pub boost: BoostParams,
    /// Ignore covariates and fit a constant on the link scale.
    pub intercept_only: bool,
}

impl Default for LearnerSpec {
    fn default() -> Self {
        Self::new(Family::LinearGaussian)
    }
}

impl LearnerSpec {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            ridge: 1e-6,
            max_iter: 100,
            tol: 1e-8,
            use_boost: false,
            boost: BoostParams::default(),
            intercept_only: false,
        }
    }

    pub fn gaussian() -> Self {
        Self::new(Family::LinearGaussian)
    }

    pub fn logistic() -> Self {
        Self::new(Family::BinomialLogit)
    }

    pub fn poisson() -> Self {
        Self::new(Family::PoissonLog)
    }

    pub fn with_ridge(mut self, ridge: f64) -> Self {
        self.ridge = ridge;
        self
    }

    pub fn with_boost(mut self, on: bool) -> Self {
        self.use_boost = on;
        self
    }

    pub fn intercept_only(mut self) -> Self {
        self.intercept_only = true;
        self
    }

    pub fn check(&self) -> Result<()> {
        if !(self.tol > 0.0) || self.max_iter == 0 || !(self.ridge >= 0.0) {
            return Err(Error::Config(
                "learner needs tol > 0, max_iter >= 1 and ridge >= 0".into(),
            ));
        }
        if self.use_boost && (self.boost.depth != 1 || !(self.boost.shrinkage > 0.0)) {
            return Err(Error::Config(
                "boosting supports depth 1 stumps with positive shrinkage".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlmModel {
    pub family: Family,
    /// Intercept first.
    pub coefficients: Vec<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub offset_used: bool,
}

impl GlmModel {
    /// Linear predictor for a row of the design (intercept column included).
    pub fn eta(&self, design_row: &[f64]) -> f64 {
        self.coefficients
            .iter()
            .zip(design_row)
            .map(|(b, x)| b * x)
            .sum()
    }
}

/// Penalty weight for each coefficient. The Gaussian intercept is left free so
/// that affine maps of the response carry through to predictions exactly;
/// for the other families a tiny intercept penalty keeps all-zero cells finite.
fn penalty_mask(family: Family, p: usize) -> Vec<f64> {
    let mut m = vec![1.0; p];
    if family == Family::LinearGaussian {
        m[0] = 0.0;
    }
    m
}

/// Column centering and scaling applied before fitting. Penalizing the
/// standardized coefficients makes the fit invariant to affine recoding of
/// any covariate; constant columns are left untouched.
struct Standardizer {
    center: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn new(design: &DMatrix<f64>) -> Self {
        let (n, p) = design.shape();
        let nf = n as f64;
        let mut center = vec![0.0; p];
        let mut scale = vec![1.0; p];
        for j in 1..p {
            let col = design.column(j);
            let m = col.sum() / nf;
            let sd = (col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / nf).sqrt();
            if sd > 1e-12 * m.abs().max(1.0) {
                center[j] = m;
                scale[j] = sd;
            }
        }
        Self { center, scale }
    }

    fn apply(&self, design: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = design.clone();
        for (j, mut col) in z.column_iter_mut().enumerate().skip(1) {
            let (m, s) = (self.center[j], self.scale[j]);
            col.apply(|v| *v = (*v - m) / s);
        }
        z
    }

    /// Standardized coefficients to the original design.
    fn to_original(&self, bz: &DVector<f64>) -> Vec<f64> {
        let mut b: Vec<f64> = bz.iter().enumerate().map(|(j, v)| v / self.scale[j]).collect();
        b[0] = bz[0] - (1..b.len()).map(|j| b[j] * self.center[j]).sum::<f64>();
        b
    }

    fn to_standardized(&self, b: &[f64]) -> Vec<f64> {
        let mut bz: Vec<f64> = b.iter().enumerate().map(|(j, v)| v * self.scale[j]).collect();
        bz[0] = b[0] + (1..b.len()).map(|j| b[j] * self.center[j]).sum::<f64>();
        bz
    }
}

/// Fits a penalized GLM by IRLS. The objective is the mean negative
/// log-likelihood plus `ridge/2 * |beta|^2` on internally standardized
/// columns (see [`penalty_mask`]). `design` must contain the intercept column
/// first; coefficients are returned on the original scale.
pub fn fit_glm(
    design: &DMatrix<f64>,
    response: &[f64],
    spec: &LearnerSpec,
    offset: Option<&[f64]>,
) -> Result<GlmModel> {
    spec.check()?;
    let st = Standardizer::new(design);
    let mut model = fit_standardized(&st.apply(design), response, spec, offset)?;
    model.coefficients = st.to_original(&DVector::from_vec(model.coefficients));
    if model.coefficients.iter().any(|b| !b.is_finite()) {
        return Err(Error::RankDeficient);
    }
    Ok(model)
}

fn fit_standardized(
    design: &DMatrix<f64>,
    response: &[f64],
    spec: &LearnerSpec,
    offset: Option<&[f64]>,
) -> Result<GlmModel> {
    let (n, p) = design.shape();
    if n != response.len() || offset.is_some_and(|o| o.len() != n) {
        return Err(Error::InvalidTable("design and response lengths differ".into()));
    }
    if n == 0 {
        return Err(Error::InvalidTable("cannot fit a model on zero rows".into()));
    }
    if let Some(v) = response.iter().find(|&&v| !spec.family.check_response(v)) {
        return Err(Error::InvalidTable(format!(
            "response value {v} outside the support of {:?}",
            spec.family
        )));
    }
    let family = spec.family;
    let mask = penalty_mask(family, p);
    let lambda = spec.ridge;
    let nf = n as f64;
    let off = |i: usize| offset.map_or(0.0, |o| o[i]);
    let y = DVector::from_column_slice(response);

    let objective = |beta: &DVector<f64>| -> f64 {
        let eta = design * beta;
        let nll: f64 = (0..n)
            .map(|i| family.nll(y[i], family.inverse_link(eta[i] + off(i))))
            .sum::<f64>()
            / nf;
        let pen: f64 = beta.iter().zip(&mask).map(|(b, m)| m * b * b).sum();
        nll + 0.5 * lambda * pen
    };

    let solve = |h: DMatrix<f64>, rhs: &DVector<f64>| -> Result<DVector<f64>> {
        if let Some(c) = h.clone().cholesky() {
            return Ok(c.solve(rhs));
        }
        h.lu().solve(rhs).ok_or(Error::RankDeficient)
    };

    let mut beta = DVector::zeros(p);
    if family == Family::LinearGaussian && offset.is_none() {
        let mut h = design.tr_mul(design) / nf;
        for j in 0..p {
            h[(j, j)] += lambda * mask[j];
        }
        let rhs = design.tr_mul(&y) / nf;
        beta = solve(h, &rhs)?;
        if beta.iter().any(|b| !b.is_finite()) {
            return Err(Error::RankDeficient);
        }
        return Ok(GlmModel {
            family,
            coefficients: beta.iter().copied().collect(),
            converged: true,
            iterations: 1,
            offset_used: false,
        });
    }

    // Start from the marginal mean on the link scale.
    let ybar = y.mean();
    beta[0] = match family {
        Family::LinearGaussian => ybar,
        Family::BinomialLogit => {
            let m = ybar.clamp(0.01, 0.99);
            (m / (1.0 - m)).ln()
        }
        Family::PoissonLog => {
            let mean_off = offset.map_or(0.0, |o| o.iter().sum::<f64>() / nf);
            ybar.max(0.01).ln() - mean_off
        }
    };
    let mut obj = objective(&beta);
    let mut converged = false;
    let mut iterations = 0;
    for it in 1..=spec.max_iter {
        iterations = it;
        let eta = design * &beta;
        let mut w = DVector::zeros(n);
        let mut resid = DVector::zeros(n);
        for i in 0..n {
            let mu = family.inverse_link(eta[i] + off(i));
            w[i] = family.weight(mu);
            resid[i] = y[i] - mu;
        }
        let mut wx = design.clone();
        for (i, mut row) in wx.row_iter_mut().enumerate() {
            row *= w[i];
        }
        let mut h = design.tr_mul(&wx) / nf;
        let mut grad = design.tr_mul(&resid) / nf;
        for j in 0..p {
            h[(j, j)] += lambda * mask[j];
            grad[j] -= lambda * mask[j] * beta[j];
        }
        let step = solve(h, &grad)?;
        let mut t = 1.0;
        let mut next = &beta + &step;
        let mut next_obj = objective(&next);
        let mut halvings = 0;
        while !(next_obj <= obj + 1e-12 * obj.abs().max(1.0)) && halvings < 30 {
            t *= 0.5;
            next = &beta + &step * t;
            next_obj = objective(&next);
            halvings += 1;
        }
        if !next_obj.is_finite() {
            break;
        }
        let change = (&next - &beta).norm() / (1.0 + beta.norm());
        beta = next;
        obj = next_obj;
        if change <= spec.tol {
            converged = true;
            break;
        }
    }
    if beta.iter().any(|b| !b.is_finite()) {
        return Err(Error::RankDeficient);
    }
    Ok(GlmModel {
        family,
        coefficients: beta.iter().copied().collect(),
        converged,
        iterations,
        offset_used: offset.is_some(),
    })
}

/// Gradient of the penalized mean log-likelihood at `model`'s coefficients,
/// taken with respect to the standardized coefficients that are penalized.
pub fn penalized_score(
    model: &GlmModel,
    design: &DMatrix<f64>,
    response: &[f64],
    ridge: f64,
    offset: Option<&[f64]>,
) -> Vec<f64> {
    let (n, p) = design.shape();
    let mask = penalty_mask(model.family, p);
    let st = Standardizer::new(design);
    let z = st.apply(design);
    let bz = st.to_standardized(&model.coefficients);
    let mut g = vec![0.0; p];
    for i in 0..n {
        let row: Vec<f64> = design.row(i).iter().copied().collect();
        let mu = model
            .family
            .inverse_link(model.eta(&row) + offset.map_or(0.0, |o| o[i]));
        for j in 0..p {
            g[j] += z[(i, j)] * (response[i] - mu) / n as f64;
        }
    }
    for j in 0..p {
        g[j] -= ridge * mask[j] * bz[j];
    }
    g
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct Stump {
    feature: usize,
    threshold: f64,
    left: f64,
    right: f64,
}

/// A fitted learner: GLM on the link scale plus boosted stumps.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Learner {
    pub glm: GlmModel,
    intercept_only: bool,
    stumps: Vec<Stump>,
    shrinkage: f64,
}

impl Learner {
    /// Link-scale prediction for a covariate row (no intercept column, no offset).
    pub fn eta(&self, x: &[f64]) -> f64 {
        let b = &self.glm.coefficients;
        let mut e = b[0];
        if !self.intercept_only {
            e += b[1..].iter().zip(x).map(|(b, x)| b * x).sum::<f64>();
        }
        for s in &self.stumps {
            e += self.shrinkage * if x[s.feature] <= s.threshold { s.left } else { s.right };
        }
        e
    }

    /// Mean-scale prediction; `log_offset` is added on the link scale.
    pub fn predict(&self, x: &[f64], log_offset: f64) -> f64 {
        self.glm.family.inverse_link(self.eta(x) + log_offset)
    }
}

/// Fits a learner on the given covariate rows (row-major, `dx` columns).
pub fn fit_learner(
    x: &[f64],
    dx: usize,
    response: &[f64],
    log_offset: Option<&[f64]>,
    spec: &LearnerSpec,
) -> Result<Learner> {
    let n = response.len();
    let cols = if spec.intercept_only { 0 } else { dx };
    let design = DMatrix::from_fn(n, cols + 1, |i, j| if j == 0 { 1.0 } else { x[i * dx + j - 1] });
    let glm = fit_glm(&design, response, spec, log_offset)?;
    let mut learner = Learner {
        glm,
        intercept_only: spec.intercept_only,
        stumps: Vec::new(),
        shrinkage: spec.boost.shrinkage,
    };
    if spec.use_boost && dx > 0 && n > 1 {
        boost(&mut learner, x, dx, response, log_offset, spec.boost.trees);
    }
    Ok(learner)
}

/// Gradient boosting with Newton-step stump leaves, starting from the GLM fit.
fn boost(
    learner: &mut Learner,
    x: &[f64],
    dx: usize,
    y: &[f64],
    log_offset: Option<&[f64]>,
    trees: usize,
) {
    let n = y.len();
    let family = learner.glm.family;
    let mut eta: Vec<f64> = (0..n)
        .map(|i| learner.eta(&x[i * dx..(i + 1) * dx]) + log_offset.map_or(0.0, |o| o[i]))
        .collect();
    let orders: Vec<Vec<usize>> = (0..dx)
        .map(|j| {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.sort_by(|&a, &b| x[a * dx + j].total_cmp(&x[b * dx + j]));
            idx
        })
        .collect();
    let mut g = vec![0.0; n];
    let mut h = vec![0.0; n];
    for _ in 0..trees {
        for i in 0..n {
            let mu = family.inverse_link(eta[i]);
            g[i] = y[i] - mu;
            h[i] = family.weight(mu);
        }
        let (gt, ht): (f64, f64) = (g.iter().sum(), h.iter().sum());
        let mut best: Option<(f64, Stump)> = None;
        for (j, order) in orders.iter().enumerate() {
            let (mut gl, mut hl) = (0.0, 0.0);
            for w in 0..n - 1 {
                let i = order[w];
                gl += g[i];
                hl += h[i];
                let (a, b) = (x[i * dx + j], x[order[w + 1] * dx + j]);
                if a == b || hl < 1e-8 || ht - hl < 1e-8 {
                    continue;
                }
                let gain = gl * gl / hl + (gt - gl) * (gt - gl) / (ht - hl);
                if best.as_ref().is_none_or(|(bg, _)| gain > *bg) {
                    best = Some((
                        gain,
                        Stump {
                            feature: j,
                            threshold: 0.5 * (a + b),
                            left: gl / hl,
                            right: (gt - gl) / (ht - hl),
                        },
                    ));
                }
            }
        }
        let Some((_, stump)) = best else { break };
        for i in 0..n {
            let leaf = if x[i * dx + stump.feature] <= stump.threshold {
                stump.left
            } else {
                stump.right
            };
            eta[i] += learner.shrinkage * leaf;
        }
        learner.stumps.push(stump);
    }
}
