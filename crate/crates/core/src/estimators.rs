//! Wald, one-step and estimating-equation estimators of the switcher,
//! always-complier and complier effects, plus latent-strata covariate profiles.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::{InstrumentCode, ObservationTable, Stage};
use crate::error::{Error, Result};
use crate::nuisance::{CrossFitNuisances, RowNuisance};
use crate::rng;

pub const DEFAULT_DENOM_TOL: f64 = 0.02;
pub const TRUNCATION_LIMIT: f64 = 500.0;
/// Denominators smaller than this are treated as exactly zero.
const ZERO_DENOM: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Estimand {
    Swate,
    Acoate,
    Coate,
}

impl Estimand {
    /// Contrast weights over codes `[0a, 1a, 0b, 1b]`. Applied to cell means of
    /// Y they give the numerator, applied to cell means of D the denominator.
    pub fn weights(self) -> [f64; 4] {
        match self {
            Estimand::Swate => [1.0, -1.0, -1.0, 1.0],
            Estimand::Acoate => [-1.0, 1.0, 0.0, 0.0],
            Estimand::Coate => [0.0, 0.0, -1.0, 1.0],
        }
    }

    fn weak_flag(self) -> ReportFlag {
        match self {
            Estimand::Swate => ReportFlag::WeakNestedIV,
            _ => ReportFlag::WeakIV,
        }
    }
}

impl std::str::FromStr for Estimand {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "swate" | "sw" => Ok(Estimand::Swate),
            "acoate" | "aco" => Ok(Estimand::Acoate),
            "coate" | "co" => Ok(Estimand::Coate),
            _ => Err(Error::Usage(format!("unknown estimand {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Wald,
    #[serde(rename = "onestep")]
    OneStep,
    #[serde(rename = "ee")]
    EstEq,
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "wald" => Ok(Method::Wald),
            "onestep" | "os" => Ok(Method::OneStep),
            "ee" | "esteq" => Ok(Method::EstEq),
            _ => Err(Error::Usage(format!("unknown method {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ReportFlag {
    WeakNestedIV,
    WeakIV,
    Truncated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WaldSe {
    Sandwich,
    Bootstrap,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateOptions {
    pub level: f64,
    pub denom_tol: f64,
    pub wald_se: WaldSe,
    pub boot_reps: usize,
    /// Root seed for the bootstrap stream.
    pub seed: u64,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            level: 0.95,
            denom_tol: DEFAULT_DENOM_TOL,
            wald_se: WaldSe::Sandwich,
            boot_reps: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub estimand: Estimand,
    pub method: Method,
    pub point: f64,
    pub se: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub level: f64,
    pub fold_estimates: Vec<f64>,
    pub denom: f64,
    pub flags: Vec<ReportFlag>,
    pub n: usize,
}

impl EstimateReport {
    pub fn has(&self, flag: ReportFlag) -> bool {
        self.flags.contains(&flag)
    }

    pub fn covers(&self, truth: f64) -> bool {
        self.ci_lo <= truth && truth <= self.ci_hi
    }
}

pub(crate) fn normal_quantile(p: f64) -> f64 {
    Normal::standard().inverse_cdf(p)
}

#[allow(clippy::too_many_arguments)]
fn finish(
    estimand: Estimand,
    method: Method,
    point: f64,
    se: f64,
    fold_estimates: Vec<f64>,
    denom: f64,
    mut flags: Vec<ReportFlag>,
    n: usize,
    level: f64,
) -> EstimateReport {
    if point.abs() > TRUNCATION_LIMIT {
        flags.push(ReportFlag::Truncated);
    }
    let z = normal_quantile(0.5 + level / 2.0);
    EstimateReport {
        estimand,
        method,
        point,
        se,
        ci_lo: point - z * se,
        ci_hi: point + z * se,
        level,
        fold_estimates,
        denom,
        flags,
        n,
    }
}

fn sample_sd(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / n;
    (v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0)).sqrt()
}

// ---------------------------------------------------------------------------
// Conditional contrasts

/// Out-of-fold conditional arm differences per row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalContrasts {
    pub delta_a: Vec<f64>,
    pub delta_b: Vec<f64>,
    pub eta_a: Vec<f64>,
    pub eta_b: Vec<f64>,
}

pub fn conditional_contrasts(nuis: &CrossFitNuisances) -> ConditionalContrasts {
    let rows = nuis.rows();
    let col = |f: &dyn Fn(&RowNuisance) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    ConditionalContrasts {
        delta_a: col(&|r| r.delta(Stage::A)),
        delta_b: col(&|r| r.delta(Stage::B)),
        eta_a: col(&|r| r.eta(Stage::A)),
        eta_b: col(&|r| r.eta(Stage::B)),
    }
}

// ---------------------------------------------------------------------------
// Wald

/// Per-code counts and means of Y and D.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CellMoments {
    pub count: [usize; 4],
    pub y_mean: [f64; 4],
    pub d_mean: [f64; 4],
}

impl CellMoments {
    pub fn from_table(table: &ObservationTable) -> Self {
        Self::from_rows(table, 0..table.n())
    }

    fn from_rows(table: &ObservationTable, rows: impl Iterator<Item = usize>) -> Self {
        let (z, y, d) = (table.z(), table.y(), table.d());
        let mut count = [0usize; 4];
        let mut sy = [0.0; 4];
        let mut sd = [0.0; 4];
        for i in rows {
            let c = z[i].index();
            count[c] += 1;
            sy[c] += y[i];
            sd[c] += f64::from(d[i]);
        }
        let mean = |s: [f64; 4]| std::array::from_fn(|c| s[c] / count[c] as f64);
        Self {
            count,
            y_mean: mean(sy),
            d_mean: mean(sd),
        }
    }

    fn contrast(&self, w: [f64; 4]) -> (f64, f64) {
        let mut num = 0.0;
        let mut den = 0.0;
        for c in 0..4 {
            if w[c] != 0.0 {
                num += w[c] * self.y_mean[c];
                den += w[c] * self.d_mean[c];
            }
        }
        (num, den)
    }

    fn usable(&self, w: [f64; 4]) -> bool {
        (0..4).all(|c| w[c] == 0.0 || self.count[c] > 0)
    }
}

fn wald_bootstrap_se(table: &ObservationTable, w: [f64; 4], opts: &EstimateOptions) -> f64 {
    let n = table.n();
    let points: Vec<f64> = (0..opts.boot_reps)
        .into_par_iter()
        .filter_map(|b| {
            let mut r = rng::stream(opts.seed, "boot", b as u64);
            let m = CellMoments::from_rows(table, (0..n).map(|_| r.random_range(0..n)));
            if !m.usable(w) {
                return None;
            }
            let (num, den) = m.contrast(w);
            (den.abs() > ZERO_DENOM).then_some(num / den)
        })
        .collect();
    sample_sd(&points)
}

/// Ratio of augmented-free cell-mean contrasts with sandwich or bootstrap SE.
pub fn wald(
    table: &ObservationTable,
    estimand: Estimand,
    opts: &EstimateOptions,
) -> Result<EstimateReport> {
    let w = estimand.weights();
    let m = CellMoments::from_table(table);
    if let Some(c) = (0..4).find(|&c| w[c] != 0.0 && m.count[c] == 0) {
        return Err(Error::EmptyCell {
            code: InstrumentCode::from_index(c),
            count: 0,
            required: 1,
        });
    }
    let (num, den) = m.contrast(w);
    if den.abs() <= ZERO_DENOM {
        return Err(Error::DegenerateDenominator {
            context: "Wald compliance contrast",
            value: den,
        });
    }
    let point = num / den;
    let weak = den.abs() < opts.denom_tol;
    let mut flags = Vec::new();
    if weak {
        flags.push(estimand.weak_flag());
    }
    let se = if weak || opts.wald_se == WaldSe::Bootstrap {
        wald_bootstrap_se(table, w, opts)
    } else {
        let n = table.n() as f64;
        let (z, y, d) = (table.z(), table.y(), table.d());
        let ss: f64 = (0..table.n())
            .map(|i| {
                let c = z[i].index();
                let p = m.count[c] as f64 / n;
                let phi = w[c] * ((y[i] - m.y_mean[c]) - point * (f64::from(d[i]) - m.d_mean[c]))
                    / (p * den);
                phi * phi
            })
            .sum();
        (ss / n).sqrt() / n.sqrt()
    };
    Ok(finish(
        estimand,
        Method::Wald,
        point,
        se,
        Vec::new(),
        den,
        flags,
        table.n(),
        opts.level,
    ))
}

pub fn wald_swate(table: &ObservationTable, opts: &EstimateOptions) -> Result<EstimateReport> {
    wald(table, Estimand::Swate, opts)
}

pub fn wald_acoate(table: &ObservationTable, opts: &EstimateOptions) -> Result<EstimateReport> {
    wald(table, Estimand::Acoate, opts)
}

// ---------------------------------------------------------------------------
// Influence-function based estimators

/// Y-side and D-side augmented terms of one row:
/// `w_z (y - mu_Y(z)) / pi(z) + sum_z w_z mu_Y(z)` and its D analogue.
pub fn augmented_row(
    w: [f64; 4],
    code: InstrumentCode,
    y: f64,
    d: f64,
    r: &RowNuisance,
) -> (f64, f64) {
    let c = code.index();
    let plug_y: f64 = (0..4).map(|z| w[z] * r.mu_y[z]).sum();
    let plug_d: f64 = (0..4).map(|z| w[z] * r.mu_d[z]).sum();
    let a = w[c] * (y - r.mu_y[c]) / r.pi[c] + plug_y;
    let b = w[c] * (d - r.mu_d[c]) / r.pi[c] + plug_d;
    (a, b)
}

/// Influence value `(A - psi B) / omega` of one row.
#[allow(clippy::too_many_arguments)]
pub fn eif_value(
    w: [f64; 4],
    code: InstrumentCode,
    y: f64,
    d: f64,
    r: &RowNuisance,
    psi: f64,
    omega: f64,
) -> Result<f64> {
    if omega.abs() <= ZERO_DENOM {
        return Err(Error::DegenerateDenominator {
            context: "influence function",
            value: omega,
        });
    }
    let (a, b) = augmented_row(w, code, y, d, r);
    Ok((a - psi * b) / omega)
}

/// Switcher-effect influence value at row `i`.
pub fn eif_swate(
    table: &ObservationTable,
    nuis: &CrossFitNuisances,
    i: usize,
    psi: f64,
    omega: f64,
) -> Result<f64> {
    eif_value(
        Estimand::Swate.weights(),
        table.z()[i],
        table.y()[i],
        f64::from(table.d()[i]),
        &nuis.predict_nuisance(i),
        psi,
        omega,
    )
}

/// Fold-level summaries shared by the one-step and estimating-equation fits.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldSummary {
    pub fold: usize,
    pub rows: Vec<usize>,
    /// Mean of the Y-side plug-in `sum_z w_z mu_Y(z)`.
    pub plug_num: f64,
    /// Mean of the D-side plug-in; the fold's compliance contrast.
    pub omega: f64,
    pub mean_a: f64,
    pub mean_b: f64,
}

impl FoldSummary {
    pub fn plug_in(&self) -> f64 {
        self.plug_num / self.omega
    }

    pub fn one_step(&self) -> f64 {
        let psi = self.plug_in();
        psi + (self.mean_a - psi * self.mean_b) / self.omega
    }

    pub fn estimating_equation(&self) -> f64 {
        self.mean_a / self.mean_b
    }
}

pub fn fold_summaries(
    table: &ObservationTable,
    nuis: &CrossFitNuisances,
    estimand: Estimand,
) -> Vec<FoldSummary> {
    let w = estimand.weights();
    let folds = nuis.folds();
    let (z, y, d) = (table.z(), table.y(), table.d());
    (0..folds.k())
        .map(|k| {
            let rows = folds.rows_in(k);
            let nk = rows.len() as f64;
            let (mut pn, mut pd, mut sa, mut sb) = (0.0, 0.0, 0.0, 0.0);
            for &i in &rows {
                let r = nuis.predict_nuisance(i);
                pn += (0..4).map(|c| w[c] * r.mu_y[c]).sum::<f64>();
                pd += (0..4).map(|c| w[c] * r.mu_d[c]).sum::<f64>();
                let (a, b) = augmented_row(w, z[i], y[i], f64::from(d[i]), &r);
                sa += a;
                sb += b;
            }
            FoldSummary {
                fold: k,
                rows,
                plug_num: pn / nk,
                omega: pd / nk,
                mean_a: sa / nk,
                mean_b: sb / nk,
            }
        })
        .collect()
}

fn cross_fit_estimate(
    table: &ObservationTable,
    nuis: &CrossFitNuisances,
    estimand: Estimand,
    method: Method,
    opts: &EstimateOptions,
) -> Result<EstimateReport> {
    let w = estimand.weights();
    let summaries = fold_summaries(table, nuis, estimand);
    let mut fold_estimates = Vec::with_capacity(summaries.len());
    for s in &summaries {
        if s.omega.abs() <= ZERO_DENOM {
            return Err(Error::DegenerateDenominator {
                context: "fold compliance contrast",
                value: s.omega,
            });
        }
        let est = match method {
            Method::OneStep => s.one_step(),
            _ => {
                if s.mean_b.abs() <= ZERO_DENOM {
                    return Err(Error::DegenerateDenominator {
                        context: "estimating equation",
                        value: s.mean_b,
                    });
                }
                s.estimating_equation()
            }
        };
        fold_estimates.push(est);
    }
    let point = fold_estimates.iter().sum::<f64>() / fold_estimates.len() as f64;

    let (z, y, d) = (table.z(), table.y(), table.d());
    let mut phi = Vec::with_capacity(table.n());
    for (s, &est_k) in summaries.iter().zip(&fold_estimates) {
        // The one-step correction is the mean influence at the plug-in, so its
        // variance is taken there too.
        let psi_k = if method == Method::OneStep { s.plug_in() } else { est_k };
        for &i in &s.rows {
            let r = nuis.predict_nuisance(i);
            phi.push(eif_value(w, z[i], y[i], f64::from(d[i]), &r, psi_k, s.omega)?);
        }
    }
    let se = sample_sd(&phi) / (table.n() as f64).sqrt();
    let denom = summaries
        .iter()
        .map(|s| s.omega * s.rows.len() as f64)
        .sum::<f64>()
        / table.n() as f64;
    let mut flags = Vec::new();
    if denom.abs() < opts.denom_tol {
        flags.push(estimand.weak_flag());
    }
    Ok(finish(
        estimand,
        method,
        point,
        se,
        fold_estimates,
        denom,
        flags,
        table.n(),
        opts.level,
    ))
}

pub fn one_step(
    table: &ObservationTable,
    nuis: &CrossFitNuisances,
    estimand: Estimand,
    opts: &EstimateOptions,
) -> Result<EstimateReport> {
    cross_fit_estimate(table, nuis, estimand, Method::OneStep, opts)
}

pub fn estimating_equation(
    table: &ObservationTable,
    nuis: &CrossFitNuisances,
    estimand: Estimand,
    opts: &EstimateOptions,
) -> Result<EstimateReport> {
    cross_fit_estimate(table, nuis, estimand, Method::EstEq, opts)
}

pub fn onestep_swate(
    table: &ObservationTable,
    nuis: &CrossFitNuisances,
    opts: &EstimateOptions,
) -> Result<EstimateReport> {
    one_step(table, nuis, Estimand::Swate, opts)
}

pub fn ee_swate(
    table: &ObservationTable,
    nuis: &CrossFitNuisances,
    opts: &EstimateOptions,
) -> Result<EstimateReport> {
    estimating_equation(table, nuis, Estimand::Swate, opts)
}

pub fn onestep_acoate(
    table: &ObservationTable,
    nuis: &CrossFitNuisances,
    opts: &EstimateOptions,
) -> Result<EstimateReport> {
    one_step(table, nuis, Estimand::Acoate, opts)
}

pub fn ee_acoate(
    table: &ObservationTable,
    nuis: &CrossFitNuisances,
    opts: &EstimateOptions,
) -> Result<EstimateReport> {
    estimating_equation(table, nuis, Estimand::Acoate, opts)
}

/// Dispatches on method; the Wald estimator ignores `nuis`.
pub fn estimate(
    table: &ObservationTable,
    nuis: Option<&CrossFitNuisances>,
    estimand: Estimand,
    method: Method,
    opts: &EstimateOptions,
) -> Result<EstimateReport> {
    match (method, nuis) {
        (Method::Wald, _) => wald(table, estimand, opts),
        (_, Some(n)) => cross_fit_estimate(table, n, estimand, method, opts),
        (_, None) => Err(Error::Usage(format!(
            "{method:?} needs fitted nuisances"
        ))),
    }
}

// ---------------------------------------------------------------------------
// Strata profiles

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProfileRow {
    pub name: String,
    pub switcher_mean: f64,
    pub always_complier_mean: f64,
    pub overall_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrataProfile {
    pub rows: Vec<ProfileRow>,
    /// Mean of `eta_b - eta_a`, floored at zero.
    pub switcher_mass: f64,
    /// Mean of `eta_a`, floored at zero.
    pub always_complier_mass: f64,
    /// Unclipped means, for diagnostics.
    pub raw_switcher_mass: f64,
    pub raw_always_complier_mass: f64,
    pub mean_eta_a: f64,
    pub mean_eta_b: f64,
}

/// Covariate means among switchers and always-compliers, reweighting each row
/// by its estimated stratum membership probability. `g` maps a covariate row to
/// the features named in `names`.
pub fn strata_profile_with(
    table: &ObservationTable,
    nuis: &CrossFitNuisances,
    names: &[String],
    g: impl Fn(&[f64]) -> Vec<f64>,
) -> Result<StrataProfile> {
    let cc = conditional_contrasts(nuis);
    let n = table.n() as f64;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / n;
    let mean_eta_a = mean(&cc.eta_a);
    let mean_eta_b = mean(&cc.eta_b);
    let sw_w: Vec<f64> = cc.eta_b.iter().zip(&cc.eta_a).map(|(b, a)| b - a).collect();
    let sw_mass = mean(&sw_w);
    let aco_mass = mean_eta_a;
    for (context, v) in [("switcher mass", sw_mass), ("always-complier mass", aco_mass)] {
        if v.abs() <= ZERO_DENOM {
            return Err(Error::DegenerateDenominator { context, value: v });
        }
    }
    let p = names.len();
    let mut s_sw = vec![0.0; p];
    let mut s_aco = vec![0.0; p];
    let mut s_all = vec![0.0; p];
    for i in 0..table.n() {
        let gi = g(table.x_row(i));
        assert_eq!(gi.len(), p, "feature map returned the wrong number of values");
        for j in 0..p {
            s_sw[j] += gi[j] * sw_w[i];
            s_aco[j] += gi[j] * cc.eta_a[i];
            s_all[j] += gi[j];
        }
    }
    let rows = names
        .iter()
        .enumerate()
        .map(|(j, name)| ProfileRow {
            name: name.clone(),
            switcher_mean: s_sw[j] / n / sw_mass,
            always_complier_mean: s_aco[j] / n / aco_mass,
            overall_mean: s_all[j] / n,
        })
        .collect();
    Ok(StrataProfile {
        rows,
        switcher_mass: sw_mass.max(0.0),
        always_complier_mass: aco_mass.max(0.0),
        raw_switcher_mass: sw_mass,
        raw_always_complier_mass: aco_mass,
        mean_eta_a,
        mean_eta_b,
    })
}

/// Profile of every raw covariate.
pub fn strata_profile(table: &ObservationTable, nuis: &CrossFitNuisances) -> Result<StrataProfile> {
    strata_profile_with(table, nuis, table.covariate_names(), |x| x.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::InstrumentCode as Z;

    fn table(rows: &[(Z, u8, f64)]) -> ObservationTable {
        ObservationTable::from_rows(
            0,
            rows.iter().map(|r| r.0).collect(),
            Vec::new(),
            rows.iter().map(|r| r.1).collect(),
            rows.iter().map(|r| r.2).collect(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn wald_hand_example() {
        // Y means: 0a=1, 1a=2, 0b=1, 1b=4; D means: 0a=0, 1a=0.5, 0b=0, 1b=1.
        let t = table(&[
            (Z::ZERO_A, 0, 1.0),
            (Z::ZERO_A, 0, 1.0),
            (Z::ONE_A, 1, 3.0),
            (Z::ONE_A, 0, 1.0),
            (Z::ZERO_B, 0, 0.0),
            (Z::ZERO_B, 0, 2.0),
            (Z::ONE_B, 1, 4.0),
            (Z::ONE_B, 1, 4.0),
        ]);
        let r = wald_swate(&t, &EstimateOptions::default()).unwrap();
        assert_eq!(r.point, 4.0);
        let a = wald_acoate(&t, &EstimateOptions::default()).unwrap();
        assert_eq!(a.point, 2.0);
    }

    #[test]
    fn wald_zero_when_itt_equal() {
        let t = table(&[
            (Z::ZERO_A, 0, 1.0),
            (Z::ONE_A, 1, 2.0),
            (Z::ZERO_B, 0, 1.0),
            (Z::ONE_B, 1, 2.0),
            (Z::ONE_A, 0, 2.0),
            (Z::ONE_B, 1, 2.0),
        ]);
        // delta_a = delta_b = 1, eta_a = 0.5, eta_b = 1.
        let r = wald_swate(&t, &EstimateOptions::default()).unwrap();
        assert_eq!(r.point, 0.0);
    }

    #[test]
    fn eif_single_term() {
        let r = RowNuisance {
            pi: [0.25; 4],
            mu_y: [0.0; 4],
            mu_d: [0.0; 4],
        };
        let v = eif_value(Estimand::Swate.weights(), Z::ONE_B, 1.0, 0.0, &r, 0.0, 0.5).unwrap();
        assert_eq!(v, 8.0);
        assert!(eif_value(Estimand::Swate.weights(), Z::ONE_B, 1.0, 0.0, &r, 0.0, 0.0).is_err());
    }

    #[test]
    fn eif_zero_at_exact_model() {
        let r = RowNuisance {
            pi: [0.1, 0.2, 0.3, 0.4],
            mu_y: [1.0, 2.0, 0.5, 3.5],
            mu_d: [0.1, 0.6, 0.0, 0.9],
        };
        // delta_b - delta_a = 3 - 1 = 2, eta_b - eta_a = 0.9 - 0.5 = 0.4, psi = 5.
        for c in InstrumentCode::ALL {
            let (y, d) = (r.mu_y[c.index()], r.mu_d[c.index()]);
            let v = eif_value(Estimand::Swate.weights(), c, y, d, &r, 5.0, 0.4).unwrap();
            assert!(v.abs() < 1e-12);
        }
    }
}
