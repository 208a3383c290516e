//! Simulation designs with known truths, a Monte Carlo driver and the
//! reporting conventions used to summarize replications.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Binomial, Distribution, Gamma, Normal, Poisson, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{InstrumentCode, ObservationTable};
use crate::error::{Error, Result};
use crate::estimators::{estimate, EstimateOptions, EstimateReport, Estimand, Method, TRUNCATION_LIMIT};
use crate::folds::make_folds;
use crate::glm::expit;
use crate::homogeneity::{ks_test, projection_test, ContrastId, KsOptions, ProjectionOptions, TestKind};
use crate::nuisance::{fit_nuisances, NuisanceSpec};
use crate::rng::{self, StreamRng};

// ---------------------------------------------------------------------------
// Latent strata

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Stratum {
    /// Never-taker under both instruments.
    Ant,
    /// Always-taker under `a`, complier under `b`.
    Sw1,
    /// Never-taker under `a`, complier under `b`.
    Sw2,
    /// Always-taker under `a`, never-taker under `b`.
    AtNt,
    /// Complier under both instruments.
    Aco,
    /// Never-taker under `a`, always-taker under `b`.
    NtAt,
    /// Always-taker under both instruments.
    Aat,
}

impl Stratum {
    pub const ALL: [Stratum; 7] = [
        Stratum::Ant,
        Stratum::Sw1,
        Stratum::Sw2,
        Stratum::AtNt,
        Stratum::Aco,
        Stratum::NtAt,
        Stratum::Aat,
    ];

    /// Potential treatment under codes `[0a, 1a, 0b, 1b]`.
    pub fn potential_d(self) -> [u8; 4] {
        match self {
            Stratum::Ant => [0, 0, 0, 0],
            Stratum::Sw1 => [1, 1, 0, 1],
            Stratum::Sw2 => [0, 0, 0, 1],
            Stratum::AtNt => [1, 1, 0, 0],
            Stratum::Aco => [0, 1, 0, 1],
            Stratum::NtAt => [0, 0, 1, 1],
            Stratum::Aat => [1, 1, 1, 1],
        }
    }

    pub fn is_switcher(self) -> bool {
        matches!(self, Stratum::Sw1 | Stratum::Sw2)
    }

    pub fn treatment(self, z: InstrumentCode) -> u8 {
        self.potential_d()[z.index()]
    }
}

/// Hidden quantities retained for oracles only.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Latent {
    pub strata: Vec<Stratum>,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    /// Conditional mean of `Y(1) - Y(0)` given covariates, confounder and stratum.
    pub effect: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SimData {
    pub table: ObservationTable,
    pub latent: Latent,
}

fn draw_categorical<const K: usize>(w: &[f64; K], rng: &mut StreamRng) -> usize {
    let total: f64 = w.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, wi) in w.iter().enumerate() {
        if u < *wi {
            return i;
        }
        u -= wi;
    }
    K - 1
}

fn bern(p: f64, rng: &mut StreamRng) -> bool {
    rng.random::<f64>() < p
}

// ---------------------------------------------------------------------------
// Estimation design

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutcomeKind {
    Continuous,
    Binary,
}

/// Strata-mass parameters for the four switcher-share settings.
pub const ALPHA_GRID: [[f64; 3]; 4] = [
    [-0.2, 0.1, 0.0005],
    [0.5, 0.2, 0.05],
    [0.3, 0.5, 0.1],
    [1.0, 1.0, 1.0],
];
/// Nominal switcher shares matching [`ALPHA_GRID`].
pub const NOMINAL_SWITCHER_SHARE: [f64; 4] = [0.11, 0.22, 0.32, 0.66];
/// Reference switcher effects for continuous outcomes with `beta = (2,2,2)`.
pub const REFERENCE_TRUTH_222: [f64; 4] = [0.917, 1.019, 1.377, 1.557];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimationScenario {
    pub n: usize,
    pub alpha_params: [f64; 3],
    pub beta_params: [f64; 3],
    pub outcome: OutcomeKind,
    /// Coefficient on `X3` in the always-complier weight. Positive two
    /// reproduces the reference switcher shares and truths.
    #[serde(default = "default_aco_x3")]
    pub aco_x3_coef: f64,
    pub seed: u64,
}

fn default_aco_x3() -> f64 {
    2.0
}

impl EstimationScenario {
    /// Scenario for switcher-share setting `cell` (0..4, increasing share).
    pub fn grid(n: usize, cell: usize, beta: [f64; 3], outcome: OutcomeKind, seed: u64) -> Self {
        Self {
            n,
            alpha_params: ALPHA_GRID[cell],
            beta_params: beta,
            outcome,
            aco_x3_coef: default_aco_x3(),
            seed,
        }
    }

    /// True if the parameters come from the listed grids.
    pub fn is_listed(&self) -> bool {
        let betas: &[[f64; 3]] = match self.outcome {
            OutcomeKind::Continuous => &[[2.0, 2.0, 2.0], [4.0, 4.0, 4.0]],
            OutcomeKind::Binary => &[[0.0, 1.0, -1.0], [0.0, 2.0, -3.0]],
        };
        ALPHA_GRID.contains(&self.alpha_params)
            && betas.contains(&self.beta_params)
            && self.aco_x3_coef == default_aco_x3()
    }

    pub fn label(&self) -> String {
        let [a1, a2, a3] = self.alpha_params;
        let [b1, b2, b3] = self.beta_params;
        format!(
            "{:?} n={} alpha=({a1},{a2},{a3}) beta=({b1},{b2},{b3})",
            self.outcome, self.n
        )
        .to_lowercase()
    }
}

/// Instrument probabilities `[0a, 1a, 0b, 1b]` of the estimation design.
pub fn estimation_pi(x: &[f64]) -> [f64; 4] {
    let pb = expit(1.0 + 0.2 * x[0] - 0.1 * x[1] + 0.3 * x[2]);
    let qa = expit(1.0 + 0.5 * x[0] - x[1] + 0.7 * x[2]);
    let qb = expit(0.5 + 0.6 * x[0] + 0.3 * x[1] + 0.4 * x[2]);
    [(1.0 - pb) * (1.0 - qa), (1.0 - pb) * qa, pb * (1.0 - qb), pb * qb]
}

struct Mvn3 {
    mean: Vector3<f64>,
    l: Matrix3<f64>,
}

impl Mvn3 {
    fn covariates() -> Self {
        let sigma = Matrix3::new(1.0, 0.2, -0.3, 0.2, 1.0, 0.1, -0.3, 0.1, 1.0);
        Self {
            mean: Vector3::new(0.0, 1.0, -0.5),
            l: sigma.cholesky().expect("covariance is positive definite").l(),
        }
    }

    /// Draw conditioned on every coordinate lying in `[-4, 4]`.
    fn draw_truncated(&self, rng: &mut StreamRng) -> Vector3<f64> {
        loop {
            let z = Vector3::from_fn(|_, _| StandardNormal.sample(rng));
            let v = self.mean + self.l * z;
            if v.iter().all(|c| c.abs() <= 4.0) {
                return v;
            }
        }
    }
}

struct Unit {
    x: [f64; 8],
    stratum: Stratum,
    u: f64,
}

fn estimation_strata_weights(s: &EstimationScenario, x: &[f64; 8], u: f64) -> [f64; 7] {
    let [a1, a2, a3] = s.alpha_params;
    let (x1, x2, x3) = (x[0], x[1], x[2]);
    [
        (1.0 - x2 + 0.7 * x3 + 0.3 * u).exp(),
        (a1 + a2 * (x1 + 2.0 * x2 - x3) + a3 * u).exp(),
        (a1 + a2 * (-x1 - 2.0 * x2) + a3 * u).exp(),
        (1.0 + 0.5 * x1 + x2 + 0.5 * x3 + 0.5 * u).exp(),
        (1.0 + 0.8 * x1 - 2.0 * x2 + s.aco_x3_coef * x3 + 0.5 * u).exp(),
        (1.0 - 0.5 * x1 - x2 - 0.5 * x3 - 0.5 * u).exp(),
        (1.0 + 2.0 * x1 + 2.0 * x3 - u).exp(),
    ]
}

fn draw_estimation_unit(s: &EstimationScenario, mvn: &Mvn3, rng: &mut StreamRng) -> Unit {
    let v = mvn.draw_truncated(rng);
    let binom = Binomial::new(4, 0.5).expect("valid binomial");
    let x = [
        v[0],
        v[1],
        v[2],
        f64::from(u8::from(bern(0.5, rng))),
        f64::from(u8::from(bern(0.5, rng))),
        f64::from(u8::from(bern(0.5, rng))),
        rng.random_range(-3.0..3.0),
        binom.sample(rng) as f64,
    ];
    let u = 0.6 * rng.sample::<f64, _>(StandardNormal);
    let w = estimation_strata_weights(s, &x, u);
    let stratum = Stratum::ALL[draw_categorical(&w, rng)];
    Unit { x, stratum, u }
}

/// Conditional means `(E[Y(0)], E[Y(1)])` given covariates, confounder and stratum,
/// excluding the shared noise term for continuous outcomes.
fn estimation_outcome_means(s: &EstimationScenario, unit: &Unit) -> (f64, f64) {
    let x = &unit.x;
    let u = unit.u;
    let [b1, b2, b3] = s.beta_params;
    let (x1, x2, x3, x4) = (x[0], x[1], x[2], x[3]);
    match s.outcome {
        OutcomeKind::Continuous => {
            let y0 = 1.0 + x1 + x2 + x3 + x4 + u;
            let y1 = match unit.stratum {
                Stratum::Ant | Stratum::Aat => 1.0 + x1 + 2.0 * x2 + 2.0 * x3 + x4 + u,
                Stratum::AtNt | Stratum::NtAt => 1.0 + x1 + x2 + 2.0 * x3 + x4 + u,
                Stratum::Sw1 | Stratum::Sw2 => b1 + b2 * x1 + 2.0 * x2 + b3 * x3 + x4 + u,
                Stratum::Aco => 1.0 + x1 + 2.0 * x2 + 0.2 * x2 * x2 + x3 + x4 + u,
            };
            (y0, y1)
        }
        OutcomeKind::Binary => {
            let (x5, x6, x7, x8) = (x[4], x[5], x[6], x[7]);
            let common = x4 + x5 - x6 - x7 + x8 + u;
            let p0 = match unit.stratum {
                Stratum::Ant | Stratum::Aat => expit(1.0 + x1 + 2.0 * x2 + 2.0 * x3 + common),
                Stratum::AtNt | Stratum::NtAt => expit(1.0 + x1 + x2 + 2.0 * x3 + common),
                Stratum::Sw1 | Stratum::Sw2 => {
                    expit(b1 + b2 * x1 + 2.0 * x2 + x3 + b3 * x6 - x7 + 2.0 * x8 + u)
                }
                Stratum::Aco => {
                    expit(1.0 + x1 + 2.0 * x2 + 0.2 * x2 * x2 + x3 + common)
                }
            };
            (p0, expit(1.0 + x1 + x2 + x3 + u))
        }
    }
}

/// Draws one dataset of the estimation design from an explicit stream.
pub fn gen_estimation_data_with(s: &EstimationScenario, rng: &mut StreamRng) -> Result<SimData> {
    let mvn = Mvn3::covariates();
    let n = s.n;
    let mut z = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n * 8);
    let mut d = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut latent = Latent {
        strata: Vec::with_capacity(n),
        y0: Vec::with_capacity(n),
        y1: Vec::with_capacity(n),
        effect: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let unit = draw_estimation_unit(s, &mvn, rng);
        let pi = estimation_pi(&unit.x);
        let code = InstrumentCode::from_index(draw_categorical(&pi, rng));
        let (m0, m1) = estimation_outcome_means(s, &unit);
        let (y0, y1) = match s.outcome {
            OutcomeKind::Continuous => {
                let eps: f64 = rng.sample(StandardNormal);
                (m0 + eps, m1 + eps)
            }
            OutcomeKind::Binary => (
                f64::from(u8::from(bern(m0, rng))),
                f64::from(u8::from(bern(m1, rng))),
            ),
        };
        let di = unit.stratum.treatment(code);
        z.push(code);
        x.extend_from_slice(&unit.x);
        d.push(di);
        y.push(if di == 1 { y1 } else { y0 });
        latent.strata.push(unit.stratum);
        latent.y0.push(y0);
        latent.y1.push(y1);
        latent.effect.push(m1 - m0);
    }
    Ok(SimData {
        table: ObservationTable::from_rows(8, z, x, d, y, None)?,
        latent,
    })
}

pub fn gen_estimation_data(s: &EstimationScenario) -> Result<SimData> {
    gen_estimation_data_with(s, &mut rng::stream(s.seed, "data", 0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleValue {
    pub value: f64,
    pub mc_se: f64,
    /// Fraction of draws in the target stratum.
    pub share: f64,
    pub draws: usize,
}

/// Mean and standard error of `values[i]` over rows where `keep[i]` holds.
fn masked_mean(values: impl Iterator<Item = (bool, f64)>, total: usize) -> OracleValue {
    let (mut k, mut s, mut ss) = (0usize, 0.0, 0.0);
    for (keep, v) in values {
        if keep {
            k += 1;
            s += v;
            ss += v * v;
        }
    }
    let kf = k as f64;
    let mean = s / kf;
    let var = (ss / kf - mean * mean).max(0.0) * kf / (kf - 1.0).max(1.0);
    OracleValue {
        value: mean,
        mc_se: (var / kf).sqrt(),
        share: kf / total as f64,
        draws: total,
    }
}

const ORACLE_CHUNK: usize = 50_000;

/// Brute-force average effect among latent switchers over `m` simulated units.
pub fn true_swate_oracle(s: &EstimationScenario, m: usize) -> OracleValue {
    estimation_oracle(s, m, Stratum::is_switcher)
}

/// Same as [`true_swate_oracle`] for always-compliers.
pub fn true_acoate_oracle(s: &EstimationScenario, m: usize) -> OracleValue {
    estimation_oracle(s, m, |st| st == Stratum::Aco)
}

fn estimation_oracle(s: &EstimationScenario, m: usize, keep: fn(Stratum) -> bool) -> OracleValue {
    let mvn = Mvn3::covariates();
    let chunks = m.div_ceil(ORACLE_CHUNK);
    let parts: Vec<(bool, f64)> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut r = rng::stream(s.seed, "oracle", c as u64);
            let len = ORACLE_CHUNK.min(m - c * ORACLE_CHUNK);
            (0..len)
                .map(|_| {
                    let unit = draw_estimation_unit(s, &mvn, &mut r);
                    let (m0, m1) = estimation_outcome_means(s, &unit);
                    (keep(unit.stratum), m1 - m0)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    masked_mean(parts.into_iter(), m)
}

/// Stratum frequencies over `m` simulated units, in [`Stratum::ALL`] order.
pub fn estimation_strata_shares(s: &EstimationScenario, m: usize) -> [f64; 7] {
    let mvn = Mvn3::covariates();
    let mut r = rng::stream(s.seed, "oracle", u64::MAX);
    let mut counts = [0usize; 7];
    for _ in 0..m {
        let unit = draw_estimation_unit(s, &mvn, &mut r);
        counts[Stratum::ALL.iter().position(|&t| t == unit.stratum).unwrap()] += 1;
    }
    counts.map(|c| c as f64 / m as f64)
}

// ---------------------------------------------------------------------------
// Testing design

pub const SWITCHER_ALPHA_GRID: [f64; 6] = [0.1, 0.2, 0.4, 0.6, 0.8, 0.9];
pub const TESTING_BETA_GRID: [[f64; 3]; 3] = [[1.0, 2.0, 2.0], [1.0, 2.5, 2.5], [2.0, 3.0, 3.0]];
/// Combined switcher plus always-complier share the design is labelled with.
pub const NOMINAL_COMPLIER_MASS: f64 = 0.9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestingScenario {
    pub n: usize,
    /// Always-complier fraction of the combined switcher and always-complier mass.
    pub switcher_alpha: f64,
    pub beta_params: [f64; 3],
    pub seed: u64,
}

impl TestingScenario {
    pub fn new(n: usize, switcher_alpha: f64, beta: [f64; 3], seed: u64) -> Self {
        Self {
            n,
            switcher_alpha,
            beta_params: beta,
            seed,
        }
    }

    /// The switcher share the design is labelled with: `(1 - alpha) * 0.9`.
    pub fn nominal_switcher_share(&self) -> f64 {
        (1.0 - self.switcher_alpha) * NOMINAL_COMPLIER_MASS
    }

    pub fn is_null(&self) -> bool {
        self.beta_params == [1.0, 2.0, 2.0]
    }

    pub fn label(&self) -> String {
        let [b1, b2, b3] = self.beta_params;
        format!(
            "testing n={} alpha={} beta=({b1},{b2},{b3})",
            self.n, self.switcher_alpha
        )
    }
}

fn testing_strata_weights(s: &TestingScenario, x1: f64, x2: f64, u: f64) -> [f64; 7] {
    let i = f64::from(u8::from(u > 0.0));
    let ant = (1.0 - x2 + 0.3 * i).exp();
    let sw = (3.5 + 0.5 * x1 + x2 + 0.1 * i).exp();
    let atnt = (1.0 + 0.5 * x1 + x2 + 0.5 * i).exp();
    let aco = (1.0 + 0.8 * x1 - 2.0 * x2 + 0.5 * i).exp();
    let ntat = (1.0 - 0.5 * x1 - x2 - 0.5 * i).exp();
    let aat = (1.0 + 2.0 * x1 - i).exp();
    let pool = 2.0 * sw + aco;
    let a = s.switcher_alpha;
    [
        ant,
        0.5 * (1.0 - a) * pool,
        0.5 * (1.0 - a) * pool,
        atnt,
        a * pool,
        ntat,
        aat,
    ]
}

/// Instrument probabilities of the testing design.
pub fn testing_pi(x: &[f64]) -> [f64; 4] {
    let pa = expit(
        0.1 * f64::from(u8::from(x[0] > 0.0)) - 0.1 * f64::from(u8::from(x[1] > 0.0)),
    );
    [0.5 * pa, 0.5 * pa, 0.5 * (1.0 - pa), 0.5 * (1.0 - pa)]
}

struct TestingUnit {
    x: [f64; 2],
    u: f64,
    stratum: Stratum,
}

fn draw_testing_unit(s: &TestingScenario, rng: &mut StreamRng) -> TestingUnit {
    let x = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
    let u = -0.3 + 0.3 * rng.sample::<f64, _>(StandardNormal);
    let w = testing_strata_weights(s, x[0], x[1], u);
    TestingUnit {
        x,
        u,
        stratum: Stratum::ALL[draw_categorical(&w, rng)],
    }
}

fn testing_outcome_means(s: &TestingScenario, t: &TestingUnit) -> (f64, f64) {
    let [b1, b2, b3] = s.beta_params;
    let (x1, x2, u) = (t.x[0], t.x[1], t.u);
    let y0 = 1.0 + x1 + x2 + u;
    let y1 = match t.stratum {
        Stratum::Sw1 | Stratum::Sw2 => b1 + b2 * x1 + b3 * x2 + u,
        Stratum::Aco => 1.0 + 2.0 * x1 + 2.0 * x2 + u,
        _ => 1.0 + x1 + x2 + u,
    };
    (y0, y1)
}

pub fn gen_testing_data_with(s: &TestingScenario, rng: &mut StreamRng) -> Result<SimData> {
    let n = s.n;
    let mut z = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(2 * n);
    let mut d = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut latent = Latent {
        strata: Vec::with_capacity(n),
        y0: Vec::with_capacity(n),
        y1: Vec::with_capacity(n),
        effect: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let t = draw_testing_unit(s, rng);
        let code = InstrumentCode::from_index(draw_categorical(&testing_pi(&t.x), rng));
        let (m0, m1) = testing_outcome_means(s, &t);
        let eps: f64 = rng.sample(StandardNormal);
        let (y0, y1) = (m0 + eps, m1 + eps);
        let di = t.stratum.treatment(code);
        z.push(code);
        x.extend_from_slice(&t.x);
        d.push(di);
        y.push(if di == 1 { y1 } else { y0 });
        latent.strata.push(t.stratum);
        latent.y0.push(y0);
        latent.y1.push(y1);
        latent.effect.push(m1 - m0);
    }
    Ok(SimData {
        table: ObservationTable::from_rows(2, z, x, d, y, None)?,
        latent,
    })
}

pub fn gen_testing_data(s: &TestingScenario) -> Result<SimData> {
    gen_testing_data_with(s, &mut rng::stream(s.seed, "data", 0))
}

/// Switcher and always-complier effects and shares in the testing design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestingOracle {
    pub switcher: OracleValue,
    pub always_complier: OracleValue,
}

pub fn testing_oracle(s: &TestingScenario, m: usize) -> TestingOracle {
    let chunks = m.div_ceil(ORACLE_CHUNK);
    let draws: Vec<(Stratum, f64)> = (0..chunks)
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut r = rng::stream(s.seed, "oracle", c as u64);
            let len = ORACLE_CHUNK.min(m - c * ORACLE_CHUNK);
            (0..len)
                .map(|_| {
                    let t = draw_testing_unit(s, &mut r);
                    let (m0, m1) = testing_outcome_means(s, &t);
                    (t.stratum, m1 - m0)
                })
                .collect::<Vec<_>>()
        })
        .collect();
    TestingOracle {
        switcher: masked_mean(draws.iter().map(|(t, e)| (t.is_switcher(), *e)), m),
        always_complier: masked_mean(draws.iter().map(|(t, e)| (*t == Stratum::Aco, *e)), m),
    }
}

// ---------------------------------------------------------------------------
// Trial-like fixture with a count outcome and follow-up offsets

/// Cell sizes `[0a, 1a, 0b, 1b]` of the fixture.
pub const PLCO_CELLS: [usize; 4] = [4210, 4204, 4970, 4978];
pub const PLCO_FEATURES: [&str; 8] = [
    "age_std", "male", "minority", "educ_hs", "educ_college", "smoke_current", "smoke_former",
    "bmi_over25",
];
/// Multinomial-logit coefficients (intercept first, then [`PLCO_FEATURES`])
/// for always-compliers and switchers against never-takers.
const PLCO_ACO_COEF: [f64; 9] = [1.703, 0.913, -1.562, -0.383, 0.697, 0.296, 0.221, 0.468, 0.229];
const PLCO_SW_COEF: [f64; 9] = [1.166, 1.713, -0.59, -1.136, 0.578, 0.036, 0.13, 0.352, -0.127];
/// Baseline event rate per 1000 person-years and the treatment log rate ratio.
const PLCO_BASE_RATE: f64 = 1.45;
const PLCO_LOG_RR: f64 = -0.05;

struct StageProfile {
    age: (f64, f64),
    male: f64,
    minority: f64,
    education: [f64; 3],
    smoking: [f64; 3],
    bmi_over25: f64,
    follow_up: (f64, f64),
}

const STAGE_A: StageProfile = StageProfile {
    age: (64.7, 5.1),
    male: 0.373,
    minority: 0.211,
    education: [0.143, 0.406, 0.451],
    smoking: [0.428, 0.135, 0.437],
    bmi_over25: 0.657,
    follow_up: (12.1, 3.9),
};

const STAGE_B: StageProfile = StageProfile {
    age: (60.4, 5.3),
    male: 0.436,
    minority: 0.141,
    education: [0.072, 0.319, 0.609],
    smoking: [0.42, 0.143, 0.437],
    bmi_over25: 0.706,
    follow_up: (9.6, 2.4),
};

/// Synthetic two-stage screening trial with one-sided noncompliance,
/// a rare-event count outcome and follow-up time as offset. The treatment
/// lowers the event rate by the same factor for everyone.
pub fn gen_plco_like(seed: u64) -> Result<SimData> {
    gen_plco_like_sized(PLCO_CELLS, seed)
}

pub fn gen_plco_like_sized(cells: [usize; 4], seed: u64) -> Result<SimData> {
    let mut r = rng::stream(seed, "plco", 0);
    let n: usize = cells.iter().sum();
    let mut z = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(8 * n);
    let mut d = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    let mut off = Vec::with_capacity(n);
    let mut latent = Latent {
        strata: Vec::with_capacity(n),
        y0: Vec::with_capacity(n),
        y1: Vec::with_capacity(n),
        effect: Vec::with_capacity(n),
    };
    for code in InstrumentCode::ALL {
        let prof = match code.stage {
            crate::data::Stage::A => &STAGE_A,
            crate::data::Stage::B => &STAGE_B,
        };
        let age = Normal::new(prof.age.0, prof.age.1).expect("valid normal");
        let (fm, fs) = prof.follow_up;
        let fu = Gamma::new((fm / fs).powi(2), fs * fs / fm).expect("valid gamma");
        for _ in 0..cells[code.index()] {
            let a = age.sample(&mut r);
            let educ = draw_categorical(&prof.education, &mut r);
            let smoke = draw_categorical(&prof.smoking, &mut r);
            let f = [
                (a - 62.0) / 5.0,
                f64::from(u8::from(bern(prof.male, &mut r))),
                f64::from(u8::from(bern(prof.minority, &mut r))),
                f64::from(u8::from(educ == 1)),
                f64::from(u8::from(educ == 2)),
                f64::from(u8::from(smoke == 1)),
                f64::from(u8::from(smoke == 2)),
                f64::from(u8::from(bern(prof.bmi_over25, &mut r))),
            ];
            let lin = |c: &[f64; 9]| c[0] + c[1..].iter().zip(&f).map(|(b, v)| b * v).sum::<f64>();
            let w = [1.0, lin(&PLCO_SW_COEF).exp(), lin(&PLCO_ACO_COEF).exp()];
            let stratum = [Stratum::Ant, Stratum::Sw2, Stratum::Aco][draw_categorical(&w, &mut r)];
            let t: f64 = fu.sample(&mut r).max(0.05);
            let log_rate = (PLCO_BASE_RATE / 1000.0).ln() + 0.06 * (a - 62.0) + 0.25 * f[1]
                - 0.1 * f[2]
                + 0.2 * f[5]
                + 0.1 * f[7];
            let m0 = t * log_rate.exp();
            let m1 = m0 * PLCO_LOG_RR.exp();
            let di = stratum.treatment(code);
            let mean = if di == 1 { m1 } else { m0 };
            let count = if mean > 0.0 {
                Poisson::new(mean).expect("positive mean").sample(&mut r)
            } else {
                0.0
            };
            z.push(code);
            x.extend_from_slice(&f);
            d.push(di);
            y.push(count);
            off.push(t);
            latent.strata.push(stratum);
            latent.y0.push(m0);
            latent.y1.push(m1);
            latent.effect.push(m1 - m0);
        }
    }
    let names = PLCO_FEATURES.iter().map(|s| s.to_string()).collect();
    Ok(SimData {
        table: ObservationTable::new(names, z, x, d, y, Some(off))?,
        latent,
    })
}

// ---------------------------------------------------------------------------
// Monte Carlo summaries

/// Mean after clamping values below the `lo` and above the `hi` quantiles.
pub fn winsorized_mean(values: &[f64], lo: f64, hi: f64) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    let a = crate::homogeneity::quantile(&mut v, lo);
    let b = crate::homogeneity::quantile(&mut v, hi);
    values.iter().map(|x| x.clamp(a, b)).sum::<f64>() / values.len() as f64
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsRow {
    pub scenario: String,
    pub estimand: Estimand,
    pub method: Method,
    pub n: usize,
    pub reps: usize,
    pub truth: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    pub relative_bias: f64,
    pub se_winsorized_mean: f64,
    pub coverage: f64,
    pub acceptance_rate: f64,
    pub failures: usize,
}

/// Aggregates replications: estimates with `|point| > 500` and failed fits
/// are not accepted; coverage and the SE summary use accepted ones only.
pub fn summarize(
    scenario: &str,
    estimand: Estimand,
    method: Method,
    n: usize,
    truth: f64,
    reps: &[Result<EstimateReport>],
) -> MetricsRow {
    let accepted: Vec<&EstimateReport> = reps
        .iter()
        .filter_map(|r| r.as_ref().ok())
        .filter(|r| r.point.is_finite() && r.point.abs() <= TRUNCATION_LIMIT)
        .collect();
    let failures = reps.iter().filter(|r| r.is_err()).count();
    let k = accepted.len() as f64;
    let mean = accepted.iter().map(|r| r.point).sum::<f64>() / k;
    let ses: Vec<f64> = accepted.iter().map(|r| r.se).collect();
    let coverage = accepted.iter().filter(|r| r.covers(truth)).count() as f64 / k;
    MetricsRow {
        scenario: scenario.to_string(),
        estimand,
        method,
        n,
        reps: reps.len(),
        truth,
        mean_estimate: mean,
        bias: mean - truth,
        relative_bias: (mean - truth) / truth,
        se_winsorized_mean: winsorized_mean(&ses, 0.05, 0.95),
        coverage,
        acceptance_rate: k / reps.len() as f64,
        failures,
    }
}

/// Shared settings for simulation studies.
#[derive(Debug, Clone)]
pub struct StudyOptions {
    pub folds: usize,
    pub nuisance: NuisanceSpec,
    pub estimate: EstimateOptions,
    pub seed: u64,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            folds: 5,
            nuisance: NuisanceSpec::glm(crate::glm::Family::LinearGaussian),
            estimate: EstimateOptions::default(),
            seed: 0,
        }
    }
}

/// Fits one estimate on replicate `rep` of the estimation design; the
/// replicate draws its data from the `("mc", rep)` stream.
pub fn estimation_replicate(
    s: &EstimationScenario,
    rep: usize,
    methods: &[(Estimand, Method)],
    opts: &StudyOptions,
) -> Vec<Result<EstimateReport>> {
    let run = || -> Result<(ObservationTable, Option<crate::nuisance::CrossFitNuisances>)> {
        let data = gen_estimation_data_with(s, &mut rng::stream(opts.seed, "mc", rep as u64))?;
        let table = data.table;
        let needs_nuis = methods.iter().any(|(_, m)| *m != Method::Wald);
        let nuis = if needs_nuis {
            let folds = make_folds(
                table.z(),
                opts.folds,
                rng::derive_seed(opts.seed, "mc-folds", rep as u64),
            )?;
            Some(fit_nuisances(&table, &folds, &opts.nuisance)?)
        } else {
            None
        };
        Ok((table, nuis))
    };
    match run() {
        Err(e) => methods.iter().map(|_| Err(clone_error(&e))).collect(),
        Ok((table, nuis)) => {
            let mut eo = opts.estimate.clone();
            eo.seed = rng::derive_seed(opts.seed, "mc-boot", rep as u64);
            methods
                .iter()
                .map(|&(est, m)| estimate(&table, nuis.as_ref(), est, m, &eo))
                .collect()
        }
    }
}

/// Errors are not `Clone` (they may wrap I/O errors); a failed replicate
/// reports its message once per requested method.
fn clone_error(e: &Error) -> Error {
    Error::Usage(format!("replicate failed: {e}"))
}

/// Runs `reps` replications and summarizes each requested method against
/// `truth`.
pub fn run_monte_carlo_multi(
    s: &EstimationScenario,
    reps: usize,
    methods: &[(Estimand, Method)],
    truth: &[f64],
    opts: &StudyOptions,
) -> Vec<MetricsRow> {
    assert_eq!(methods.len(), truth.len(), "one truth per method");
    let results: Vec<Vec<Result<EstimateReport>>> = (0..reps)
        .into_par_iter()
        .map(|rep| estimation_replicate(s, rep, methods, opts))
        .collect();
    let mut cols: Vec<Vec<Result<EstimateReport>>> =
        methods.iter().map(|_| Vec::with_capacity(reps)).collect();
    for rep in results {
        for (m, r) in rep.into_iter().enumerate() {
            cols[m].push(r);
        }
    }
    methods
        .iter()
        .zip(cols)
        .enumerate()
        .map(|(m, (&(est, meth), col))| summarize(&s.label(), est, meth, s.n, truth[m], &col))
        .collect()
}

pub fn run_monte_carlo(
    s: &EstimationScenario,
    reps: usize,
    estimand: Estimand,
    method: Method,
    truth: f64,
    opts: &StudyOptions,
) -> MetricsRow {
    run_monte_carlo_multi(s, reps, &[(estimand, method)], &[truth], opts).remove(0)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestStudyRow {
    pub scenario: String,
    pub kind: TestKind,
    pub contrast: ContrastId,
    pub reps: usize,
    pub rejection_rate: f64,
    pub failures: usize,
    pub mean_excluded: f64,
}

#[derive(Debug, Clone)]
pub struct TestStudyOptions {
    pub folds: usize,
    pub nuisance: NuisanceSpec,
    pub projection: ProjectionOptions,
    pub ks: KsOptions,
    pub seed: u64,
}

impl Default for TestStudyOptions {
    fn default() -> Self {
        Self {
            folds: 5,
            nuisance: NuisanceSpec::glm(crate::glm::Family::LinearGaussian),
            projection: ProjectionOptions::default(),
            ks: KsOptions::default(),
            seed: 0,
        }
    }
}

/// Rejection rates of the requested tests over `reps` replications of the
/// testing design. Failed replications count as non-rejections.
pub fn run_test_study(
    s: &TestingScenario,
    reps: usize,
    kind: TestKind,
    contrasts: &[ContrastId],
    opts: &TestStudyOptions,
) -> Vec<TestStudyRow> {
    let outcomes: Vec<Vec<Option<(bool, usize)>>> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let fitted = (|| -> Result<_> {
                let data = gen_testing_data_with(s, &mut rng::stream(opts.seed, "mc", rep as u64))?;
                let folds = make_folds(
                    data.table.z(),
                    opts.folds,
                    rng::derive_seed(opts.seed, "mc-folds", rep as u64),
                )?;
                let nuis = fit_nuisances(&data.table, &folds, &opts.nuisance)?;
                Ok((data.table, nuis))
            })();
            let Ok((table, nuis)) = fitted else {
                return vec![None; contrasts.len()];
            };
            contrasts
                .iter()
                .map(|&j| {
                    let rep_result = match kind {
                        TestKind::ProjectionWald => projection_test(&table, &nuis, j, &opts.projection),
                        TestKind::KS => {
                            let mut ko = opts.ks.clone();
                            ko.seed = rng::derive_seed(opts.seed, "mc-ks", rep as u64);
                            ks_test(&table, &nuis, j, &ko)
                        }
                    };
                    rep_result.ok().map(|r| (r.reject, r.excluded))
                })
                .collect()
        })
        .collect();
    contrasts
        .iter()
        .enumerate()
        .map(|(c, &j)| {
            let col: Vec<Option<(bool, usize)>> = outcomes.iter().map(|o| o[c]).collect();
            let ok: Vec<(bool, usize)> = col.iter().flatten().copied().collect();
            TestStudyRow {
                scenario: s.label(),
                kind,
                contrast: j,
                reps,
                rejection_rate: ok.iter().filter(|o| o.0).count() as f64 / reps as f64,
                failures: reps - ok.len(),
                mean_excluded: ok.iter().map(|o| o.1 as f64).sum::<f64>() / ok.len().max(1) as f64,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn treatment_rule() {
        assert_eq!(Stratum::Aco.treatment(InstrumentCode::ZERO_B), 0);
        assert_eq!(Stratum::Aco.treatment(InstrumentCode::ONE_A), 1);
        for z in InstrumentCode::ALL {
            assert_eq!(Stratum::Aat.treatment(z), 1);
            assert_eq!(Stratum::Ant.treatment(z), 0);
        }
        // Switchers are non-compliers under a and compliers under b.
        for s in [Stratum::Sw1, Stratum::Sw2] {
            let d = s.potential_d();
            assert_eq!(d[0], d[1]);
            assert_eq!((d[2], d[3]), (0, 1));
        }
    }

    #[test]
    fn winsorized_mean_clamps_tails() {
        let mut v: Vec<f64> = (1..=100).map(f64::from).collect();
        v[99] = 1e6;
        let w = winsorized_mean(&v, 0.05, 0.95);
        assert!(w < 60.0 && w > 45.0);
        assert_eq!(winsorized_mean(&[2.0; 10], 0.05, 0.95), 2.0);
    }

    #[test]
    fn pi_sums_to_one() {
        for x in [[0.0; 8], [1.0, -1.0, 2.0, 0.0, 1.0, 0.0, 2.5, 3.0]] {
            assert!((estimation_pi(&x).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        assert!((testing_pi(&[1.0, -1.0]).iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn generation_is_deterministic() {
        let s = EstimationScenario::grid(300, 3, [2.0, 2.0, 2.0], OutcomeKind::Continuous, 4);
        let a = gen_estimation_data(&s).unwrap();
        let b = gen_estimation_data(&s).unwrap();
        assert_eq!(a.table, b.table);
        assert_eq!(a.latent, b.latent);
    }
}
