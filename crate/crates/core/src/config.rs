//! Run configuration read from a TOML file. Every key is optional; command
//! line flags override file values.
//!
//! ```toml
//! seed = 7
//! threads = 4
//!
//! [data]
//! min_cell = 10
//!
//! [nuisance]
//! folds = 5
//! clip_eps = 0.01
//!
//! [nuisance.pi]
//! ridge = 1e-6
//!
//! [nuisance.mu_y]
//! family = "poisson_log"
//! use_boost = true
//! boost = { trees = 200, depth = 1, shrinkage = 0.1 }
//!
//! [nuisance.mu_d]
//! max_iter = 50
//!
//! [estimators]
//! level = 0.95
//! denom_tol = 0.02
//! wald_se = "bootstrap"
//! boot_reps = 500
//!
//! [tests]
//! alpha = 0.05
//! basis = ["age_std", "male"]
//! draws = 2000
//! grid_max = 500
//!
//! [sim]
//! design = "estimation"
//! reps = 200
//! n = [1000, 2000]
//! cells = [3]
//! beta = [[2.0, 2.0, 2.0]]
//! methods = ["ee", "onestep"]
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{ObservationTable, DEFAULT_MIN_CELL};
use crate::error::{Error, Result};
use crate::estimators::{EstimateOptions, Estimand, Method, WaldSe, DEFAULT_DENOM_TOL};
use crate::glm::{BoostParams, Family, LearnerSpec};
use crate::homogeneity::{
    KsOptions, ProjectionOptions, DEFAULT_DENOM_POINT_TOL, DEFAULT_DRAWS, DEFAULT_GRID_MAX,
    DEFAULT_JITTER0,
};
use crate::nuisance::{NuisanceSpec, PiSource, DEFAULT_CLIP_EPS};
use crate::sim::OutcomeKind;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: Option<u64>,
    pub threads: Option<usize>,
    pub data: DataSection,
    pub nuisance: NuisanceSection,
    pub estimators: EstimatorSection,
    pub tests: TestSection,
    pub sim: SimSection,
}

impl Config {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let p = path.as_ref();
        let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
        Self::from_toml_str(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataSection {
    pub min_cell: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            min_cell: DEFAULT_MIN_CELL,
        }
    }
}

/// Learner settings layered over a default spec.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnerSection {
    pub family: Option<Family>,
    pub ridge: Option<f64>,
    pub max_iter: Option<usize>,
    pub tol: Option<f64>,
    pub use_boost: Option<bool>,
    pub boost: Option<BoostParams>,
    pub intercept_only: Option<bool>,
}

impl LearnerSection {
    pub fn apply(&self, mut base: LearnerSpec) -> LearnerSpec {
        if let Some(f) = self.family {
            base.family = f;
        }
        if let Some(v) = self.ridge {
            base.ridge = v;
        }
        if let Some(v) = self.max_iter {
            base.max_iter = v;
        }
        if let Some(v) = self.tol {
            base.tol = v;
        }
        if let Some(v) = self.use_boost {
            base.use_boost = v;
        }
        if let Some(v) = self.boost {
            base.boost = v;
        }
        if let Some(v) = self.intercept_only {
            base.intercept_only = v;
        }
        base
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NuisanceSection {
    pub folds: usize,
    pub clip_eps: f64,
    pub pi: LearnerSection,
    pub mu_y: LearnerSection,
    pub mu_d: LearnerSection,
}

impl Default for NuisanceSection {
    fn default() -> Self {
        Self {
            folds: 5,
            clip_eps: DEFAULT_CLIP_EPS,
            pi: LearnerSection::default(),
            mu_y: LearnerSection::default(),
            mu_d: LearnerSection::default(),
        }
    }
}

impl NuisanceSection {
    /// Learner specs for a table. Without an explicit outcome family, tables
    /// with an offset column get a Poisson outcome model and others a linear one.
    pub fn spec_for(&self, table: Option<&ObservationTable>) -> NuisanceSpec {
        let outcome = if table.is_some_and(|t| t.offset().is_some()) {
            Family::PoissonLog
        } else {
            Family::LinearGaussian
        };
        self.spec_with_outcome(outcome)
    }

    pub fn spec_with_outcome(&self, outcome: Family) -> NuisanceSpec {
        NuisanceSpec {
            pi: PiSource::Fitted(self.pi.apply(LearnerSpec::logistic())),
            mu_y: self.mu_y.apply(LearnerSpec::new(outcome)),
            mu_d: self.mu_d.apply(LearnerSpec::logistic()),
            clip_eps: self.clip_eps,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorSection {
    pub level: f64,
    pub denom_tol: f64,
    pub wald_se: WaldSe,
    pub boot_reps: usize,
}

impl Default for EstimatorSection {
    fn default() -> Self {
        Self {
            level: 0.95,
            denom_tol: DEFAULT_DENOM_TOL,
            wald_se: WaldSe::Sandwich,
            boot_reps: 500,
        }
    }
}

impl EstimatorSection {
    pub fn options(&self, seed: u64) -> EstimateOptions {
        EstimateOptions {
            level: self.level,
            denom_tol: self.denom_tol,
            wald_se: self.wald_se,
            boot_reps: self.boot_reps,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TestSection {
    pub alpha: f64,
    pub denom_point_tol: f64,
    /// Covariate names entering the projection basis; all covariates if empty.
    pub basis: Vec<String>,
    pub draws: usize,
    pub grid_max: usize,
    pub jitter0: f64,
}

impl Default for TestSection {
    fn default() -> Self {
        Self {
            alpha: 0.05,
            denom_point_tol: DEFAULT_DENOM_POINT_TOL,
            basis: Vec::new(),
            draws: DEFAULT_DRAWS,
            grid_max: DEFAULT_GRID_MAX,
            jitter0: DEFAULT_JITTER0,
        }
    }
}

impl TestSection {
    pub fn projection(&self, names: &[String]) -> Result<ProjectionOptions> {
        let columns = if self.basis.is_empty() {
            None
        } else {
            Some(
                self.basis
                    .iter()
                    .map(|b| {
                        names
                            .iter()
                            .position(|n| n == b)
                            .ok_or_else(|| Error::Config(format!("unknown basis covariate {b:?}")))
                    })
                    .collect::<Result<Vec<_>>>()?,
            )
        };
        Ok(ProjectionOptions {
            alpha: self.alpha,
            denom_point_tol: self.denom_point_tol,
            columns,
        })
    }

    pub fn ks(&self, seed: u64) -> KsOptions {
        KsOptions {
            alpha: self.alpha,
            draws: self.draws,
            grid_max: self.grid_max,
            jitter0: self.jitter0,
            denom_point_tol: self.denom_point_tol,
            seed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimDesign {
    Estimation,
    Testing,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestChoice {
    Projection,
    Ks,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub design: SimDesign,
    pub reps: usize,
    pub oracle_draws: usize,
    pub n: Vec<usize>,
    /// Switcher-share settings of the estimation design, by index.
    pub cells: Vec<usize>,
    pub beta: Vec<[f64; 3]>,
    pub outcome: OutcomeKind,
    pub estimand: Estimand,
    pub methods: Vec<Method>,
    pub aco_x3_coef: f64,
    pub switcher_alpha: Vec<f64>,
    pub test: TestChoice,
    pub contrasts: Vec<u8>,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            design: SimDesign::Estimation,
            reps: 200,
            oracle_draws: 1_000_000,
            n: vec![1000],
            cells: vec![0, 1, 2, 3],
            beta: Vec::new(),
            outcome: OutcomeKind::Continuous,
            estimand: Estimand::Swate,
            methods: vec![Method::EstEq],
            aco_x3_coef: 2.0,
            switcher_alpha: vec![0.1, 0.6, 0.9],
            test: TestChoice::Projection,
            contrasts: vec![1, 2, 3],
        }
    }
}
