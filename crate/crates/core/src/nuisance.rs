//! Cross-fitted nuisance functions: instrument propensity, outcome regression
//! and treatment regression, each per instrument code.

use std::fmt;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{InstrumentCode, ObservationTable, Stage};
use crate::error::{Error, Result};
use crate::folds::FoldAssignment;
use crate::glm::{fit_learner, Family, Learner, LearnerSpec};

pub const DEFAULT_CLIP_EPS: f64 = 0.01;

/// Known instrument probabilities as a function of the covariate row,
/// in code order `[0a, 1a, 0b, 1b]`.
pub type KnownPi = Arc<dyn Fn(&[f64]) -> [f64; 4] + Send + Sync>;

#[derive(Clone)]
pub enum PiSource {
    Fitted(LearnerSpec),
    Known(KnownPi),
}

impl fmt::Debug for PiSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PiSource::Fitted(s) => f.debug_tuple("Fitted").field(s).finish(),
            PiSource::Known(_) => f.write_str("Known(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct NuisanceSpec {
    pub pi: PiSource,
    pub mu_y: LearnerSpec,
    pub mu_d: LearnerSpec,
    pub clip_eps: f64,
}

impl NuisanceSpec {
    /// Logistic propensity and treatment models with the given outcome family.
    pub fn glm(outcome: Family) -> Self {
        Self {
            pi: PiSource::Fitted(LearnerSpec::logistic()),
            mu_y: LearnerSpec::new(outcome),
            mu_d: LearnerSpec::logistic(),
            clip_eps: DEFAULT_CLIP_EPS,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.clip_eps > 0.0 && self.clip_eps < 0.5) {
            return Err(Error::Config("clip_eps must lie in (0, 0.5)".into()));
        }
        if let PiSource::Fitted(s) = &self.pi {
            if s.family != Family::BinomialLogit {
                return Err(Error::Config("the pi learner must be binomial_logit".into()));
            }
        }
        if self.mu_d.family != Family::BinomialLogit {
            return Err(Error::Config("the mu_d learner must be binomial_logit".into()));
        }
        Ok(())
    }
}

/// Out-of-fold nuisance values at one row, indexed by code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RowNuisance {
    pub pi: [f64; 4],
    pub mu_y: [f64; 4],
    pub mu_d: [f64; 4],
}

impl RowNuisance {
    pub fn delta(&self, stage: Stage) -> f64 {
        let (z0, z1) = stage_codes(stage);
        self.mu_y[z1.index()] - self.mu_y[z0.index()]
    }

    pub fn eta(&self, stage: Stage) -> f64 {
        let (z0, z1) = stage_codes(stage);
        self.mu_d[z1.index()] - self.mu_d[z0.index()]
    }
}

pub(crate) fn stage_codes(stage: Stage) -> (InstrumentCode, InstrumentCode) {
    match stage {
        Stage::A => (InstrumentCode::ZERO_A, InstrumentCode::ONE_A),
        Stage::B => (InstrumentCode::ZERO_B, InstrumentCode::ONE_B),
    }
}

#[derive(Clone)]
enum PiModel {
    Fitted {
        stage_b: Learner,
        arm_a: Learner,
        arm_b: Learner,
    },
    Known(KnownPi),
}

impl fmt::Debug for PiModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PiModel::Fitted { stage_b, .. } => f
                .debug_struct("Fitted")
                .field("stage_b", &stage_b.glm.coefficients)
                .finish_non_exhaustive(),
            PiModel::Known(_) => f.write_str("Known(..)"),
        }
    }
}

/// Models trained on the complement of one fold.
#[derive(Debug, Clone)]
pub struct FoldModels {
    pi: PiModel,
    mu_y: [Learner; 4],
    mu_d: [Learner; 4],
}

#[derive(Debug, Clone)]
pub struct CrossFitNuisances {
    folds: FoldAssignment,
    clip_eps: f64,
    models: Vec<FoldModels>,
    rows: Vec<RowNuisance>,
}

/// Clips each probability into `[eps, 1-eps]` and rescales to sum to one.
pub fn clip_probabilities(raw: [f64; 4], eps: f64) -> [f64; 4] {
    let c = raw.map(|p| p.clamp(eps, 1.0 - eps));
    let s: f64 = c.iter().sum();
    c.map(|p| p / s)
}

pub fn clip_probability(p: f64, eps: f64) -> f64 {
    p.clamp(eps, 1.0 - eps)
}

impl FoldModels {
    fn predict(&self, x: &[f64], log_offset: f64, eps: f64) -> RowNuisance {
        let raw_pi = match &self.pi {
            PiModel::Fitted {
                stage_b,
                arm_a,
                arm_b,
            } => {
                let pb = stage_b.predict(x, 0.0);
                let qa = arm_a.predict(x, 0.0);
                let qb = arm_b.predict(x, 0.0);
                [(1.0 - pb) * (1.0 - qa), (1.0 - pb) * qa, pb * (1.0 - qb), pb * qb]
            }
            PiModel::Known(f) => f(x),
        };
        RowNuisance {
            pi: clip_probabilities(raw_pi, eps),
            mu_y: std::array::from_fn(|z| self.mu_y[z].predict(x, log_offset)),
            mu_d: std::array::from_fn(|z| clip_probability(self.mu_d[z].predict(x, 0.0), eps)),
        }
    }
}

impl CrossFitNuisances {
    pub fn folds(&self) -> &FoldAssignment {
        &self.folds
    }

    pub fn clip_eps(&self) -> f64 {
        self.clip_eps
    }

    /// Out-of-fold predictions at row `i` of the training table.
    pub fn predict_nuisance(&self, i: usize) -> RowNuisance {
        self.rows[i]
    }

    pub fn rows(&self) -> &[RowNuisance] {
        &self.rows
    }

    /// Predictions of the fold-`k` models at an arbitrary covariate row.
    /// `offset` is the exposure on the natural scale.
    pub fn predict_with_fold(&self, k: usize, x: &[f64], offset: Option<f64>) -> RowNuisance {
        self.models[k].predict(x, offset.map_or(0.0, f64::ln), self.clip_eps)
    }
}

fn gather(table: &ObservationTable, rows: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows.len() * table.dx());
    for &i in rows {
        out.extend_from_slice(table.x_row(i));
    }
    out
}

fn fit_on(
    table: &ObservationTable,
    rows: &[usize],
    response: impl Fn(usize) -> f64,
    with_offset: bool,
    spec: &LearnerSpec,
) -> Result<Learner> {
    let x = gather(table, rows);
    let y: Vec<f64> = rows.iter().map(|&i| response(i)).collect();
    let off: Option<Vec<f64>> = match (with_offset, table.offset()) {
        (true, Some(o)) => Some(rows.iter().map(|&i| o[i].ln()).collect()),
        _ => None,
    };
    fit_learner(&x, table.dx(), &y, off.as_deref(), spec)
}

fn fit_fold(
    table: &ObservationTable,
    folds: &FoldAssignment,
    k: usize,
    spec: &NuisanceSpec,
) -> Result<FoldModels> {
    let train = folds.rows_outside(k);
    let z = table.z();
    let annotate = |code: InstrumentCode| {
        move |e: Error| Error::NuisanceFit {
            fold: k,
            code,
            source: Box::new(e),
        }
    };
    let pi = match &spec.pi {
        PiSource::Known(f) => PiModel::Known(f.clone()),
        PiSource::Fitted(s) => {
            let stage_b = fit_on(
                table,
                &train,
                |i| f64::from(u8::from(z[i].stage == Stage::B)),
                false,
                s,
            )
            .map_err(annotate(InstrumentCode::ZERO_B))?;
            let arm = |stage: Stage| -> Result<Learner> {
                let (_, one) = stage_codes(stage);
                let rows: Vec<usize> = train.iter().copied().filter(|&i| z[i].stage == stage).collect();
                fit_on(table, &rows, |i| f64::from(u8::from(z[i] == one)), false, s)
                    .map_err(annotate(one))
            };
            PiModel::Fitted {
                stage_b,
                arm_a: arm(Stage::A)?,
                arm_b: arm(Stage::B)?,
            }
        }
    };
    let mut by_code: [Vec<usize>; 4] = Default::default();
    for &i in &train {
        by_code[z[i].index()].push(i);
    }
    let y = table.y();
    let d = table.d();
    let fit_code = |c: usize, for_y: bool| -> Result<Learner> {
        let code = InstrumentCode::from_index(c);
        if for_y {
            fit_on(table, &by_code[c], |i| y[i], true, &spec.mu_y).map_err(annotate(code))
        } else {
            fit_on(table, &by_code[c], |i| f64::from(d[i]), false, &spec.mu_d).map_err(annotate(code))
        }
    };
    let mu_y = [fit_code(0, true)?, fit_code(1, true)?, fit_code(2, true)?, fit_code(3, true)?];
    let mu_d = [fit_code(0, false)?, fit_code(1, false)?, fit_code(2, false)?, fit_code(3, false)?];
    Ok(FoldModels { pi, mu_y, mu_d })
}

/// Fits every nuisance on each fold's complement and caches the out-of-fold
/// predictions for all rows.
pub fn fit_nuisances(
    table: &ObservationTable,
    folds: &FoldAssignment,
    spec: &NuisanceSpec,
) -> Result<CrossFitNuisances> {
    spec.check()?;
    if folds.n() != table.n() {
        return Err(Error::Usage(format!(
            "fold assignment covers {} rows but the table has {}",
            folds.n(),
            table.n()
        )));
    }
    let models = (0..folds.k())
        .into_par_iter()
        .map(|k| fit_fold(table, folds, k, spec))
        .collect::<Result<Vec<_>>>()?;
    let offsets = table.offset();
    let rows = (0..table.n())
        .map(|i| {
            let log_off = offsets.map_or(0.0, |o| o[i].ln());
            models[folds.fold_of(i)].predict(table.x_row(i), log_off, spec.clip_eps)
        })
        .collect();
    Ok(CrossFitNuisances {
        folds: folds.clone(),
        clip_eps: spec.clip_eps,
        models,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clipping_rule() {
        let p = clip_probabilities([0.002, 0.498, 0.25, 0.25], 0.01);
        let s = 0.01 + 0.498 + 0.5;
        assert!((p[0] - 0.01 / s).abs() < 1e-15);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(clip_probability(1.0, 0.01), 0.99);
    }
}
