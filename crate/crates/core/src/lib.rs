//! Estimation and testing with two nested versions of a binary instrument.
//!
//! Rows carry one of four instrument codes (`0a`, `1a`, `0b`, `1b`). Under the
//! nested-instrument assumptions the effect among *switchers* (non-compliers
//! under the weaker version `a` who comply under `b`) and among
//! *always-compliers* are identified. The crate provides
//!
//! * data handling, validation and stratified folds ([`data`], [`folds`]),
//! * cross-fitted nuisance models ([`glm`], [`nuisance`]),
//! * Wald, one-step and estimating-equation estimators ([`estimators`]),
//! * homogeneity tests across strata ([`homogeneity`]),
//! * simulation designs and a Monte Carlo driver ([`sim`]),
//! * the command-line front end ([`cli`]).

pub mod cli;
pub mod config;
pub mod data;
pub mod error;
pub mod estimators;
pub mod folds;
pub mod glm;
pub mod homogeneity;
pub mod linalg;
pub mod nuisance;
pub mod rng;
pub mod sim;

pub use data::{validate, InstrumentCode, ObservationTable, ValidationReport};
pub use error::{Error, Result};
pub use estimators::{EstimateOptions, EstimateReport, Estimand, Method};
pub use folds::{make_folds, FoldAssignment};
pub use homogeneity::{ContrastId, TestReport};
pub use nuisance::{fit_nuisances, CrossFitNuisances, NuisanceSpec};

/// Crate version, reported in machine-readable output.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
