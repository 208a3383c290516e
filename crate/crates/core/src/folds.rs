//! Stratified K-fold partitions for cross-fitting.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::InstrumentCode;
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldAssignment {
    k: usize,
    fold_of: Vec<usize>,
    seed: u64,
}

impl FoldAssignment {
    /// Builds an assignment from an explicit fold vector.
    pub fn from_vec(k: usize, fold_of: Vec<usize>, seed: u64) -> Result<Self> {
        if k < 2 {
            return Err(Error::Usage("fold count must be at least 2".into()));
        }
        if let Some(&f) = fold_of.iter().find(|&&f| f >= k) {
            return Err(Error::Usage(format!("fold id {f} out of range for K={k}")));
        }
        Ok(Self { k, fold_of, seed })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n(&self) -> usize {
        self.fold_of.len()
    }

    pub fn fold_of(&self, row: usize) -> usize {
        self.fold_of[row]
    }

    pub fn assignments(&self) -> &[usize] {
        &self.fold_of
    }

    /// Rows in fold `k` (the evaluation set), ascending.
    pub fn rows_in(&self, k: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.fold_of[i] == k).collect()
    }

    /// Rows outside fold `k` (the training set), ascending.
    pub fn rows_outside(&self, k: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.fold_of[i] != k).collect()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &f in &self.fold_of {
            s[f] += 1;
        }
        s
    }
}

/// Random K-fold partition, stratified by instrument code.
///
/// Rows are shuffled within each code, the shuffled cells are laid end to end
/// and dealt round-robin. Fold sizes differ by at most one overall and within
/// every code.
pub fn make_folds(strata: &[InstrumentCode], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::Usage("fold count must be at least 2".into()));
    }
    let mut cells: [Vec<usize>; 4] = Default::default();
    for (i, z) in strata.iter().enumerate() {
        cells[z.index()].push(i);
    }
    for code in InstrumentCode::ALL {
        let count = cells[code.index()].len();
        if count < k {
            return Err(Error::TooFewRowsPerCell {
                code,
                count,
                folds: k,
            });
        }
    }
    let mut rng = rng::stream(seed, "folds", 0);
    let mut fold_of = vec![0; strata.len()];
    let mut pos = 0usize;
    for cell in cells.iter_mut() {
        cell.shuffle(&mut rng);
        for &i in cell.iter() {
            fold_of[i] = pos % k;
            pos += 1;
        }
    }
    Ok(FoldAssignment { k, fold_of, seed })
}
