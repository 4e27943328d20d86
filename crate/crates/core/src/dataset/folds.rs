use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::PatchRecord;
use crate::error::{Error, Result};

/// Patient-level assignment of records to cross-validation folds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldSplit {
    pub n_folds: usize,
    pub assignment: BTreeMap<String, usize>,
}

impl FoldSplit {
    pub fn fold_of(&self, patient: &str) -> Option<usize> {
        self.assignment.get(patient).copied()
    }

    /// Number of patients in each fold.
    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in self.assignment.values() {
            sizes[f] += 1;
        }
        sizes
    }

    pub fn patients_in(&self, fold: usize) -> BTreeSet<&str> {
        self.assignment
            .iter()
            .filter(|(_, &f)| f == fold)
            .map(|(p, _)| p.as_str())
            .collect()
    }
}

/// Shuffles the distinct patients with `seed` and deals them round-robin,
/// so fold sizes differ by at most one patient.
pub fn split_folds(records: &[PatchRecord], n_folds: usize, seed: u64) -> Result<FoldSplit> {
    let patients: BTreeSet<&str> = records.iter().map(|r| r.patient_id.as_str()).collect();
    if n_folds < 2 {
        return Err(Error::Config(format!("need at least 2 folds, got {n_folds}")));
    }
    if patients.len() < n_folds {
        return Err(Error::Config(format!(
            "{} patients cannot fill {n_folds} folds",
            patients.len()
        )));
    }
    let mut order: Vec<&str> = patients.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let assignment = order
        .into_iter()
        .enumerate()
        .map(|(i, p)| (p.to_string(), i % n_folds))
        .collect();
    Ok(FoldSplit {
        n_folds,
        assignment,
    })
}
