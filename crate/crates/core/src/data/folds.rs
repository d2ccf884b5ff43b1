use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use super::Dataset;
use crate::error::{Error, Result};
use crate::rng;

/// Assignment of every row to one of `n_folds` folds.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldPlan {
    assignments: Vec<usize>,
    n_folds: usize,
    grouped: bool,
}

impl FoldPlan {
    pub fn assignments(&self) -> &[usize] {
        &self.assignments
    }

    pub fn n_folds(&self) -> usize {
        self.n_folds
    }

    pub fn grouped(&self) -> bool {
        self.grouped
    }

    pub fn test_rows(&self, k: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] == k).collect()
    }

    pub fn train_rows(&self, k: usize) -> Vec<usize> {
        (0..self.assignments.len()).filter(|&i| self.assignments[i] != k).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &a in &self.assignments {
            sizes[a] += 1;
        }
        sizes
    }
}

/// Builds an `n_folds`-way partition of the rows.
///
/// Ungrouped: rows are shuffled and dealt round-robin, so fold sizes differ by
/// at most one. Grouped: whole groups are placed, largest first, into the fold
/// with the fewest rows so far (lowest fold index on ties); group order among
/// equal sizes is shuffled by the seed.
pub fn make_folds(data: &Dataset, n_folds: usize, grouped: bool, seed: u64) -> Result<FoldPlan> {
    if n_folds < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {n_folds}")));
    }
    let n = data.n_rows();
    let mut rng = rng::rng_for(seed, &[rng::TAG_FOLDS]);
    let mut assignments = vec![0usize; n];

    if !grouped {
        if n_folds > n {
            return Err(Error::invalid(format!("{n_folds} folds requested for {n} observations")));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        for (pos, &row) in order.iter().enumerate() {
            assignments[row] = pos % n_folds;
        }
    } else {
        let labels = data
            .group()
            .ok_or_else(|| Error::invalid("grouped folds requested but the dataset has no group labels"))?;
        let mut index: HashMap<&str, usize> = HashMap::new();
        let mut members: Vec<Vec<usize>> = Vec::new();
        for (i, l) in labels.iter().enumerate() {
            let g = *index.entry(l.as_str()).or_insert_with(|| {
                members.push(Vec::new());
                members.len() - 1
            });
            members[g].push(i);
        }
        if n_folds > members.len() {
            return Err(Error::invalid(format!(
                "{n_folds} folds requested but only {} distinct groups",
                members.len()
            )));
        }
        let mut order: Vec<usize> = (0..members.len()).collect();
        order.shuffle(&mut rng);
        order.sort_by_key(|&g| std::cmp::Reverse(members[g].len()));
        let mut load = vec![0usize; n_folds];
        for g in order {
            let k = (0..n_folds).min_by_key(|&k| (load[k], k)).unwrap();
            load[k] += members[g].len();
            for &i in &members[g] {
                assignments[i] = k;
            }
        }
    }
    Ok(FoldPlan {
        assignments,
        n_folds,
        grouped,
    })
}

/// Splits into (train, test) for fold `k`, preserving row order within each
/// part. Level dictionaries are shared by both parts.
pub fn split_by_fold(data: &Dataset, plan: &FoldPlan, k: usize) -> Result<(Dataset, Dataset)> {
    if k >= plan.n_folds {
        return Err(Error::invalid(format!("fold {k} out of range 0..{}", plan.n_folds)));
    }
    if plan.assignments.len() != data.n_rows() {
        return Err(Error::invalid("fold plan does not match dataset row count"));
    }
    Ok((data.take_rows(&plan.train_rows(k)), data.take_rows(&plan.test_rows(k))))
}
