//! Bagged regression forests with out-of-bag error and permutation
//! importance.
//!
//! Tree `t` is grown on its own bootstrap sample of `n` rows drawn with
//! replacement, seeded from `(seed, t)`. Permutations for importance are
//! seeded from `(seed, t, p)`. No randomness is shared between trees, so the
//! parallel and sequential builds agree bit for bit.

use serde::{Deserialize, Serialize};

use crate::cart::{self, RegressionTree};
use crate::data::{Dataset, Frame};
use crate::error::{Error, Result};
use crate::par;
use crate::rng;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    trees: Vec<RegressionTree>,
    min_node_size: usize,
    feature_subset_size: usize,
    seed: u64,
}

/// Per-variable importance scores, aligned with the dataset's columns.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
}

impl ImportanceVector {
    pub fn new(names: Vec<String>, values: Vec<f64>) -> Result<Self> {
        if names.len() != values.len() {
            return Err(Error::invalid("importance names and values differ in length"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite importance value"));
        }
        Ok(ImportanceVector { names, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Variable indices sorted by decreasing importance (index order on ties).
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.values.len()).collect();
        idx.sort_by(|&a, &b| self.values[b].total_cmp(&self.values[a]).then(a.cmp(&b)));
        idx
    }
}

/// OOB mean squared error and how many rows contributed to it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OobError {
    pub mse: f64,
    pub rows_used: usize,
    pub rows_skipped: usize,
}

/// Default candidate-variable count per split: `max(1, q / 3)`.
pub fn default_feature_subset_size(q: usize) -> usize {
    (q / 3).max(1)
}

pub fn tree_seed(seed: u64, t: usize) -> u64 {
    rng::derive(seed, &[rng::TAG_TREE, t as u64])
}

impl Forest {
    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn ntree(&self) -> usize {
        self.trees.len()
    }

    pub fn min_node_size(&self) -> usize {
        self.min_node_size
    }

    pub fn feature_subset_size(&self) -> usize {
        self.feature_subset_size
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// The forest made of the first `ntree` trees.
    pub fn truncated(&self, ntree: usize) -> Forest {
        Forest {
            trees: self.trees[..ntree.min(self.trees.len())].to_vec(),
            min_node_size: self.min_node_size,
            feature_subset_size: self.feature_subset_size,
            seed: self.seed,
        }
    }

    /// Assembles a forest from already grown trees, e.g. when loading a
    /// saved model.
    pub fn from_trees(trees: Vec<RegressionTree>, min_node_size: usize, feature_subset_size: usize, seed: u64) -> Result<Forest> {
        if trees.is_empty() {
            return Err(Error::invalid("a forest needs at least one tree"));
        }
        Ok(Forest {
            trees,
            min_node_size,
            feature_subset_size,
            seed,
        })
    }

    pub fn predict(&self, rows: &Frame) -> Result<Vec<f64>> {
        let per_tree = par::map_slice(&self.trees, |t| t.predict(rows)).into_iter().collect::<Result<Vec<_>>>()?;
        let mut out = vec![0.0; rows.n_rows()];
        for p in &per_tree {
            for (o, v) in out.iter_mut().zip(p) {
                *o += v;
            }
        }
        let k = self.trees.len() as f64;
        out.iter_mut().for_each(|o| *o /= k);
        Ok(out)
    }
}

pub fn fit_forest(
    train: &Dataset,
    ntree: usize,
    min_node_size: usize,
    feature_subset_size: Option<usize>,
    seed: u64,
) -> Result<Forest> {
    if ntree == 0 {
        return Err(Error::invalid("ntree must be at least 1"));
    }
    let mtry = feature_subset_size.unwrap_or_else(|| default_feature_subset_size(train.n_cols()));
    let trees = par::map_indexed(ntree, |t| {
        cart::fit_bootstrap_tree(train, min_node_size, Some(mtry), tree_seed(seed, t))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(Forest {
        trees,
        min_node_size,
        feature_subset_size: mtry,
        seed,
    })
}

pub fn predict_forest(forest: &Forest, rows: &Frame) -> Result<Vec<f64>> {
    forest.predict(rows)
}

fn check_oob(forest: &Forest, train: &Dataset) -> Result<()> {
    for t in &forest.trees {
        match t.oob_mask() {
            Some(m) if m.len() == train.n_rows() => {}
            Some(_) => return Err(Error::Oob("OOB mask length does not match the training set".into())),
            None => return Err(Error::Oob("forest has no OOB masks (deserialized?)".into())),
        }
    }
    Ok(())
}

/// Mean squared error of each row's prediction averaged over only the trees
/// for which that row is out of bag. Rows never out of bag are skipped.
pub fn oob_error(forest: &Forest, train: &Dataset) -> Result<OobError> {
    check_oob(forest, train)?;
    let n = train.n_rows();
    let per_tree = par::map_slice(&forest.trees, |t| {
        let rows = t.oob_rows();
        t.predict_rows(train.frame(), &rows).map(|p| (rows, p))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mut sum = vec![0.0; n];
    let mut cnt = vec![0usize; n];
    for (rows, preds) in &per_tree {
        for (&i, &p) in rows.iter().zip(preds) {
            sum[i] += p;
            cnt[i] += 1;
        }
    }
    let y = train.target();
    let (mut sse, mut used) = (0.0, 0usize);
    for i in 0..n {
        if cnt[i] > 0 {
            let d = y[i] - sum[i] / cnt[i] as f64;
            sse += d * d;
            used += 1;
        }
    }
    if used == 0 {
        return Err(Error::Oob("no row is out of bag for any tree".into()));
    }
    Ok(OobError {
        mse: sse / used as f64,
        rows_used: used,
        rows_skipped: n - used,
    })
}

fn per_tree_deltas(forest: &Forest, train: &Dataset, seed: u64, ntree: usize) -> Result<Vec<Vec<f64>>> {
    check_oob(forest, train)?;
    let q = train.n_cols();
    par::map_indexed(ntree, |t| {
        let tree = &forest.trees[t];
        let oob = tree.oob_rows();
        if oob.len() < 2 {
            return Ok(vec![0.0; q]);
        }
        tree.permutation_deltas(train.frame(), train.target(), &oob, |p| {
            rng::derive(seed, &[rng::TAG_PERMUTE, t as u64, p as u64])
        })
    })
    .into_iter()
    .collect()
}

/// Permutation importance averaged over all trees. Trees with fewer than two
/// OOB rows contribute zero but still count in the denominator.
pub fn forest_importance(forest: &Forest, train: &Dataset, seed: u64) -> Result<ImportanceVector> {
    let mut v = importance_prefixes(forest, train, seed, &[forest.ntree()])?;
    ImportanceVector::new(train.names(), v.pop().unwrap())
}

/// Importance of the forests made of the first `k` trees, for each `k` in
/// `sizes`. Equal to refitting with `ntree = k` and the same seed.
pub fn importance_prefixes(forest: &Forest, train: &Dataset, seed: u64, sizes: &[usize]) -> Result<Vec<Vec<f64>>> {
    if sizes.iter().any(|&k| k == 0 || k > forest.ntree()) {
        return Err(Error::invalid(format!("prefix sizes must lie in 1..={}", forest.ntree())));
    }
    let upto = sizes.iter().copied().max().unwrap_or(0);
    let deltas = per_tree_deltas(forest, train, seed, upto)?;
    let q = train.n_cols();
    Ok(sizes
        .iter()
        .map(|&k| {
            let mut acc = vec![0.0; q];
            for d in &deltas[..k] {
                for (a, v) in acc.iter_mut().zip(d) {
                    *a += v;
                }
            }
            acc.iter_mut().for_each(|a| *a /= k as f64);
            acc
        })
        .collect())
}
