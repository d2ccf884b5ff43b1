//! Strategy parameters: the minimum-importance threshold estimated from
//! repeated full-data fits, and the per-fold model parameter chosen by
//! minimising the quadratic distance between each candidate's importance
//! vector and the mean importance vector over all candidates.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::cart::{self, RegressionTree};
use crate::data::{Dataset, Frame};
use crate::error::{Error, Result};
use crate::forest::{self, Forest, ImportanceVector};
use crate::par;
use crate::rng;

/// The two implemented selection strategies: a single bootstrapped
/// regression tree tuned on `min_node_size`, or a random forest tuned on
/// `ntree`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    #[serde(rename = "ldrt")]
    Tree,
    #[serde(rename = "ldrf")]
    Forest,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "ldrt" | "tree" => Ok(Strategy::Tree),
            "ldrf" | "forest" => Ok(Strategy::Forest),
            "ldct" | "ldcf" => Err(Error::UnsupportedStrategy(s.to_string())),
            other => Err(Error::invalid(format!("unknown strategy `{other}` (expected ldrt or ldrf)"))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Tree => "ldrt",
            Strategy::Forest => "ldrf",
        })
    }
}

/// Parameters held fixed while the other one is tuned, and used for the
/// threshold runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDefaults {
    pub ntree: usize,
    pub min_node_size: usize,
    /// `None` means `max(1, q / 3)` for forests; trees always consider every
    /// variable.
    pub feature_subset_size: Option<usize>,
}

impl Default for ModelDefaults {
    fn default() -> Self {
        ModelDefaults {
            ntree: 500,
            min_node_size: 5,
            feature_subset_size: None,
        }
    }
}

/// A fitted strategy model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Model {
    Tree(RegressionTree),
    Forest(Forest),
}

impl Model {
    pub fn predict(&self, rows: &Frame) -> Result<Vec<f64>> {
        match self {
            Model::Tree(t) => t.predict(rows),
            Model::Forest(f) => f.predict(rows),
        }
    }

    pub fn fit(train: &Dataset, strategy: Strategy, m: usize, defaults: &ModelDefaults, seed: u64) -> Result<Model> {
        Ok(match strategy {
            Strategy::Tree => Model::Tree(cart::fit_bootstrap_tree(train, m, None, seed)?),
            Strategy::Forest => Model::Forest(forest::fit_forest(
                train,
                m,
                defaults.min_node_size,
                defaults.feature_subset_size,
                seed,
            )?),
        })
    }

    pub fn importance(&self, train: &Dataset, seed: u64) -> Result<Vec<f64>> {
        match self {
            Model::Tree(t) => cart::tree_importance(t, train, seed),
            Model::Forest(f) => forest::forest_importance(f, train, seed).map(|v| v.values),
        }
    }
}

/// `q × n_cols` matrix of importance scores, one column per repetition,
/// candidate or fold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ImportanceMatrix {
    q: usize,
    columns: Vec<Vec<f64>>,
}

impl ImportanceMatrix {
    pub fn from_columns(columns: Vec<Vec<f64>>) -> Result<Self> {
        let q = columns.first().map(Vec::len).ok_or_else(|| Error::invalid("importance matrix needs at least one column"))?;
        if columns.iter().any(|c| c.len() != q) {
            return Err(Error::invalid("importance columns differ in length"));
        }
        if columns.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite importance value"));
        }
        Ok(ImportanceMatrix { q, columns })
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn get(&self, variable: usize, column: usize) -> f64 {
        self.columns[column][variable]
    }

    pub fn row_means(&self) -> Vec<f64> {
        let k = self.columns.len() as f64;
        (0..self.q)
            .map(|i| self.columns.iter().map(|c| c[i]).sum::<f64>() / k)
            .collect()
    }
}

/// The minimum-importance threshold `min(σ) + sd(σ)`, where `σ_j` is the
/// smallest nonzero entry of column `j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Threshold {
    pub vi_min: f64,
    pub sigma: Vec<f64>,
    pub n_r: usize,
    /// Columns whose entries were all zero and so contributed no σ.
    pub skipped_columns: Vec<usize>,
}

/// Sample standard deviation (divisor `n - 1`); 0 for fewer than two values.
pub fn sample_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)).sqrt()
}

/// `min(σ) + sd(σ)` for a given σ vector.
pub fn threshold_from_sigma(sigma: &[f64]) -> Result<f64> {
    let min = sigma.iter().copied().fold(f64::INFINITY, f64::min);
    if !min.is_finite() {
        return Err(Error::invalid("empty σ vector"));
    }
    Ok(min + sample_sd(sigma))
}

/// Builds the threshold from a full importance matrix. Zero entries are
/// excluded from each column minimum; negative entries are kept.
pub fn threshold_from_matrix(m: &ImportanceMatrix) -> Result<Threshold> {
    let mut sigma = Vec::new();
    let mut skipped = Vec::new();
    for (j, col) in m.columns.iter().enumerate() {
        match col.iter().copied().filter(|&v| v != 0.0).reduce(f64::min) {
            Some(s) => sigma.push(s),
            None => skipped.push(j),
        }
    }
    if sigma.is_empty() {
        return Err(Error::invalid(
            "every importance column is entirely zero (constant target?); cannot estimate a threshold",
        ));
    }
    Ok(Threshold {
        vi_min: threshold_from_sigma(&sigma)?,
        sigma,
        n_r: m.n_cols(),
        skipped_columns: skipped,
    })
}

/// Fits the strategy's default model `n_r` times on the whole dataset and
/// derives the threshold from the resulting importance matrix.
pub fn compute_vi_min(
    data: &Dataset,
    strategy: Strategy,
    n_r: usize,
    seed: u64,
    defaults: &ModelDefaults,
) -> Result<(Threshold, ImportanceMatrix)> {
    if n_r == 0 {
        return Err(Error::invalid("n_r must be at least 1"));
    }
    let m = match strategy {
        Strategy::Tree => defaults.min_node_size,
        Strategy::Forest => defaults.ntree,
    };
    let columns = par::map_indexed(n_r, |j| {
        let s = rng::derive(seed, &[rng::TAG_REPEAT, j as u64]);
        let model = Model::fit(data, strategy, m, defaults, s)?;
        match model.importance(data, s) {
            Ok(v) => Ok(v),
            // A bootstrap leaving fewer than two rows out of bag gives no
            // importance; the column is skipped like an all-zero one.
            Err(Error::Oob(_)) => Ok(vec![0.0; data.n_cols()]),
            Err(e) => Err(e),
        }
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let matrix = ImportanceMatrix::from_columns(columns)?;
    Ok((threshold_from_matrix(&matrix)?, matrix))
}

/// Euclidean distance between column `column` and the row-mean vector.
pub fn quadratic_distance(m: &ImportanceMatrix, column: usize) -> Result<f64> {
    if column >= m.n_cols() {
        return Err(Error::invalid(format!("column {column} out of range 0..{}", m.n_cols())));
    }
    Ok(distance_to(&m.row_means(), m.column(column)))
}

fn distance_to(mean: &[f64], col: &[f64]) -> f64 {
    mean.iter().zip(col).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

pub fn quadratic_distances(m: &ImportanceMatrix) -> Vec<f64> {
    let mean = m.row_means();
    m.columns.iter().map(|c| distance_to(&mean, c)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateFailure {
    pub candidate: usize,
    pub error: String,
}

/// Result of a candidate sweep.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateSweep {
    /// Candidates that were fitted successfully, in grid order.
    pub candidates: Vec<usize>,
    pub distances: Vec<f64>,
    /// Candidate values attaining the minimum distance.
    pub argmin: Vec<usize>,
    pub chosen_min_node_size: usize,
    pub chosen_ntree: usize,
    pub failures: Vec<CandidateFailure>,
}

impl CandidateSweep {
    /// The parameter the strategy actually consumes.
    pub fn chosen(&self, strategy: Strategy) -> usize {
        match strategy {
            Strategy::Tree => self.chosen_min_node_size,
            Strategy::Forest => self.chosen_ntree,
        }
    }
}

/// Node-size ladder 1, 2, 3, 5, 8, 13, ... capped at `n_obs`.
pub fn default_node_size_grid(n_obs: usize) -> Vec<usize> {
    let mut grid = vec![1usize];
    let (mut a, mut b) = (2usize, 3usize);
    while a <= n_obs {
        grid.push(a);
        (a, b) = (b, a + b);
    }
    grid.retain(|&m| m <= n_obs.max(1));
    grid
}

pub const DEFAULT_NTREE_GRID: [usize; 6] = [10, 25, 50, 100, 250, 500];

pub fn default_grid(strategy: Strategy, n_obs: usize) -> Vec<usize> {
    match strategy {
        Strategy::Tree => default_node_size_grid(n_obs),
        Strategy::Forest => DEFAULT_NTREE_GRID.to_vec(),
    }
}

/// Argmin set with a relative tolerance for floating-point ties.
fn argmin_set(values: &[f64]) -> Vec<usize> {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let tol = 1e-12 * min.abs();
    (0..values.len()).filter(|&i| values[i] - min <= tol).collect()
}

/// Applies the argmin rule: a unique minimiser sets both parameters; with
/// several, the node size takes the smallest and the tree count the largest.
fn choose(candidates: &[usize], distances: &[f64]) -> (Vec<usize>, usize, usize) {
    let h: Vec<usize> = argmin_set(distances).into_iter().map(|i| candidates[i]).collect();
    let lo = *h.iter().min().unwrap();
    let hi = *h.iter().max().unwrap();
    (h, lo, hi)
}

pub(crate) struct SweepOutcome {
    pub sweep: CandidateSweep,
    pub model: Model,
    pub importance: Vec<f64>,
}

/// Evaluates every candidate on `train` with a common seed and picks the
/// parameter by minimum quadratic distance.
pub fn select_m(
    train: &Dataset,
    strategy: Strategy,
    candidates: &[usize],
    seed: u64,
    defaults: &ModelDefaults,
) -> Result<CandidateSweep> {
    sweep_with_model(train, strategy, candidates, seed, defaults).map(|o| o.sweep)
}

fn validate_candidates(train: &Dataset, strategy: Strategy, candidates: &[usize]) -> Result<Vec<usize>> {
    if candidates.is_empty() {
        return Err(Error::invalid("candidate grid is empty"));
    }
    if candidates.contains(&0) {
        return Err(Error::invalid("candidates must be positive"));
    }
    let valid: Vec<usize> = match strategy {
        Strategy::Tree => candidates.iter().copied().filter(|&m| m <= train.n_rows()).collect(),
        Strategy::Forest => candidates.to_vec(),
    };
    if valid.is_empty() {
        return Err(Error::invalid(format!(
            "no node-size candidate is at most the {} training observations",
            train.n_rows()
        )));
    }
    Ok(valid)
}

pub(crate) fn sweep_with_model(
    train: &Dataset,
    strategy: Strategy,
    candidates: &[usize],
    seed: u64,
    defaults: &ModelDefaults,
) -> Result<SweepOutcome> {
    let grid = validate_candidates(train, strategy, candidates)?;
    let mut failures = Vec::new();
    let mut evaluated = Vec::new();
    let mut columns = Vec::new();
    let mut models: Vec<Model> = Vec::new();

    match strategy {
        Strategy::Forest => {
            // Forests sharing a seed are prefixes of one another: fit the
            // largest once and score every prefix from the per-tree deltas.
            let big = *grid.iter().max().unwrap();
            let full = forest::fit_forest(train, big, defaults.min_node_size, defaults.feature_subset_size, seed)?;
            let prefixes = forest::importance_prefixes(&full, train, seed, &grid)?;
            for (&m, col) in grid.iter().zip(prefixes) {
                evaluated.push(m);
                columns.push(col);
            }
            models.push(Model::Forest(full));
        }
        Strategy::Tree => {
            let fits = par::map_slice(&grid, |&m| {
                let model = Model::fit(train, strategy, m, defaults, seed)?;
                let imp = model.importance(train, seed)?;
                Ok::<_, Error>((model, imp))
            });
            for (&m, r) in grid.iter().zip(fits) {
                match r {
                    Ok((model, imp)) => {
                        evaluated.push(m);
                        columns.push(imp);
                        models.push(model);
                    }
                    Err(e) => failures.push(CandidateFailure {
                        candidate: m,
                        error: e.to_string(),
                    }),
                }
            }
            if evaluated.is_empty() {
                return Err(Error::invalid(format!(
                    "model fit failed for every candidate: {}",
                    failures.first().map(|f| f.error.as_str()).unwrap_or("")
                )));
            }
        }
    }

    let matrix = ImportanceMatrix::from_columns(columns)?;
    let distances = quadratic_distances(&matrix);
    let (argmin, lo, hi) = choose(&evaluated, &distances);
    let sweep = CandidateSweep {
        candidates: evaluated.clone(),
        distances,
        argmin,
        chosen_min_node_size: lo,
        chosen_ntree: hi,
        failures,
    };
    let chosen = sweep.chosen(strategy);
    let (model, importance) = match strategy {
        Strategy::Forest => {
            let Some(Model::Forest(full)) = models.pop() else { unreachable!() };
            let pos = evaluated.iter().position(|&m| m == chosen).unwrap();
            (Model::Forest(full.truncated(chosen)), matrix.column(pos).to_vec())
        }
        Strategy::Tree => {
            let pos = evaluated.iter().position(|&m| m == chosen).unwrap();
            (models.swap_remove(pos), matrix.column(pos).to_vec())
        }
    };
    Ok(SweepOutcome { sweep, model, importance })
}

/// A thresholded variable subset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub indices: Vec<usize>,
    pub names: Vec<String>,
    pub warning: Option<String>,
}

/// Keeps every variable whose importance is strictly above the threshold.
pub fn select_variables(mean_importance: &ImportanceVector, threshold: &Threshold) -> Selection {
    select_above(mean_importance, threshold.vi_min)
}

pub fn select_above(mean_importance: &ImportanceVector, vi_min: f64) -> Selection {
    let indices: Vec<usize> = (0..mean_importance.len())
        .filter(|&p| mean_importance.values[p] > vi_min)
        .collect();
    let names = indices.iter().map(|&p| mean_importance.names[p].clone()).collect();
    let warning = indices
        .is_empty()
        .then(|| format!("no variable has mean importance above the threshold {vi_min}"));
    Selection { indices, names, warning }
}
