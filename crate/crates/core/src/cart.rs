//! CART regression trees.
//!
//! Trees are grown greedily: at every node the split with the largest
//! reduction in the weighted sum of squared deviations of the target is taken
//! over the candidate variables. A node stays a leaf when its (weighted) count
//! is at most `min_node_size`, when its targets are constant, or when no split
//! reduces the SSE by a strictly positive amount. There is no pruning.
//!
//! Ties are broken towards the lowest variable index, then the lowest
//! threshold (numeric) or the shortest mean-ordered level prefix
//! (categorical).

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::{ColumnData, ColumnKind, Dataset, Frame};
use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Gains within this fraction of the parent SSE are treated as ties, and a
/// split must beat it to count as a strictly positive reduction.
pub const GAIN_REL_TOL: f64 = 1e-10;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SplitRule {
    /// `value <= threshold` goes left.
    NumericThreshold { variable: usize, threshold: f64 },
    /// Levels in `left_levels` go left, levels in `right_levels` go right.
    /// Levels observed at neither side during training follow the child with
    /// the larger training count (`unseen_left`).
    CategorySubset {
        variable: usize,
        left_levels: Vec<u32>,
        right_levels: Vec<u32>,
        unseen_left: bool,
    },
}

impl SplitRule {
    pub fn variable(&self) -> usize {
        match self {
            SplitRule::NumericThreshold { variable, .. } | SplitRule::CategorySubset { variable, .. } => *variable,
        }
    }

    fn goes_left(&self, feat: &Feat<'_>, row: usize) -> bool {
        match (self, feat) {
            (SplitRule::NumericThreshold { threshold, .. }, Feat::Num(v)) => v[row] <= *threshold,
            (
                SplitRule::CategorySubset {
                    left_levels,
                    right_levels,
                    unseen_left,
                    ..
                },
                Feat::Cat(c),
            ) => {
                let code = c[row];
                if left_levels.binary_search(&code).is_ok() {
                    true
                } else if right_levels.binary_search(&code).is_ok() {
                    false
                } else {
                    *unseen_left
                }
            }
            // Kinds are checked before routing.
            _ => unreachable!("split rule applied to a column of the wrong kind"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Node {
    Split {
        rule: SplitRule,
        left: usize,
        right: usize,
        count: usize,
    },
    Leaf {
        value: f64,
        count: usize,
    },
}

impl Node {
    pub fn count(&self) -> usize {
        match self {
            Node::Split { count, .. } | Node::Leaf { count, .. } => *count,
        }
    }
}

/// A grown tree. Nodes are stored in an arena; the root is node 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
    min_node_size: usize,
    feature_kinds: Vec<ColumnKind>,
    /// Rows of the training set absent from this tree's bootstrap sample.
    #[serde(skip)]
    oob_mask: Option<Vec<bool>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeParams {
    pub min_node_size: usize,
    pub feature_subset_size: Option<usize>,
}

impl RegressionTree {
    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn root(&self) -> &Node {
        &self.nodes[0]
    }

    pub fn min_node_size(&self) -> usize {
        self.min_node_size
    }

    pub fn feature_count(&self) -> usize {
        self.feature_kinds.len()
    }

    pub fn feature_kinds(&self) -> &[ColumnKind] {
        &self.feature_kinds
    }

    pub fn oob_mask(&self) -> Option<&[bool]> {
        self.oob_mask.as_deref()
    }

    pub fn oob_rows(&self) -> Vec<usize> {
        self.oob_mask
            .as_ref()
            .map(|m| (0..m.len()).filter(|&i| m[i]).collect())
            .unwrap_or_default()
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    /// Sorted, deduplicated indices of variables used by any split.
    pub fn used_variables(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { rule, .. } => Some(rule.variable()),
                Node::Leaf { .. } => None,
            })
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    fn check_frame<'a>(&self, frame: &'a Frame) -> Result<Vec<Feat<'a>>> {
        if frame.n_cols() != self.feature_kinds.len() {
            return Err(Error::Schema(format!(
                "tree expects {} columns, got {}",
                self.feature_kinds.len(),
                frame.n_cols()
            )));
        }
        frame
            .columns()
            .iter()
            .zip(&self.feature_kinds)
            .map(|(c, &k)| {
                if c.kind().is_categorical() != k.is_categorical() {
                    return Err(Error::Schema(format!(
                        "column `{}` is {} but the tree was trained on {}",
                        c.name(),
                        c.kind().as_str(),
                        k.as_str()
                    )));
                }
                Ok(Feat::of(c.data()))
            })
            .collect()
    }

    /// Routes `row` to a leaf. With `swap = Some((p, src))`, variable `p` is
    /// read from row `src` instead.
    fn route(&self, feats: &[Feat<'_>], row: usize, swap: Option<(usize, usize)>) -> f64 {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { value, .. } => return *value,
                Node::Split { rule, left, right, .. } => {
                    let var = rule.variable();
                    let r = match swap {
                        Some((p, src)) if p == var => src,
                        _ => row,
                    };
                    id = if rule.goes_left(&feats[var], r) { *left } else { *right };
                }
            }
        }
    }

    pub fn predict(&self, frame: &Frame) -> Result<Vec<f64>> {
        let feats = self.check_frame(frame)?;
        Ok((0..frame.n_rows()).map(|i| self.route(&feats, i, None)).collect())
    }

    pub(crate) fn predict_rows(&self, frame: &Frame, rows: &[usize]) -> Result<Vec<f64>> {
        let feats = self.check_frame(frame)?;
        Ok(rows.iter().map(|&i| self.route(&feats, i, None)).collect())
    }

    /// Per-variable increase in OOB mean squared error after shuffling that
    /// variable among the OOB rows. `perm_seed(p)` seeds the shuffle of
    /// variable `p`. Variables the tree never splits on score exactly 0.
    pub(crate) fn permutation_deltas(
        &self,
        frame: &Frame,
        y: &[f64],
        oob: &[usize],
        perm_seed: impl Fn(usize) -> u64,
    ) -> Result<Vec<f64>> {
        let feats = self.check_frame(frame)?;
        let m = oob.len() as f64;
        let base: f64 = oob
            .iter()
            .map(|&i| {
                let d = y[i] - self.route(&feats, i, None);
                d * d
            })
            .sum::<f64>()
            / m;
        let mut out = vec![0.0; self.feature_kinds.len()];
        let mut perm: Vec<usize> = Vec::with_capacity(oob.len());
        for p in self.used_variables() {
            perm.clear();
            perm.extend_from_slice(oob);
            perm.shuffle(&mut rng::rng_from(perm_seed(p)));
            let permuted: f64 = oob
                .iter()
                .zip(&perm)
                .map(|(&i, &src)| {
                    let d = y[i] - self.route(&feats, i, Some((p, src)));
                    d * d
                })
                .sum::<f64>()
                / m;
            out[p] = permuted - base;
        }
        Ok(out)
    }
}

/// Borrowed view of one predictor column.
#[derive(Clone, Copy)]
enum Feat<'a> {
    Num(&'a [f64]),
    Cat(&'a [u32]),
}

impl<'a> Feat<'a> {
    fn of(data: &'a ColumnData) -> Self {
        match data {
            ColumnData::Numeric(v) => Feat::Num(v),
            ColumnData::Categorical { codes, .. } => Feat::Cat(codes),
        }
    }
}

/// Multiplicity of each row in a bootstrap sample of size `n`.
pub fn bootstrap_weights(n: usize, seed: u64) -> Vec<u32> {
    use rand::Rng as _;
    let mut rng = rng::rng_from(seed);
    let mut w = vec![0u32; n];
    for _ in 0..n {
        w[rng.random_range(0..n)] += 1;
    }
    w
}

/// Grows a tree on all rows of `train` (unit weights).
pub fn fit_tree(
    train: &Dataset,
    min_node_size: usize,
    feature_subset_size: Option<usize>,
    seed: u64,
) -> Result<RegressionTree> {
    let params = TreeParams {
        min_node_size,
        feature_subset_size,
    };
    fit_weighted(train.frame(), train.target(), &vec![1; train.n_rows()], params, seed)
}

/// Grows a tree on a bootstrap sample of `train` and records its OOB mask.
/// The bootstrap is drawn from `seed` and the growth randomness from a
/// separate stream of the same seed.
pub fn fit_bootstrap_tree(
    train: &Dataset,
    min_node_size: usize,
    feature_subset_size: Option<usize>,
    seed: u64,
) -> Result<RegressionTree> {
    let (weights, grow_seed) = bootstrap_plan(train.n_rows(), seed);
    let params = TreeParams {
        min_node_size,
        feature_subset_size,
    };
    let mut tree = fit_weighted(train.frame(), train.target(), &weights, params, grow_seed)?;
    tree.oob_mask = Some(weights.iter().map(|&w| w == 0).collect());
    Ok(tree)
}

/// Bootstrap weights and growth seed used by [`fit_bootstrap_tree`].
pub fn bootstrap_plan(n: usize, seed: u64) -> (Vec<u32>, u64) {
    (
        bootstrap_weights(n, rng::derive(seed, &[rng::TAG_BOOTSTRAP])),
        rng::derive(seed, &[rng::TAG_GROW]),
    )
}

/// Grows a tree where row `i` carries integer weight `weights[i]` (a
/// bootstrap multiplicity; 0 excludes the row).
pub fn fit_weighted(
    frame: &Frame,
    y: &[f64],
    weights: &[u32],
    params: TreeParams,
    seed: u64,
) -> Result<RegressionTree> {
    if params.min_node_size == 0 {
        return Err(Error::invalid("min_node_size must be at least 1"));
    }
    if y.len() != frame.n_rows() || weights.len() != frame.n_rows() {
        return Err(Error::invalid("target/weights length does not match the frame"));
    }
    if let Some(k) = params.feature_subset_size {
        if k == 0 || k > frame.n_cols().max(1) {
            return Err(Error::invalid(format!(
                "feature_subset_size {k} outside 1..={}",
                frame.n_cols()
            )));
        }
    }
    let rows: Vec<usize> = (0..frame.n_rows()).filter(|&i| weights[i] > 0).collect();
    if rows.is_empty() {
        return Err(Error::Empty("training set is empty".into()));
    }
    let feats: Vec<Feat<'_>> = frame.columns().iter().map(|c| Feat::of(c.data())).collect();
    let n_levels: Vec<usize> = frame
        .columns()
        .iter()
        .map(|c| c.levels().map_or(0, <[String]>::len))
        .collect();
    let mut g = Grower {
        feats,
        n_levels,
        y,
        w: weights,
        params,
        rng: rng::rng_from(seed),
        nodes: Vec::new(),
        pairs: Vec::new(),
        level_w: Vec::new(),
        level_s: Vec::new(),
    };
    g.grow(rows);
    Ok(RegressionTree {
        nodes: g.nodes,
        min_node_size: params.min_node_size,
        feature_kinds: frame.kinds(),
        oob_mask: None,
    })
}

pub fn predict_tree(tree: &RegressionTree, rows: &Frame) -> Result<Vec<f64>> {
    tree.predict(rows)
}

/// Single-tree permutation importance over the tree's OOB rows: for each
/// variable, MSE with that variable shuffled among the OOB rows minus the
/// unshuffled OOB MSE.
pub fn tree_importance(tree: &RegressionTree, train: &Dataset, seed: u64) -> Result<Vec<f64>> {
    let mask = tree
        .oob_mask()
        .ok_or_else(|| Error::Oob("tree has no out-of-bag mask (not grown on a bootstrap sample)".into()))?;
    if mask.len() != train.n_rows() {
        return Err(Error::Oob("OOB mask length does not match the training set".into()));
    }
    let oob = tree.oob_rows();
    if oob.len() < 2 {
        return Err(Error::Oob(format!("{} out-of-bag rows, need at least 2", oob.len())));
    }
    tree.permutation_deltas(train.frame(), train.target(), &oob, |p| {
        rng::derive(seed, &[rng::TAG_PERMUTE, p as u64])
    })
}

#[derive(Clone, Copy, Default)]
struct Stats {
    w: f64,
    s: f64,
}

struct Candidate {
    gain: f64,
    rule: SplitRule,
}

struct Grower<'a> {
    feats: Vec<Feat<'a>>,
    n_levels: Vec<usize>,
    y: &'a [f64],
    w: &'a [u32],
    params: TreeParams,
    rng: Rng,
    nodes: Vec<Node>,
    pairs: Vec<(f64, f64, f64)>,
    level_w: Vec<f64>,
    level_s: Vec<f64>,
}

impl Grower<'_> {
    fn grow(&mut self, mut rows: Vec<usize>) {
        self.nodes.push(Node::Leaf { value: 0.0, count: 0 });
        let mut stack = vec![(0usize, 0usize, rows.len())];
        while let Some((id, lo, hi)) = stack.pop() {
            let slice = &rows[lo..hi];
            let (stats, sse, constant) = self.node_stats(slice);
            let count = stats.w as usize;
            let value = stats.s / stats.w;
            let leaf = Node::Leaf { value, count };
            if count <= self.params.min_node_size || constant {
                self.nodes[id] = leaf;
                continue;
            }
            let Some(best) = self.best_split(slice, stats, sse) else {
                self.nodes[id] = leaf;
                continue;
            };
            let feat = self.feats[best.rule.variable()];
            let mid = lo + partition(&mut rows[lo..hi], |&r| best.rule.goes_left(&feat, r));
            debug_assert!(mid > lo && mid < hi);
            let left = self.nodes.len();
            self.nodes.push(Node::Leaf { value: 0.0, count: 0 });
            self.nodes.push(Node::Leaf { value: 0.0, count: 0 });
            self.nodes[id] = Node::Split {
                rule: best.rule,
                left,
                right: left + 1,
                count,
            };
            stack.push((left + 1, mid, hi));
            stack.push((left, lo, mid));
        }
    }

    fn node_stats(&self, rows: &[usize]) -> (Stats, f64, bool) {
        let mut st = Stats::default();
        let first = self.y[rows[0]];
        let mut constant = true;
        for &r in rows {
            let w = self.w[r] as f64;
            st.w += w;
            st.s += w * self.y[r];
            constant &= self.y[r] == first;
        }
        let mean = st.s / st.w;
        let sse = rows
            .iter()
            .map(|&r| {
                let d = self.y[r] - mean;
                self.w[r] as f64 * d * d
            })
            .sum();
        (st, sse, constant)
    }

    fn candidate_features(&mut self) -> Vec<usize> {
        let q = self.feats.len();
        match self.params.feature_subset_size {
            Some(k) if k < q => {
                let mut v = rand::seq::index::sample(&mut self.rng, q, k).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..q).collect(),
        }
    }

    fn best_split(&mut self, rows: &[usize], total: Stats, sse: f64) -> Option<Candidate> {
        let tol = GAIN_REL_TOL * sse;
        let base = total.s * total.s / total.w;
        let mut best: Option<Candidate> = None;
        for var in self.candidate_features() {
            let current = best.as_ref().map(|c| c.gain);
            let found = match self.feats[var] {
                Feat::Num(x) => self.scan_numeric(var, x, rows, total, base, current, tol),
                Feat::Cat(c) => self.scan_categorical(var, c, rows, total, base, current, tol),
            };
            if found.is_some() {
                best = found;
            }
        }
        best
    }

    /// Scans thresholds in ascending order, returning the last one that
    /// [`beats`] the running best.
    #[allow(clippy::too_many_arguments)]
    fn scan_numeric(
        &mut self,
        var: usize,
        x: &[f64],
        rows: &[usize],
        total: Stats,
        base: f64,
        mut current: Option<f64>,
        tol: f64,
    ) -> Option<Candidate> {
        self.pairs.clear();
        self.pairs.extend(rows.iter().map(|&r| {
            let w = self.w[r] as f64;
            (x[r], w, w * self.y[r])
        }));
        self.pairs.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        let mut found = None;
        let mut left = Stats::default();
        for i in 0..self.pairs.len() - 1 {
            let (xi, wi, si) = self.pairs[i];
            left.w += wi;
            left.s += si;
            let next = self.pairs[i + 1].0;
            if xi == next {
                continue;
            }
            let rs = total.s - left.s;
            let gain = left.s * left.s / left.w + rs * rs / (total.w - left.w) - base;
            if beats(gain, current, tol) {
                current = Some(gain);
                found = Some((gain, xi, next));
            }
        }
        found.map(|(gain, lo, hi)| {
            let mut threshold = lo + (hi - lo) / 2.0;
            if threshold >= hi {
                threshold = lo;
            }
            Candidate {
                gain,
                rule: SplitRule::NumericThreshold { variable: var, threshold },
            }
        })
    }

    /// Orders the observed levels by mean target (level index on ties) and
    /// scans contiguous prefixes, which finds an SSE-optimal subset.
    #[allow(clippy::too_many_arguments)]
    fn scan_categorical(
        &mut self,
        var: usize,
        codes: &[u32],
        rows: &[usize],
        total: Stats,
        base: f64,
        mut current: Option<f64>,
        tol: f64,
    ) -> Option<Candidate> {
        let l = self.n_levels[var];
        self.level_w.clear();
        self.level_w.resize(l, 0.0);
        self.level_s.clear();
        self.level_s.resize(l, 0.0);
        for &r in rows {
            let c = codes[r] as usize;
            let w = self.w[r] as f64;
            self.level_w[c] += w;
            self.level_s[c] += w * self.y[r];
        }
        let (lw, ls) = (&self.level_w, &self.level_s);
        let mut observed: Vec<usize> = (0..l).filter(|&c| lw[c] > 0.0).collect();
        if observed.len() < 2 {
            return None;
        }
        observed.sort_by(|&a, &b| (ls[a] / lw[a]).total_cmp(&(ls[b] / lw[b])).then(a.cmp(&b)));
        let mut found = None;
        let mut left = Stats::default();
        for (k, &c) in observed[..observed.len() - 1].iter().enumerate() {
            left.w += lw[c];
            left.s += ls[c];
            let rs = total.s - left.s;
            let gain = left.s * left.s / left.w + rs * rs / (total.w - left.w) - base;
            if beats(gain, current, tol) {
                current = Some(gain);
                found = Some((gain, k, left.w >= total.w - left.w));
            }
        }
        let (gain, k, unseen_left) = found?;
        let mut left_levels: Vec<u32> = observed[..=k].iter().map(|&c| c as u32).collect();
        let mut right_levels: Vec<u32> = observed[k + 1..].iter().map(|&c| c as u32).collect();
        left_levels.sort_unstable();
        right_levels.sort_unstable();
        Some(Candidate {
            gain,
            rule: SplitRule::CategorySubset {
                variable: var,
                left_levels,
                right_levels,
                unseen_left,
            },
        })
    }
}

/// Sequential tie rule shared with the brute-force oracle in the tests: the
/// first candidate must reduce SSE by more than `tol`; later candidates must
/// exceed the running best by more than `tol`.
pub fn beats(gain: f64, current: Option<f64>, tol: f64) -> bool {
    match current {
        None => gain > tol,
        Some(b) => gain > b + tol,
    }
}

/// In-place partition; returns the number of elements satisfying `pred`,
/// which are moved to the front.
fn partition<T, F: Fn(&T) -> bool>(v: &mut [T], pred: F) -> usize {
    let mut i = 0;
    for j in 0..v.len() {
        if pred(&v[j]) {
            v.swap(i, j);
            i += 1;
        }
    }
    i
}
