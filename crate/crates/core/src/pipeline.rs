//! The nested cross-validation loop: threshold on the full data, outer
//! folds with per-fold parameter tuning and held-out prediction, importance
//! aggregation, thresholded selection and evaluation.

use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::time::Instant;

use crate::data::{make_folds, split_by_fold, ColumnSpec, Dataset, FoldPlan};
use crate::error::{Error, Result};
use crate::forest::ImportanceVector;
use crate::par;
use crate::rng;
use crate::tuning::{self, CandidateSweep, ImportanceMatrix, Model, ModelDefaults, Strategy, Threshold};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

const TAG_VI_MIN: u64 = 0x717A;
const TAG_FOLD: u64 = 0xF07D;
const TAG_FINAL: u64 = 0xF1A7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StrategyConfig {
    pub strategy: Strategy,
    pub outer_folds: usize,
    pub grouped: bool,
    pub n_r: usize,
    /// `None` uses the strategy's default grid.
    pub candidate_grid: Option<Vec<usize>>,
    pub seed: u64,
    pub refit_and_select: bool,
    /// Recompute the threshold on each fold's training part instead of once
    /// on the full data.
    pub strict_vi_min: bool,
    pub defaults: ModelDefaults,
}

impl StrategyConfig {
    pub fn new(strategy: Strategy) -> Self {
        StrategyConfig {
            strategy,
            outer_folds: 10,
            grouped: false,
            n_r: 100,
            candidate_grid: None,
            seed: 0,
            refit_and_select: false,
            strict_vi_min: false,
            defaults: ModelDefaults::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.outer_folds < 2 {
            return Err(Error::invalid("outer_folds must be at least 2"));
        }
        if self.n_r < 2 {
            return Err(Error::invalid("n_r must be at least 2"));
        }
        if self.defaults.ntree == 0 || self.defaults.min_node_size == 0 {
            return Err(Error::invalid("default ntree and min_node_size must be positive"));
        }
        if let Some(g) = &self.candidate_grid {
            if g.is_empty() || g.contains(&0) {
                return Err(Error::invalid("candidate grid must be non-empty and positive"));
            }
        }
        Ok(())
    }

    fn grid_for(&self, n_train: usize) -> Vec<usize> {
        self.candidate_grid
            .clone()
            .unwrap_or_else(|| tuning::default_grid(self.strategy, n_train))
    }
}

/// Hooks for auditing which rows each model saw. Row identifiers are the
/// dataset's `row_ids`.
pub trait Observer: Sync {
    fn model_fitted(&self, _fold: Option<usize>, _training_rows: &[usize]) {}
    fn predicted(&self, _fold: usize, _training_rows: &[usize], _predicted_rows: &[usize]) {}
}

struct NoObserver;
impl Observer for NoObserver {}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldRecord {
    pub fold: usize,
    pub n_train: usize,
    pub test_rows: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
    pub sweep: Option<CandidateSweep>,
    pub chosen_m: Option<usize>,
    pub importance: Option<Vec<f64>>,
    pub predictions: Option<Vec<f64>>,
    pub error: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PredictionMetrics {
    pub n: usize,
    pub mean_pred: f64,
    pub mean_obs: f64,
    pub quadratic_risk: f64,
    pub absolute_risk: f64,
    /// Variance of the observed target (divisor n): the quadratic risk of
    /// predicting the mean.
    pub obs_variance: f64,
    pub cpu_seconds: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpSa {
    pub sp: f64,
    pub sa: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefitReport {
    pub variables: Vec<String>,
    pub per_fold: Vec<FoldRecord>,
    pub predictions: Vec<f64>,
    pub metrics: Option<PredictionMetrics>,
    pub final_chosen_m: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SelectionReport {
    pub schema_version: u32,
    pub config: StrategyConfig,
    pub n_obs: usize,
    pub variables: Vec<String>,
    pub vi_min: Threshold,
    pub vi_min_rule: String,
    pub fold_plan: FoldPlanSummary,
    pub per_fold: Vec<FoldRecord>,
    pub importance_matrix: ImportanceMatrix,
    pub mean_importance: ImportanceVector,
    pub selected: Vec<String>,
    pub remaining: usize,
    /// Held-out prediction per row (`None` where the row's fold failed).
    pub predictions: Vec<Option<f64>>,
    pub metrics: PredictionMetrics,
    pub sp_sa: Option<SpSa>,
    pub refit: Option<RefitReport>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldPlanSummary {
    pub n_folds: usize,
    pub grouped: bool,
    pub fold_sizes: Vec<usize>,
}

/// A model fitted on the whole (selected) data for later prediction.
#[derive(Clone, Debug)]
pub struct FinalModel {
    pub model: Model,
    pub chosen_m: usize,
    pub columns: Vec<ColumnSpec>,
}

pub struct RunOutput {
    pub report: SelectionReport,
    pub final_model: Option<FinalModel>,
}

pub const VI_MIN_RULE: &str = "sigma_j = min over nonzero entries of column j (negative entries retained); all-zero columns skipped; vi_min = min(sigma) + sample sd(sigma)";

pub fn run_lolo_dcv(data: &Dataset, config: &StrategyConfig) -> Result<SelectionReport> {
    run_lolo_dcv_with(data, config, &NoObserver).map(|o| o.report)
}

/// Runs the full loop, notifying `observer` of every fit and prediction.
pub fn run_lolo_dcv_with(data: &Dataset, config: &StrategyConfig, observer: &dyn Observer) -> Result<RunOutput> {
    config.validate()?;
    if data.n_cols() == 0 {
        return Err(Error::invalid("dataset has no predictor columns"));
    }
    let started = Instant::now();
    let mut warnings = Vec::new();

    let vi_seed = rng::derive(config.seed, &[TAG_VI_MIN]);
    let global = if config.strict_vi_min {
        None
    } else {
        observer.model_fitted(None, data.row_ids());
        Some(tuning::compute_vi_min(data, config.strategy, config.n_r, vi_seed, &config.defaults)?.0)
    };

    let plan = make_folds(data, config.outer_folds, config.grouped, config.seed)?;
    let (per_fold, mut errors) = outer_loop(data, config, &plan, observer, true);
    let ok: Vec<&FoldRecord> = per_fold.iter().filter(|f| f.error.is_none()).collect();
    if ok.is_empty() {
        return Err(errors.swap_remove(0));
    }
    for e in &errors {
        warnings.push(e.to_string());
    }
    for f in &per_fold {
        for c in f.sweep.iter().flat_map(|s| &s.failures) {
            warnings.push(format!("fold {}: candidate {} failed: {}", f.fold, c.candidate, c.error));
        }
    }

    let threshold = match global {
        Some(t) => t,
        None => {
            let ts: Vec<f64> = ok.iter().filter_map(|f| f.threshold).collect();
            let mean = ts.iter().sum::<f64>() / ts.len() as f64;
            Threshold {
                vi_min: mean,
                sigma: ts.clone(),
                n_r: config.n_r,
                skipped_columns: Vec::new(),
            }
        }
    };

    let matrix = ImportanceMatrix::from_columns(ok.iter().map(|f| f.importance.clone().unwrap()).collect())?;
    let mean_importance = ImportanceVector::new(data.names(), matrix.row_means())?;
    let selection = tuning::select_variables(&mean_importance, &threshold);
    if let Some(w) = &selection.warning {
        warnings.push(w.clone());
    }

    let predictions = scatter_predictions(data.n_rows(), &per_fold, data);
    let (pred, obs): (Vec<f64>, Vec<f64>) = predictions
        .iter()
        .zip(data.target())
        .filter_map(|(p, &y)| p.map(|p| (p, y)))
        .unzip();

    let sp_sa = data.truth_mask().map(|mask| {
        let truth: Vec<usize> = (0..mask.len()).filter(|&i| mask[i]).collect();
        SpSa {
            sp: selection.indices.len() as f64 / data.n_cols() as f64,
            sa: selection_accuracy_idx(&selection.indices, &truth),
        }
    });

    let (refit, final_model) = if config.refit_and_select {
        let (r, m) = refit(data, config, &plan, &selection.indices, observer)?;
        (Some(r), Some(m))
    } else {
        (None, None)
    };

    let elapsed = started.elapsed().as_secs_f64();
    let metrics = prediction_metrics(&pred, &obs, elapsed)?;
    let report = SelectionReport {
        schema_version: REPORT_SCHEMA_VERSION,
        config: config.clone(),
        n_obs: data.n_rows(),
        variables: data.names(),
        vi_min: threshold,
        vi_min_rule: VI_MIN_RULE.to_string(),
        fold_plan: FoldPlanSummary {
            n_folds: plan.n_folds(),
            grouped: plan.grouped(),
            fold_sizes: plan.fold_sizes(),
        },
        per_fold,
        importance_matrix: matrix,
        mean_importance,
        remaining: selection.names.len(),
        selected: selection.names,
        predictions,
        metrics,
        sp_sa,
        refit,
        warnings,
    };
    Ok(RunOutput { report, final_model })
}

fn row_ids(data: &Dataset, positions: &[usize]) -> Vec<usize> {
    positions.iter().map(|&i| data.row_ids()[i]).collect()
}

fn scatter_predictions(n: usize, per_fold: &[FoldRecord], data: &Dataset) -> Vec<Option<f64>> {
    let pos: std::collections::HashMap<usize, usize> = data.row_ids().iter().enumerate().map(|(i, &r)| (r, i)).collect();
    let mut out = vec![None; n];
    for f in per_fold {
        if let Some(p) = &f.predictions {
            for (r, v) in f.test_rows.iter().zip(p) {
                out[pos[r]] = Some(*v);
            }
        }
    }
    out
}

fn outer_loop(
    data: &Dataset,
    config: &StrategyConfig,
    plan: &FoldPlan,
    observer: &dyn Observer,
    record_importance: bool,
) -> (Vec<FoldRecord>, Vec<Error>) {
    let results = par::map_indexed(plan.n_folds(), |k| {
        let (train, test) = split_by_fold(data, plan, k).map_err(|e| (0, Vec::new(), e))?;
        let test_rows = test.row_ids().to_vec();
        run_fold(&train, &test, config, k, observer, record_importance).map_err(|e| (train.n_rows(), test_rows, e))
    });
    let mut records = Vec::new();
    let mut errors = Vec::new();
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok(rec) => records.push(rec),
            Err((n_train, test_rows, e)) => {
                let e = e.in_fold(k);
                records.push(FoldRecord {
                    fold: k,
                    n_train,
                    test_rows,
                    threshold: None,
                    sweep: None,
                    chosen_m: None,
                    importance: None,
                    predictions: None,
                    error: Some(e.to_string()),
                });
                errors.push(e);
            }
        }
    }
    (records, errors)
}

fn run_fold(
    train: &Dataset,
    test: &Dataset,
    config: &StrategyConfig,
    k: usize,
    observer: &dyn Observer,
    record_importance: bool,
) -> Result<FoldRecord> {
    let seed = rng::derive(config.seed, &[TAG_FOLD, k as u64]);
    let threshold = if config.strict_vi_min && record_importance {
        observer.model_fitted(Some(k), train.row_ids());
        let vi_seed = rng::derive(seed, &[TAG_VI_MIN]);
        Some(tuning::compute_vi_min(train, config.strategy, config.n_r, vi_seed, &config.defaults)?.0.vi_min)
    } else {
        None
    };
    let grid = config.grid_for(train.n_rows());
    observer.model_fitted(Some(k), train.row_ids());
    let outcome = tuning::sweep_with_model(train, config.strategy, &grid, seed, &config.defaults)?;
    let chosen = outcome.sweep.chosen(config.strategy);
    let predictions = outcome.model.predict(test.frame())?;
    observer.predicted(k, train.row_ids(), test.row_ids());
    Ok(FoldRecord {
        fold: k,
        n_train: train.n_rows(),
        test_rows: test.row_ids().to_vec(),
        threshold,
        sweep: Some(outcome.sweep),
        chosen_m: Some(chosen),
        importance: Some(outcome.importance),
        predictions: Some(predictions),
        error: None,
    })
}

/// Cross-validated predictions of the strategy restricted to the selected
/// columns (same fold plan), and a final model on all rows.
fn refit(
    data: &Dataset,
    config: &StrategyConfig,
    plan: &FoldPlan,
    selected: &[usize],
    observer: &dyn Observer,
) -> Result<(RefitReport, FinalModel)> {
    let sub = data.select_columns(selected);
    let names = sub.names();
    if selected.is_empty() {
        // No selected variable: each fold predicts its training mean.
        let mut predictions = vec![f64::NAN; data.n_rows()];
        for k in 0..plan.n_folds() {
            let train = plan.train_rows(k);
            let mean = train.iter().map(|&i| data.target()[i]).sum::<f64>() / train.len() as f64;
            observer.predicted(k, &row_ids(data, &train), &row_ids(data, &plan.test_rows(k)));
            for i in plan.test_rows(k) {
                predictions[i] = mean;
            }
        }
        let model = Model::Tree(crate::cart::fit_tree(&sub, data.n_rows(), None, config.seed)?);
        let report = RefitReport {
            variables: names.clone(),
            per_fold: Vec::new(),
            predictions,
            metrics: None,
            final_chosen_m: None,
        };
        return Ok((
            report,
            FinalModel {
                model,
                chosen_m: data.n_rows(),
                columns: sub.frame().specs(),
            },
        ));
    }
    let (per_fold, _) = outer_loop(&sub, config, plan, observer, false);
    let preds = scatter_predictions(sub.n_rows(), &per_fold, &sub);
    let (pred, obs): (Vec<f64>, Vec<f64>) = preds
        .iter()
        .zip(sub.target())
        .filter_map(|(p, &y)| p.map(|p| (p, y)))
        .unzip();
    let metrics = if pred.is_empty() { None } else { Some(prediction_metrics(&pred, &obs, 0.0)?) };

    let seed = rng::derive(config.seed, &[TAG_FINAL]);
    observer.model_fitted(None, sub.row_ids());
    let outcome = tuning::sweep_with_model(&sub, config.strategy, &config.grid_for(sub.n_rows()), seed, &config.defaults)?;
    let chosen = outcome.sweep.chosen(config.strategy);
    Ok((
        RefitReport {
            variables: names.clone(),
            per_fold,
            predictions: preds.iter().map(|p| p.unwrap_or(f64::NAN)).collect(),
            metrics,
            final_chosen_m: Some(chosen),
        },
        FinalModel {
            model: outcome.model,
            chosen_m: chosen,
            columns: sub.frame().specs(),
        },
    ))
}

/// `|S| / |V|`.
pub fn selection_power(selected: &[String], all_vars: &[String]) -> Result<f64> {
    if all_vars.is_empty() {
        return Err(Error::invalid("variable set is empty"));
    }
    if let Some(s) = selected.iter().find(|s| !all_vars.contains(s)) {
        return Err(Error::invalid(format!("selected variable `{s}` is not a candidate")));
    }
    Ok(selected.len() as f64 / all_vars.len() as f64)
}

/// `|S ∩ V^R| / |S|`, 0 for an empty selection.
pub fn selection_accuracy(selected: &[String], true_vars: &[String]) -> f64 {
    if selected.is_empty() {
        return 0.0;
    }
    selected.iter().filter(|s| true_vars.contains(s)).count() as f64 / selected.len() as f64
}

fn selection_accuracy_idx(selected: &[usize], truth: &[usize]) -> f64 {
    if selected.is_empty() {
        return 0.0;
    }
    selected.iter().filter(|s| truth.contains(s)).count() as f64 / selected.len() as f64
}

pub fn prediction_metrics(predictions: &[f64], observed: &[f64], elapsed: f64) -> Result<PredictionMetrics> {
    if predictions.len() != observed.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} observations",
            predictions.len(),
            observed.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::Empty("no predictions to evaluate".into()));
    }
    let n = predictions.len() as f64;
    let mean_obs = observed.iter().sum::<f64>() / n;
    Ok(PredictionMetrics {
        n: predictions.len(),
        mean_pred: predictions.iter().sum::<f64>() / n,
        mean_obs,
        quadratic_risk: predictions.iter().zip(observed).map(|(p, y)| (p - y) * (p - y)).sum::<f64>() / n,
        absolute_risk: predictions.iter().zip(observed).map(|(p, y)| (p - y).abs()).sum::<f64>() / n,
        obs_variance: observed.iter().map(|y| (y - mean_obs) * (y - mean_obs)).sum::<f64>() / n,
        cpu_seconds: elapsed,
    })
}

impl SelectionReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Per-fold importance as CSV: one row per variable, one column per
    /// successful fold, then the mean and whether it was selected.
    pub fn importance_csv(&self) -> String {
        let folds: Vec<usize> = self.per_fold.iter().filter(|f| f.importance.is_some()).map(|f| f.fold).collect();
        let mut s = String::from("variable");
        for k in &folds {
            let _ = write!(s, ",fold_{k}");
        }
        s.push_str(",mean,selected\n");
        for (i, name) in self.variables.iter().enumerate() {
            s.push_str(name);
            for j in 0..folds.len() {
                let _ = write!(s, ",{}", self.importance_matrix.get(i, j));
            }
            let _ = writeln!(s, ",{},{}", self.mean_importance.values[i], self.selected.contains(name));
        }
        s
    }

    /// Human-readable summary with aligned columns.
    pub fn summary(&self) -> String {
        let mut s = String::new();
        let m = &self.metrics;
        let _ = writeln!(s, "strategy            {}", self.config.strategy);
        let _ = writeln!(s, "observations        {}", self.n_obs);
        let _ = writeln!(s, "variables           {}", self.variables.len());
        let _ = writeln!(
            s,
            "outer folds         {} ({})",
            self.fold_plan.n_folds,
            if self.fold_plan.grouped { "grouped" } else { "ungrouped" }
        );
        let _ = writeln!(s, "VI_min              {:.6}", self.vi_min.vi_min);
        let _ = writeln!(s, "selected (|S|)      {}", self.remaining);
        if let Some(x) = &self.sp_sa {
            let _ = writeln!(s, "SP                  {:.4}", x.sp);
            let _ = writeln!(s, "SA                  {:.4}", x.sa);
        }
        let _ = writeln!(s, "mean prediction     {:.4}", m.mean_pred);
        let _ = writeln!(s, "mean observed       {:.4}", m.mean_obs);
        let _ = writeln!(s, "quadratic risk      {:.4}", m.quadratic_risk);
        let _ = writeln!(s, "absolute risk       {:.4}", m.absolute_risk);
        let _ = writeln!(s, "seconds             {:.2}", m.cpu_seconds);
        if let Some(r) = self.refit.as_ref().and_then(|r| r.metrics) {
            let _ = writeln!(s, "refit QR / AR       {:.4} / {:.4}", r.quadratic_risk, r.absolute_risk);
        }
        s.push('\n');
        let width = self.variables.iter().map(String::len).max().unwrap_or(8).max(8);
        let _ = writeln!(s, "{:<width$}  {:>14}  selected", "variable", "importance");
        for p in self.mean_importance.ranking() {
            let name = &self.variables[p];
            let mark = if self.selected.contains(name) { "*" } else { "" };
            let _ = writeln!(s, "{:<width$}  {:>14.6}  {}", name, self.mean_importance.values[p], mark);
        }
        s.push('\n');
        let _ = writeln!(s, "fold  n_train  n_test  chosen_m");
        for f in &self.per_fold {
            match (&f.chosen_m, &f.error) {
                (Some(c), _) => {
                    let _ = writeln!(s, "{:>4}  {:>7}  {:>6}  {:>8}", f.fold, f.n_train, f.test_rows.len(), c);
                }
                (None, e) => {
                    let _ = writeln!(
                        s,
                        "{:>4}  {:>7}  {:>6}  failed: {}",
                        f.fold,
                        f.n_train,
                        f.test_rows.len(),
                        e.as_deref().unwrap_or("")
                    );
                }
            }
        }
        for w in &self.warnings {
            let _ = writeln!(s, "warning: {w}");
        }
        s
    }
}
