//! Synthetic Poisson benchmark: `p` true predictors of mixed kinds, `p`
//! independent decoys of the same kinds, and a count response
//! `Y ~ Poisson(exp(clip(x·β)))`.

use rand::Rng as _;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

use crate::data::{Column, ColumnKind, Dataset, Frame, Schema, SchemaKind};
use crate::error::{Error, Result};
use crate::pipeline::{self, StrategyConfig};
use crate::rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VarKind {
    Gaussian,
    Discrete,
    Categorical,
    Poisson,
}

/// Proportions of the four predictor kinds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KindMix {
    pub gaussian: f64,
    pub discrete: f64,
    pub categorical: f64,
    pub poisson: f64,
}

impl Default for KindMix {
    fn default() -> Self {
        KindMix {
            gaussian: 0.25,
            discrete: 0.25,
            categorical: 0.25,
            poisson: 0.25,
        }
    }
}

impl KindMix {
    fn weights(&self) -> [(VarKind, f64); 4] {
        [
            (VarKind::Gaussian, self.gaussian),
            (VarKind::Discrete, self.discrete),
            (VarKind::Categorical, self.categorical),
            (VarKind::Poisson, self.poisson),
        ]
    }

    /// Kinds for `p` columns by largest-remainder apportionment, in the
    /// fixed kind order.
    pub fn kinds(&self, p: usize) -> Vec<VarKind> {
        let w = self.weights();
        let quotas: Vec<f64> = w.iter().map(|(_, f)| f * p as f64).collect();
        let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())).then(a.cmp(&b)));
        let mut left = p - counts.iter().sum::<usize>();
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            counts[i] += 1;
            left -= 1;
        }
        w.iter().zip(&counts).flat_map(|((k, _), &c)| std::iter::repeat_n(*k, c)).collect()
    }
}

/// How coefficients are drawn.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "kebab-case")]
pub enum BetaDraw {
    /// `N(0, 1)`.
    Normal,
    /// `N(0, 1)` redrawn until `|β| > min_abs`.
    NormalAbove { min_abs: f64 },
    /// All coefficients zero (null model).
    Zero,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSpec {
    pub p: usize,
    pub n: usize,
    pub mix: KindMix,
    pub beta_seed: u64,
    pub data_seed: u64,
    pub linear_clip: f64,
    pub beta: BetaDraw,
}

impl SimSpec {
    pub fn new(p: usize, n: usize, seed: u64) -> Self {
        SimSpec {
            p,
            n,
            mix: KindMix::default(),
            beta_seed: seed,
            data_seed: seed,
            linear_clip: 10.0,
            beta: BetaDraw::Normal,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p == 0 {
            return Err(Error::invalid("p must be at least 1"));
        }
        if self.n < 2 {
            return Err(Error::invalid("n must be at least 2"));
        }
        let w = self.mix.weights();
        if w.iter().any(|(_, f)| !(f.is_finite() && *f >= 0.0)) || (w.iter().map(|(_, f)| f).sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("kind proportions must be non-negative and sum to 1"));
        }
        if self.linear_clip.is_nan() || self.linear_clip <= 0.0 {
            return Err(Error::invalid("linear_clip must be positive"));
        }
        if let BetaDraw::NormalAbove { min_abs } = self.beta {
            if !(0.0..3.0).contains(&min_abs) {
                return Err(Error::invalid("min_abs must lie in [0, 3)"));
            }
        }
        Ok(())
    }
}

/// Coefficients of one true predictor: one value for numeric kinds, one per
/// non-reference level for categorical ones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coefficients {
    pub name: String,
    pub kind: VarKind,
    pub beta: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct Simulation {
    pub dataset: Dataset,
    pub coefficients: Vec<Coefficients>,
    /// Poisson rate of every row after clipping.
    pub rate: Vec<f64>,
    /// Fraction of rows whose linear predictor was clipped.
    pub clip_fraction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub true_variables: Vec<String>,
    pub noise_variables: Vec<String>,
    /// Kind of every emitted predictor column, in file order.
    pub columns: Vec<TruthColumn>,
    pub coefficients: Vec<Coefficients>,
    pub clip_fraction: f64,
    pub spec: SimSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TruthColumn {
    pub name: String,
    pub kind: ColumnKind,
}

impl Truth {
    /// Schema declaring the generated kinds, so an integer column is not
    /// re-inferred as categorical when the CSV is read back.
    pub fn schema(&self) -> Schema {
        Schema {
            entries: self.columns.iter().map(|c| (c.name.clone(), SchemaKind::Column(c.kind))).collect(),
        }
    }
}

const TAG_BETA: u64 = 0xBE7A;
const TAG_LEVELS: u64 = 0x1E7E;
const TAG_COLUMN: u64 = 0xC011;
const TAG_RESPONSE: u64 = 0x4E59;

/// A generated column and, for categorical kinds, its level label per row.
struct Drawn {
    values: Vec<f64>,
    labels: Option<Vec<usize>>,
}

fn draw_column(kind: VarKind, n: usize, index_within_kind: usize, n_levels: usize, seed: u64) -> Drawn {
    let mut r = rng::rng_from(seed);
    match kind {
        VarKind::Gaussian => {
            let mu = [-1.0, 0.0, 1.0][index_within_kind % 3];
            let d = Normal::new(mu, 1.0).unwrap();
            Drawn {
                values: (0..n).map(|_| d.sample(&mut r)).collect(),
                labels: None,
            }
        }
        VarKind::Discrete => Drawn {
            values: (0..n).map(|_| r.random_range(1..=10) as f64).collect(),
            labels: None,
        },
        VarKind::Poisson => {
            let d = Poisson::new(1.0).unwrap();
            Drawn {
                values: (0..n).map(|_| d.sample(&mut r)).collect(),
                labels: None,
            }
        }
        VarKind::Categorical => {
            let l: Vec<usize> = (0..n).map(|_| r.random_range(0..n_levels)).collect();
            Drawn {
                values: Vec::new(),
                labels: Some(l),
            }
        }
    }
}

fn to_column(name: String, kind: VarKind, d: Drawn) -> Result<Column> {
    match d.labels {
        Some(l) => {
            let labels: Vec<String> = l.iter().map(|&i| format!("L{}", i + 1)).collect();
            Column::categorical_from_labels(name, &labels)
        }
        None => {
            let ck = if kind == VarKind::Gaussian { ColumnKind::Continuous } else { ColumnKind::Discrete };
            Column::numeric(name, ck, d.values)
        }
    }
}

fn draw_beta(rule: BetaDraw, r: &mut rng::Rng) -> f64 {
    let d = Normal::new(0.0, 1.0).unwrap();
    match rule {
        BetaDraw::Normal => d.sample(r),
        BetaDraw::NormalAbove { min_abs } => loop {
            let b: f64 = d.sample(r);
            if b.abs() > min_abs {
                break b;
            }
        },
        BetaDraw::Zero => 0.0,
    }
}

/// Generates the dataset. Columns `X1..Xp` are the true predictors and
/// `Z1..Zp` the decoys; decoy `j` has the same kind as `Xj`.
pub fn simulate(spec: &SimSpec) -> Result<Simulation> {
    spec.validate()?;
    let (p, n) = (spec.p, spec.n);
    let kinds = spec.mix.kinds(p);
    let mut beta_rng = rng::rng_from(rng::derive(spec.beta_seed, &[TAG_BETA]));
    let mut level_rng = rng::rng_from(rng::derive(spec.beta_seed, &[TAG_LEVELS]));
    let levels: Vec<usize> = kinds
        .iter()
        .map(|k| if *k == VarKind::Categorical { level_rng.random_range(2..=10) } else { 0 })
        .collect();
    let within: Vec<usize> = (0..p).map(|j| kinds[..j].iter().filter(|k| **k == kinds[j]).count()).collect();

    let mut eta = vec![0.0; n];
    let mut columns = Vec::with_capacity(2 * p);
    let mut coefficients = Vec::with_capacity(p);
    for j in 0..p {
        let d = draw_column(kinds[j], n, within[j], levels[j], rng::derive(spec.data_seed, &[TAG_COLUMN, j as u64]));
        let name = format!("X{}", j + 1);
        let beta: Vec<f64> = match kinds[j] {
            VarKind::Categorical => (1..levels[j]).map(|_| draw_beta(spec.beta, &mut beta_rng)).collect(),
            _ => vec![draw_beta(spec.beta, &mut beta_rng)],
        };
        match &d.labels {
            // Level 1 is the reference; level `l > 1` adds `beta[l - 2]`.
            Some(l) => {
                for (e, &lv) in eta.iter_mut().zip(l) {
                    if lv > 0 {
                        *e += beta[lv - 1];
                    }
                }
            }
            None => {
                for (e, v) in eta.iter_mut().zip(&d.values) {
                    *e += beta[0] * v;
                }
            }
        }
        coefficients.push(Coefficients {
            name: name.clone(),
            kind: kinds[j],
            beta,
        });
        columns.push(to_column(name, kinds[j], d)?);
    }
    for j in 0..p {
        let d = draw_column(kinds[j], n, within[j], levels[j], rng::derive(spec.data_seed, &[TAG_COLUMN, (p + j) as u64]));
        columns.push(to_column(format!("Z{}", j + 1), kinds[j], d)?);
    }

    let clip = spec.linear_clip;
    let clipped = eta.iter().filter(|e| e.abs() > clip).count();
    let rate: Vec<f64> = eta.iter().map(|e| e.clamp(-clip, clip).exp()).collect();
    let mut yr = rng::rng_from(rng::derive(spec.data_seed, &[TAG_RESPONSE]));
    let y: Vec<f64> = rate.iter().map(|&l| Poisson::new(l).unwrap().sample(&mut yr)).collect();

    let mut mask = vec![true; p];
    mask.extend(std::iter::repeat_n(false, p));
    let dataset = Dataset::new(Frame::new(columns, n)?, y)?.with_truth_mask(mask)?;
    Ok(Simulation {
        dataset,
        coefficients,
        rate,
        clip_fraction: clipped as f64 / n as f64,
    })
}

impl Simulation {
    pub fn truth(&self, spec: &SimSpec) -> Truth {
        let names = self.dataset.names();
        let p = spec.p;
        Truth {
            true_variables: names[..p].to_vec(),
            noise_variables: names[p..].to_vec(),
            columns: self
                .dataset
                .frame()
                .columns()
                .iter()
                .map(|c| TruthColumn {
                    name: c.name().to_string(),
                    kind: c.kind(),
                })
                .collect(),
            coefficients: self.coefficients.clone(),
            clip_fraction: self.clip_fraction,
            spec: *spec,
        }
    }
}

pub fn write_truth(truth: &Truth, path: &Path) -> Result<()> {
    let mut s = serde_json::to_string_pretty(truth)?;
    s.push('\n');
    std::fs::write(path, s).map_err(|e| Error::io(path, e))
}

pub fn read_truth(path: &Path) -> Result<Truth> {
    let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(serde_json::from_str(&s)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub total_vars: usize,
    pub sp: f64,
    pub sa: f64,
    pub vi_min: f64,
    pub selected: usize,
    pub seconds: f64,
}

/// Runs the selection loop on a fresh simulation for each total variable
/// count `2p` in `totals`.
pub fn sweep_variable_counts(base: &SimSpec, totals: &[usize], config: &StrategyConfig) -> Result<Vec<SweepRow>> {
    if totals.is_empty() {
        return Err(Error::invalid("no variable totals given"));
    }
    if let Some(t) = totals.iter().find(|&&t| t < 2 || t % 2 != 0) {
        return Err(Error::invalid(format!("total {t} is not an even number ≥ 2")));
    }
    totals
        .iter()
        .map(|&t| {
            let started = Instant::now();
            let spec = SimSpec { p: t / 2, ..*base };
            let sim = simulate(&spec)?;
            let report = pipeline::run_lolo_dcv(&sim.dataset, config)?;
            let sp_sa = report.sp_sa.expect("simulated data carries a truth mask");
            Ok(SweepRow {
                total_vars: t,
                sp: sp_sa.sp,
                sa: sp_sa.sa,
                vi_min: report.vi_min.vi_min,
                selected: report.remaining,
                seconds: started.elapsed().as_secs_f64(),
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from("total_vars,SP,SA,VI_min,selected,seconds\n");
    for r in rows {
        s.push_str(&format!("{},{},{},{},{},{:.3}\n", r.total_vars, r.sp, r.sa, r.vi_min, r.selected, r.seconds));
    }
    s
}
