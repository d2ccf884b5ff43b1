//! Command-line interface.
//!
//! Exit codes: 0 success, 1 error (including usage errors), 2 success with
//! warnings.

use clap::{ArgAction, Args, CommandFactory, Parser, Subcommand};
use serde::Serialize;
use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use crate::bundle::{self, Bundle};
use crate::data::{ingest_csv, write_csv, IngestOptions, IngestReport, RawTable, Schema};
use crate::error::{Error, Result};
use crate::par;
use crate::pipeline::{self, SelectionReport, StrategyConfig};
use crate::recode;
use crate::simgen::{self, BetaDraw, SimSpec};
use crate::tuning::ModelDefaults;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_WARNINGS: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "rfselect", version, about = "Variable selection and count prediction with regression trees and random forests")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Generate a synthetic dataset with known true variables.
    Simulate(SimulateArgs),
    /// Run the nested cross-validated selection on a CSV dataset.
    Select(SelectArgs),
    /// Predict a CSV with a saved model bundle.
    Predict(PredictArgs),
    /// Selection power / accuracy / threshold over several variable counts.
    Sweep(SweepArgs),
    /// Replace numeric columns by their quartile classes.
    RecodeQuartiles(RecodeArgs),
}

fn positive(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(format!("`{s}` is not a positive integer")),
    }
}

fn at_least_two(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 2 => Ok(v),
        _ => Err(format!("`{s}` must be an integer ≥ 2")),
    }
}

fn strategy(s: &str) -> std::result::Result<String, String> {
    Ok(s.to_ascii_lowercase())
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct SimulateArgs {
    /// Number of true variables (as many decoys are added).
    #[arg(long, value_parser = positive)]
    pub p: usize,
    #[arg(long, value_parser = at_least_two)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (receives data.csv and truth.json).
    #[arg(long)]
    pub out: PathBuf,
    /// Redraw coefficients until their magnitude exceeds this value.
    #[arg(long)]
    pub beta_min_abs: Option<f64>,
    /// Bound on the linear predictor before exponentiation.
    #[arg(long, default_value_t = 10.0)]
    pub clip: f64,
    #[arg(long, default_value = "count")]
    pub target: String,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct ModelArgs {
    /// ldrt (regression tree) or ldrf (random forest).
    #[arg(long, default_value = "ldrf", value_parser = strategy)]
    pub strategy: String,
    /// Outer fold count.
    #[arg(long, default_value_t = 10, value_parser = at_least_two)]
    pub folds: usize,
    /// Threshold repetitions.
    #[arg(long = "n-r", default_value_t = 100, value_parser = at_least_two)]
    pub n_r: usize,
    /// Comma-separated candidate values for the tuned parameter.
    #[arg(long, value_delimiter = ',', value_parser = positive)]
    pub grid: Option<Vec<usize>>,
    /// Trees per forest when the tree count is not the tuned parameter.
    #[arg(long, default_value_t = 500, value_parser = positive)]
    pub ntree: usize,
    #[arg(long, default_value_t = 5, value_parser = positive)]
    pub min_node_size: usize,
    #[arg(long, value_parser = positive)]
    pub feature_subset_size: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (0 = all cores).
    #[arg(long, default_value_t = 0)]
    pub threads: usize,
    /// Recompute the threshold inside each outer fold.
    #[arg(long)]
    pub strict_vi_min: bool,
}

impl ModelArgs {
    fn config(&self, grouped: bool, refit: bool) -> Result<StrategyConfig> {
        Ok(StrategyConfig {
            strategy: self.strategy.parse()?,
            outer_folds: self.folds,
            grouped,
            n_r: self.n_r,
            candidate_grid: self.grid.clone(),
            seed: self.seed,
            refit_and_select: refit,
            strict_vi_min: self.strict_vi_min,
            defaults: ModelDefaults {
                ntree: self.ntree,
                min_node_size: self.min_node_size,
                feature_subset_size: self.feature_subset_size,
            },
        })
    }
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct SelectArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Sidecar `name=kind` file; kinds are inferred when absent.
    #[arg(long)]
    pub schema: Option<PathBuf>,
    #[arg(long)]
    pub target: String,
    /// Group column for leave-group-out outer folds.
    #[arg(long)]
    pub group: Option<String>,
    /// Also use the group column as a predictor.
    #[arg(long)]
    pub group_as_predictor: bool,
    /// Columns to drop (comma-separated).
    #[arg(long, value_delimiter = ',')]
    pub exclude: Vec<String>,
    /// truth.json from `simulate`, enabling SP/SA. Its column kinds serve
    /// as the schema when `--schema` is absent.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Refit on the selected variables, report its cross-validated
    /// predictions and save the model bundle.
    #[arg(long)]
    pub refit: bool,
    /// Add pairwise products of categorical predictors.
    #[arg(long)]
    pub interactions: bool,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct PredictArgs {
    /// Model bundle directory.
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct SweepArgs {
    /// Total variable counts (even), comma-separated.
    #[arg(long, value_delimiter = ',', required = true, value_parser = at_least_two)]
    pub totals: Vec<usize>,
    #[arg(long, value_parser = at_least_two)]
    pub n: usize,
    #[arg(long)]
    pub beta_min_abs: Option<f64>,
    #[arg(long, default_value_t = 10.0)]
    pub clip: f64,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
#[command(args_override_self = true)]
pub struct RecodeArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Numeric columns to recode (comma-separated).
    #[arg(long, value_delimiter = ',', required = true)]
    pub columns: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Parses arguments and runs the command, returning the exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match apply_config_overlay(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_ERROR;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli.command) {
        Ok(warnings) if warnings.is_empty() => EXIT_OK,
        Ok(warnings) => {
            for w in &warnings {
                eprintln!("warning: {w}");
            }
            EXIT_WARNINGS
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_ERROR
        }
    }
}

/// Expands `--config FILE` into flags placed right after the subcommand, so
/// flags given on the command line override the file.
pub fn apply_config_overlay(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    let mut i = 0;
    while i < args.len() {
        let a = args[i].to_string_lossy();
        if a == "--config" {
            path = args.get(i + 1).map(PathBuf::from);
            i += 1;
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
        i += 1;
    }
    let Some(path) = path else { return Ok(args) };
    let Some(sub_pos) = args.iter().position(|a| {
        let s = a.to_string_lossy();
        Cli::command().get_subcommands().any(|c| c.get_name() == s)
    }) else {
        return Ok(args);
    };
    let sub_name = args[sub_pos].to_string_lossy().to_string();
    let cmd = Cli::command();
    let sub = cmd.find_subcommand(&sub_name).expect("subcommand exists");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut extra: Vec<OsString> = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::invalid(format!("{}:{}: expected key=value", path.display(), ln + 1)))?;
        let key = k.trim().replace('_', "-");
        let value = v.trim();
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
            .ok_or_else(|| Error::invalid(format!("{}:{}: unknown setting `{}`", path.display(), ln + 1, k.trim())))?;
        if key == "config" {
            return Err(Error::invalid("config files cannot include other config files"));
        }
        match arg.get_action() {
            ArgAction::SetTrue => match value {
                "true" | "yes" | "1" => extra.push(format!("--{key}").into()),
                "false" | "no" | "0" => {}
                _ => return Err(Error::invalid(format!("{}:{}: `{key}` expects true or false", path.display(), ln + 1))),
            },
            _ => extra.push(format!("--{key}={value}").into()),
        }
    }
    let mut out = args[..=sub_pos].to_vec();
    out.extend(extra);
    out.extend_from_slice(&args[sub_pos + 1..]);
    Ok(out)
}

fn execute(cmd: Command) -> Result<Vec<String>> {
    match cmd {
        Command::Simulate(a) => cmd_simulate(&a),
        Command::Select(a) => cmd_select(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Sweep(a) => cmd_sweep(&a),
        Command::RecodeQuartiles(a) => cmd_recode_quartiles(&a),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn digest(path: &Path) -> Result<String> {
    fs::read(path).map(|b| bundle::sha256_hex(&b)).map_err(|e| Error::io(path, e))
}

fn sim_spec(p: usize, n: usize, seed: u64, clip: f64, beta_min_abs: Option<f64>) -> SimSpec {
    SimSpec {
        linear_clip: clip,
        beta: beta_min_abs.map_or(BetaDraw::Normal, |m| BetaDraw::NormalAbove { min_abs: m }),
        ..SimSpec::new(p, n, seed)
    }
}

pub fn cmd_simulate(a: &SimulateArgs) -> Result<Vec<String>> {
    let spec = sim_spec(a.p, a.n, a.seed, a.clip, a.beta_min_abs);
    let sim = simgen::simulate(&spec)?;
    create_dir(&a.out)?;
    write_csv(&sim.dataset, &a.out.join("data.csv"), &a.target, None)?;
    simgen::write_truth(&sim.truth(&spec), &a.out.join("truth.json"))?;
    Ok(Vec::new())
}

#[derive(Serialize)]
struct InputDigest {
    role: &'static str,
    sha256: String,
}

#[derive(Serialize)]
struct Provenance<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'static str,
    seed: u64,
    threads: usize,
    target: &'a str,
    group: Option<&'a str>,
    group_as_predictor: bool,
    exclude: &'a [String],
    interactions: bool,
    refit: bool,
    settings: &'a StrategyConfig,
    inputs: Vec<InputDigest>,
    columns: &'a IngestReport,
}

#[derive(Serialize)]
struct ReportFile<'a> {
    provenance: Provenance<'a>,
    #[serde(flatten)]
    report: &'a SelectionReport,
}

pub fn cmd_select(a: &SelectArgs) -> Result<Vec<String>> {
    par::set_threads(a.model.threads)?;
    let config = a.model.config(a.group.is_some(), a.refit)?;
    let truth = a.truth.as_deref().map(simgen::read_truth).transpose()?;
    let schema = match (&a.schema, &truth) {
        (Some(path), _) => Some(Schema::load(path)?),
        (None, Some(t)) => Some(t.schema()),
        (None, None) => None,
    };
    let opts = IngestOptions {
        target: a.target.clone(),
        group: a.group.clone(),
        group_as_predictor: a.group_as_predictor,
        exclude: a.exclude.clone(),
    };
    let (mut data, ingest) = ingest_csv(&a.data, schema.as_ref(), &opts)?;
    let mut warnings = Vec::new();
    if a.interactions {
        let (frame, skipped) = data.frame().with_categorical_interactions();
        for s in skipped {
            warnings.push(format!("interaction `{s}` skipped: too many levels"));
        }
        data = data.with_frame(frame)?;
    }
    let mut inputs = vec![InputDigest {
        role: "data",
        sha256: digest(&a.data)?,
    }];
    if let Some(s) = &a.schema {
        inputs.push(InputDigest {
            role: "schema",
            sha256: digest(s)?,
        });
    }
    if let (Some(path), Some(truth)) = (&a.truth, &truth) {
        inputs.push(InputDigest {
            role: "truth",
            sha256: digest(path)?,
        });
        let mask = data.names().iter().map(|n| truth.true_variables.contains(n)).collect();
        data = data.with_truth_mask(mask)?;
    }

    let out = pipeline::run_lolo_dcv_with(&data, &config, &NoAudit)?;
    let report = &out.report;
    warnings.extend(report.warnings.iter().cloned());

    create_dir(&a.out)?;
    let file = ReportFile {
        provenance: Provenance {
            tool: "rfselect",
            version: env!("CARGO_PKG_VERSION"),
            command: "select",
            seed: a.model.seed,
            threads: a.model.threads,
            target: &a.target,
            group: a.group.as_deref(),
            group_as_predictor: a.group_as_predictor,
            exclude: &a.exclude,
            interactions: a.interactions,
            refit: a.refit,
            settings: &config,
            inputs,
            columns: &ingest,
        },
        report,
    };
    let mut json = serde_json::to_string_pretty(&file)?;
    json.push('\n');
    write(&a.out.join("report.json"), &json)?;
    write(&a.out.join("importance.csv"), &report.importance_csv())?;
    write(&a.out.join("summary.txt"), &report.summary())?;
    write(&a.out.join("predictions.csv"), &predictions_csv(report, &data))?;
    if let Some(fm) = out.final_model {
        let b = Bundle::new(fm.model, fm.columns, fm.chosen_m, config.seed)?;
        b.save(&a.out.join("model"))?;
    }
    print!("{}", report.summary());
    Ok(warnings)
}

struct NoAudit;
impl pipeline::Observer for NoAudit {}

fn predictions_csv(report: &SelectionReport, data: &crate::data::Dataset) -> String {
    let mut fold_of = vec![usize::MAX; data.n_rows()];
    for f in &report.per_fold {
        for &r in &f.test_rows {
            fold_of[r] = f.fold;
        }
    }
    let mut s = String::from("row_id,fold,observed,predicted");
    if report.refit.is_some() {
        s.push_str(",refit_predicted");
    }
    s.push('\n');
    for (i, p) in report.predictions.iter().enumerate() {
        let pred = p.map(|v| v.to_string()).unwrap_or_default();
        s.push_str(&format!("{},{},{},{}", i + 1, fold_of[i], data.target()[i], pred));
        if let Some(r) = &report.refit {
            s.push_str(&format!(",{}", r.predictions[i]));
        }
        s.push('\n');
    }
    s
}

pub fn cmd_predict(a: &PredictArgs) -> Result<Vec<String>> {
    let b = Bundle::load(&a.model)?;
    let preds = b.predict_csv(&a.data)?;
    let mut s = String::from("row_id,prediction\n");
    for (i, p) in preds.iter().enumerate() {
        s.push_str(&format!("{},{}\n", i + 1, p));
    }
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    write(&a.out, &s)?;
    Ok(Vec::new())
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<Vec<String>> {
    par::set_threads(a.model.threads)?;
    let config = a.model.config(false, false)?;
    let base = sim_spec(1, a.n, a.model.seed, a.clip, a.beta_min_abs);
    let rows = simgen::sweep_variable_counts(&base, &a.totals, &config)?;
    if let Some(parent) = a.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        create_dir(parent)?;
    }
    let csv = simgen::sweep_csv(&rows);
    write(&a.out, &csv)?;
    print!("{csv}");
    Ok(Vec::new())
}

pub fn cmd_recode_quartiles(a: &RecodeArgs) -> Result<Vec<String>> {
    let table = RawTable::read(&a.data)?;
    let r = recode::recode_quartiles(&table, &a.columns)?;
    write(&a.out, &r.to_csv()?)?;
    Ok(r.warnings)
}
