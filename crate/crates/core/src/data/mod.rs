//! Typed tabular data: predictor columns, a count target, optional group
//! labels and (for simulated data) a truth mask.

mod folds;
mod io;
mod schema;

pub use folds::{make_folds, split_by_fold, FoldPlan};
pub use io::{ingest_csv, read_features_csv, write_csv, IngestOptions, IngestReport, IngestedColumn, RawTable};
pub use schema::{ColumnSpec, KindSource, Schema, SchemaKind};

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::error::{Error, Result};

/// Largest number of levels a categorical predictor may carry.
pub const MAX_LEVELS: usize = 41;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnKind {
    Continuous,
    Discrete,
    Categorical,
}

impl ColumnKind {
    pub fn is_categorical(self) -> bool {
        matches!(self, ColumnKind::Categorical)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ColumnKind::Continuous => "continuous",
            ColumnKind::Discrete => "discrete",
            ColumnKind::Categorical => "categorical",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum ColumnData {
    Numeric(Vec<f64>),
    /// Level indices into `levels`. Indices `>= levels.len()` are allowed only
    /// in frames conformed to a training schema (levels unseen in training).
    Categorical { codes: Vec<u32>, levels: Vec<String> },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Column {
    name: String,
    kind: ColumnKind,
    data: ColumnData,
}

impl Column {
    pub fn numeric(name: impl Into<String>, kind: ColumnKind, values: Vec<f64>) -> Result<Self> {
        let name = name.into();
        if kind.is_categorical() {
            return Err(Error::Schema(format!("column `{name}`: numeric data with categorical kind")));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::BadValue {
                row: i + 1,
                column: name,
                message: "non-finite value".into(),
            });
        }
        Ok(Column {
            name,
            kind,
            data: ColumnData::Numeric(values),
        })
    }

    pub fn categorical(name: impl Into<String>, codes: Vec<u32>, levels: Vec<String>) -> Result<Self> {
        let name = name.into();
        if levels.len() > MAX_LEVELS {
            return Err(Error::Schema(format!(
                "column `{name}` has {} levels (maximum {MAX_LEVELS})",
                levels.len()
            )));
        }
        if let Some(i) = codes.iter().position(|&c| c as usize >= levels.len()) {
            return Err(Error::BadValue {
                row: i + 1,
                column: name,
                message: format!("level index {} out of range", codes[i]),
            });
        }
        Ok(Column {
            name,
            kind: ColumnKind::Categorical,
            data: ColumnData::Categorical { codes, levels },
        })
    }

    /// Dictionary-encodes labels in order of first appearance.
    pub fn categorical_from_labels<S: AsRef<str>>(name: impl Into<String>, labels: &[S]) -> Result<Self> {
        let mut index: HashMap<&str, u32> = HashMap::new();
        let mut levels = Vec::new();
        let codes = labels
            .iter()
            .map(|l| {
                let l = l.as_ref();
                *index.entry(l).or_insert_with(|| {
                    levels.push(l.to_string());
                    (levels.len() - 1) as u32
                })
            })
            .collect();
        Column::categorical(name, codes, levels)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> ColumnKind {
        self.kind
    }

    pub fn data(&self) -> &ColumnData {
        &self.data
    }

    pub fn len(&self) -> usize {
        match &self.data {
            ColumnData::Numeric(v) => v.len(),
            ColumnData::Categorical { codes, .. } => codes.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_numeric(&self) -> Option<&[f64]> {
        match &self.data {
            ColumnData::Numeric(v) => Some(v),
            ColumnData::Categorical { .. } => None,
        }
    }

    pub fn levels(&self) -> Option<&[String]> {
        match &self.data {
            ColumnData::Categorical { levels, .. } => Some(levels),
            ColumnData::Numeric(_) => None,
        }
    }

    pub fn codes(&self) -> Option<&[u32]> {
        match &self.data {
            ColumnData::Categorical { codes, .. } => Some(codes),
            ColumnData::Numeric(_) => None,
        }
    }

    /// Text rendering of row `i`, as written to CSV.
    pub fn render(&self, i: usize) -> String {
        match &self.data {
            ColumnData::Numeric(v) => format!("{}", v[i]),
            ColumnData::Categorical { codes, levels } => levels
                .get(codes[i] as usize)
                .cloned()
                .unwrap_or_else(|| format!("<unseen:{}>", codes[i])),
        }
    }

    pub fn take(&self, rows: &[usize]) -> Column {
        let data = match &self.data {
            ColumnData::Numeric(v) => ColumnData::Numeric(rows.iter().map(|&r| v[r]).collect()),
            ColumnData::Categorical { codes, levels } => ColumnData::Categorical {
                codes: rows.iter().map(|&r| codes[r]).collect(),
                levels: levels.clone(),
            },
        };
        Column {
            name: self.name.clone(),
            kind: self.kind,
            data,
        }
    }

    pub fn spec(&self) -> ColumnSpec {
        ColumnSpec {
            name: self.name.clone(),
            kind: self.kind,
            levels: self.levels().map(<[String]>::to_vec),
        }
    }

    /// Re-encodes this column against a training column spec. Categorical
    /// labels absent from the training levels receive fresh indices past the
    /// end of the training dictionary.
    pub fn conform(&self, spec: &ColumnSpec) -> Result<Column> {
        match (&self.data, spec.kind) {
            (ColumnData::Numeric(v), k) if !k.is_categorical() => Column::numeric(&self.name, k, v.clone()),
            (ColumnData::Categorical { codes, levels }, ColumnKind::Categorical) => {
                let train_levels = spec.levels.clone().unwrap_or_default();
                let mut map: HashMap<&str, u32> =
                    train_levels.iter().enumerate().map(|(i, l)| (l.as_str(), i as u32)).collect();
                let mut next = train_levels.len() as u32;
                let remap: Vec<u32> = levels
                    .iter()
                    .map(|l| {
                        *map.entry(l.as_str()).or_insert_with(|| {
                            next += 1;
                            next - 1
                        })
                    })
                    .collect();
                Ok(Column {
                    name: self.name.clone(),
                    kind: ColumnKind::Categorical,
                    data: ColumnData::Categorical {
                        codes: codes.iter().map(|&c| remap[c as usize]).collect(),
                        levels: train_levels,
                    },
                })
            }
            _ => Err(Error::Schema(format!(
                "column `{}` is {} but the model expects {}",
                self.name,
                self.kind.as_str(),
                spec.kind.as_str()
            ))),
        }
    }
}

/// A predictor table: equal-length columns over `n_rows` rows. A frame may
/// have zero columns (a constant model still needs a row count).
#[derive(Clone, Debug, PartialEq)]
pub struct Frame {
    columns: Vec<Column>,
    n_rows: usize,
}

impl Frame {
    pub fn new(columns: Vec<Column>, n_rows: usize) -> Result<Self> {
        for c in &columns {
            if c.len() != n_rows {
                return Err(Error::Schema(format!(
                    "column `{}` has {} rows, expected {n_rows}",
                    c.name,
                    c.len()
                )));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column `{}`", c.name)));
            }
        }
        Ok(Frame { columns, n_rows })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn columns(&self) -> &[Column] {
        &self.columns
    }

    pub fn column(&self, j: usize) -> &Column {
        &self.columns[j]
    }

    pub fn names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn kinds(&self) -> Vec<ColumnKind> {
        self.columns.iter().map(|c| c.kind).collect()
    }

    pub fn specs(&self) -> Vec<ColumnSpec> {
        self.columns.iter().map(Column::spec).collect()
    }

    pub fn take_rows(&self, rows: &[usize]) -> Frame {
        Frame {
            columns: self.columns.iter().map(|c| c.take(rows)).collect(),
            n_rows: rows.len(),
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Frame {
        Frame {
            columns: cols.iter().map(|&j| self.columns[j].clone()).collect(),
            n_rows: self.n_rows,
        }
    }

    /// Reorders and re-encodes columns to match a training schema, by name.
    /// Extra columns are dropped; a missing column is an error naming it.
    pub fn conform_to(&self, specs: &[ColumnSpec]) -> Result<Frame> {
        let columns = specs
            .iter()
            .map(|s| {
                let j = self.index_of(&s.name).ok_or_else(|| Error::MissingColumn(s.name.clone()))?;
                self.columns[j].conform(s)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Frame {
            columns,
            n_rows: self.n_rows,
        })
    }

    /// Appends one categorical column per pair of categorical predictors,
    /// labelled by the level combination. Pairs whose observed combinations
    /// exceed [`MAX_LEVELS`] are skipped and returned by name.
    pub fn with_categorical_interactions(&self) -> (Frame, Vec<String>) {
        let cats: Vec<usize> = (0..self.n_cols()).filter(|&j| self.columns[j].kind.is_categorical()).collect();
        let mut columns = self.columns.clone();
        let mut skipped = Vec::new();
        for (a_pos, &a) in cats.iter().enumerate() {
            for &b in &cats[a_pos + 1..] {
                let (ca, cb) = (&self.columns[a], &self.columns[b]);
                let name = format!("{}:{}", ca.name, cb.name);
                let labels: Vec<String> = (0..self.n_rows).map(|i| format!("{}:{}", ca.render(i), cb.render(i))).collect();
                match Column::categorical_from_labels(name.clone(), &labels) {
                    Ok(c) => columns.push(c),
                    Err(_) => skipped.push(name),
                }
            }
        }
        (
            Frame {
                columns,
                n_rows: self.n_rows,
            },
            skipped,
        )
    }
}

/// A predictor frame with a non-negative integer count target.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    frame: Frame,
    target: Vec<f64>,
    group: Option<Vec<String>>,
    truth_mask: Option<Vec<bool>>,
    row_ids: Vec<usize>,
}

impl Dataset {
    pub fn new(frame: Frame, target: Vec<f64>) -> Result<Self> {
        if frame.n_rows() == 0 {
            return Err(Error::Empty("dataset has no rows".into()));
        }
        if target.len() != frame.n_rows() {
            return Err(Error::Schema(format!(
                "target has {} values but columns have {}",
                target.len(),
                frame.n_rows()
            )));
        }
        if let Some(i) = target.iter().position(|&y| !(y.is_finite() && y >= 0.0 && y.fract() == 0.0)) {
            return Err(Error::BadValue {
                row: i + 1,
                column: "<target>".into(),
                message: format!("target must be a non-negative integer, got {}", target[i]),
            });
        }
        let n = frame.n_rows();
        Ok(Dataset {
            frame,
            target,
            group: None,
            truth_mask: None,
            row_ids: (0..n).collect(),
        })
    }

    pub fn with_group(mut self, group: Vec<String>) -> Result<Self> {
        if group.len() != self.n_rows() {
            return Err(Error::Schema(format!(
                "group has {} labels but dataset has {} rows",
                group.len(),
                self.n_rows()
            )));
        }
        self.group = Some(group);
        Ok(self)
    }

    pub fn with_truth_mask(mut self, mask: Vec<bool>) -> Result<Self> {
        if mask.len() != self.frame.n_cols() {
            return Err(Error::Schema(format!(
                "truth mask has {} entries but dataset has {} columns",
                mask.len(),
                self.frame.n_cols()
            )));
        }
        self.truth_mask = Some(mask);
        Ok(self)
    }

    pub fn frame(&self) -> &Frame {
        &self.frame
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn group(&self) -> Option<&[String]> {
        self.group.as_deref()
    }

    pub fn truth_mask(&self) -> Option<&[bool]> {
        self.truth_mask.as_deref()
    }

    /// Row indices into the dataset this one was derived from (identity for
    /// freshly built datasets). Used to audit train/test separation.
    pub fn row_ids(&self) -> &[usize] {
        &self.row_ids
    }

    pub fn n_rows(&self) -> usize {
        self.frame.n_rows()
    }

    pub fn n_cols(&self) -> usize {
        self.frame.n_cols()
    }

    pub fn names(&self) -> Vec<String> {
        self.frame.names()
    }

    /// Names of the columns flagged true in the truth mask.
    pub fn true_variables(&self) -> Option<Vec<String>> {
        self.truth_mask.as_ref().map(|m| {
            self.frame
                .columns()
                .iter()
                .zip(m)
                .filter(|(_, &t)| t)
                .map(|(c, _)| c.name().to_string())
                .collect()
        })
    }

    pub fn take_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            frame: self.frame.take_rows(rows),
            target: rows.iter().map(|&r| self.target[r]).collect(),
            group: self.group.as_ref().map(|g| rows.iter().map(|&r| g[r].clone()).collect()),
            truth_mask: self.truth_mask.clone(),
            row_ids: rows.iter().map(|&r| self.row_ids[r]).collect(),
        }
    }

    pub fn select_columns(&self, cols: &[usize]) -> Dataset {
        Dataset {
            frame: self.frame.select_columns(cols),
            target: self.target.clone(),
            group: self.group.clone(),
            truth_mask: self.truth_mask.as_ref().map(|m| cols.iter().map(|&j| m[j]).collect()),
            row_ids: self.row_ids.clone(),
        }
    }

    pub fn with_frame(&self, frame: Frame) -> Result<Dataset> {
        if frame.n_rows() != self.n_rows() {
            return Err(Error::Schema("replacement frame has a different row count".into()));
        }
        let truth_mask = match &self.truth_mask {
            Some(m) if frame.n_cols() >= m.len() => {
                let mut m = m.clone();
                m.resize(frame.n_cols(), false);
                Some(m)
            }
            _ => None,
        };
        Ok(Dataset {
            frame,
            target: self.target.clone(),
            group: self.group.clone(),
            truth_mask,
            row_ids: self.row_ids.clone(),
        })
    }
}
