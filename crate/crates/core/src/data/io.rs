use serde::{Deserialize, Serialize};
use std::collections::HashSet;
use std::path::Path;

use super::{Column, ColumnKind, ColumnSpec, Dataset, Frame, KindSource, Schema, SchemaKind};
use crate::error::{Error, Result};

/// Integer-valued columns with at most this many distinct values are inferred
/// as categorical when no schema sidecar is given.
const INFER_MAX_CATEGORICAL: usize = 10;

/// Header plus string cells, rows in file order.
#[derive(Clone, Debug)]
pub struct RawTable {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl RawTable {
    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(file)
    }

    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
        if headers.is_empty() || headers.iter().all(String::is_empty) {
            return Err(Error::Empty("CSV has no header".into()));
        }
        let rows = rdr
            .records()
            .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
            .collect::<std::result::Result<Vec<Vec<String>>, _>>()?;
        if rows.is_empty() {
            return Err(Error::Empty("CSV has no data rows".into()));
        }
        Ok(RawTable { headers, rows })
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    fn cells(&self, j: usize) -> impl Iterator<Item = &str> {
        self.rows.iter().map(move |r| r[j].as_str())
    }

    fn parse_column(&self, j: usize, kind: ColumnKind) -> Result<Column> {
        let name = &self.headers[j];
        for (i, cell) in self.cells(j).enumerate() {
            if cell.is_empty() || cell.eq_ignore_ascii_case("na") {
                return Err(Error::BadValue {
                    row: i + 1,
                    column: name.clone(),
                    message: "missing value".into(),
                });
            }
        }
        if kind.is_categorical() {
            let labels: Vec<&str> = self.cells(j).collect();
            return Column::categorical_from_labels(name.clone(), &labels);
        }
        let values = self
            .cells(j)
            .enumerate()
            .map(|(i, cell)| {
                cell.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::BadValue {
                    row: i + 1,
                    column: name.clone(),
                    message: format!("non-numeric token `{cell}` in {} column", kind.as_str()),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        Column::numeric(name.clone(), kind, values)
    }

    fn infer_kind(&self, j: usize) -> ColumnKind {
        let mut distinct = HashSet::new();
        let mut all_int = true;
        for cell in self.cells(j) {
            match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => {
                    all_int &= v.fract() == 0.0;
                    distinct.insert(v.to_bits());
                }
                _ => return ColumnKind::Categorical,
            }
        }
        match (all_int, distinct.len() <= INFER_MAX_CATEGORICAL) {
            (true, true) => ColumnKind::Categorical,
            (true, false) => ColumnKind::Discrete,
            _ => ColumnKind::Continuous,
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct IngestOptions {
    pub target: String,
    pub group: Option<String>,
    /// Keep the group column among the predictors as well.
    pub group_as_predictor: bool,
    pub exclude: Vec<String>,
}

impl IngestOptions {
    pub fn new(target: impl Into<String>) -> Self {
        IngestOptions {
            target: target.into(),
            ..Default::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestedColumn {
    pub name: String,
    pub kind: ColumnKind,
    pub source: KindSource,
}

/// How each predictor's kind was decided, for the run report.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub columns: Vec<IngestedColumn>,
    pub excluded: Vec<String>,
}

/// Reads a dataset from CSV. Kinds come from `schema` when given, otherwise
/// they are inferred.
pub fn ingest_csv(path: &Path, schema: Option<&Schema>, opts: &IngestOptions) -> Result<(Dataset, IngestReport)> {
    let table = RawTable::read(path)?;
    ingest_table(&table, schema, opts)
}

pub(crate) fn ingest_table(table: &RawTable, schema: Option<&Schema>, opts: &IngestOptions) -> Result<(Dataset, IngestReport)> {
    let target_j = table
        .column_index(&opts.target)
        .ok_or_else(|| Error::MissingColumn(opts.target.clone()))?;
    let group_j = match &opts.group {
        Some(g) => Some(table.column_index(g).ok_or_else(|| Error::MissingColumn(g.clone()))?),
        None => None,
    };
    if let Some(schema) = schema {
        for (name, _) in &schema.entries {
            if table.column_index(name).is_none() {
                return Err(Error::MissingColumn(name.clone()));
            }
        }
    }

    let target = table
        .cells(target_j)
        .enumerate()
        .map(|(i, cell)| match cell.parse::<f64>() {
            Ok(v) if v.is_finite() && v >= 0.0 && v.fract() == 0.0 => Ok(v),
            _ => Err(Error::BadValue {
                row: i + 1,
                column: opts.target.clone(),
                message: format!("target must be a non-negative integer count, got `{cell}`"),
            }),
        })
        .collect::<Result<Vec<f64>>>()?;

    let mut report = IngestReport::default();
    let mut columns = Vec::new();
    for (j, name) in table.headers.iter().enumerate() {
        if j == target_j || (Some(j) == group_j && !opts.group_as_predictor) {
            continue;
        }
        if opts.exclude.iter().any(|e| e == name) {
            report.excluded.push(name.clone());
            continue;
        }
        let (kind, source) = match schema {
            Some(s) => match s.get(name) {
                Some(SchemaKind::Column(k)) => (k, KindSource::Declared),
                Some(SchemaKind::Ignore) => {
                    report.excluded.push(name.clone());
                    continue;
                }
                None => return Err(Error::Schema(format!("column `{name}` is not declared in the schema"))),
            },
            None => (table.infer_kind(j), KindSource::Inferred),
        };
        columns.push(table.parse_column(j, kind)?);
        report.columns.push(IngestedColumn {
            name: name.clone(),
            kind,
            source,
        });
    }

    let frame = Frame::new(columns, table.rows.len())?;
    let mut data = Dataset::new(frame, target)?;
    if let Some(g) = group_j {
        data = data.with_group(table.cells(g).map(str::to_string).collect())?;
    }
    Ok((data, report))
}

/// Reads a predictor-only CSV and conforms it to a training schema. Columns
/// not named in `specs` are ignored.
pub fn read_features_csv(path: &Path, specs: &[ColumnSpec]) -> Result<Frame> {
    let table = RawTable::read(path)?;
    let columns = specs
        .iter()
        .map(|s| {
            let j = table.column_index(&s.name).ok_or_else(|| Error::MissingColumn(s.name.clone()))?;
            table.parse_column(j, s.kind)?.conform(s)
        })
        .collect::<Result<Vec<_>>>()?;
    Frame::new(columns, table.rows.len())
}

/// Writes predictors, then the target, then the group column (if any).
pub fn write_csv(data: &Dataset, path: &Path, target_name: &str, group_name: Option<&str>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = data.names();
    header.push(target_name.to_string());
    let group = match (data.group(), group_name) {
        (Some(g), Some(name)) => {
            header.push(name.to_string());
            Some(g)
        }
        _ => None,
    };
    w.write_record(&header)?;
    let frame = data.frame();
    for i in 0..data.n_rows() {
        let mut rec: Vec<String> = frame.columns().iter().map(|c| c.render(i)).collect();
        rec.push(format!("{}", data.target()[i]));
        if let Some(g) = group {
            rec.push(g[i].clone());
        }
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
