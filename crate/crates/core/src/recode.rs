//! Quartile recoding of numeric columns into classes `Q1..Q4`.

use std::fmt::Write as _;

use crate::data::RawTable;
use crate::error::{Error, Result};

/// Sample quantile with linear interpolation between order statistics
/// (R's default, type 7). `sorted` must be ascending and non-empty.
pub fn quantile(sorted: &[f64], prob: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * prob;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// The three inner quartile boundaries of `values`.
pub fn quartile_boundaries(values: &[f64]) -> [f64; 3] {
    let mut s = values.to_vec();
    s.sort_by(f64::total_cmp);
    [quantile(&s, 0.25), quantile(&s, 0.5), quantile(&s, 0.75)]
}

/// Class index 0..4; a value equal to a boundary falls in the lower class.
pub fn quartile_class(v: f64, b: &[f64; 3]) -> usize {
    b.iter().position(|&q| v <= q).unwrap_or(3)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RecodedColumn {
    pub name: String,
    pub boundaries: [f64; 3],
    pub classes: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct Recoded {
    pub table: RawTable,
    pub columns: Vec<RecodedColumn>,
    pub warnings: Vec<String>,
}

/// Replaces each named column by its quartile class label.
pub fn recode_quartiles(table: &RawTable, names: &[String]) -> Result<Recoded> {
    let mut out = table.clone();
    let mut columns = Vec::new();
    let mut warnings = Vec::new();
    for name in names {
        let j = table.column_index(name).ok_or_else(|| Error::MissingColumn(name.clone()))?;
        let values = table
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r[j].parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| Error::BadValue {
                    row: i + 1,
                    column: name.clone(),
                    message: format!("non-numeric token `{}`; only numeric columns can be recoded", r[j]),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        let b = quartile_boundaries(&values);
        let classes: Vec<usize> = values.iter().map(|&v| quartile_class(v, &b)).collect();
        if classes.iter().all(|&c| c == classes[0]) {
            warnings.push(format!("column `{name}` is constant; every row falls in Q{}", classes[0] + 1));
        }
        for (r, c) in out.rows.iter_mut().zip(&classes) {
            r[j] = format!("Q{}", c + 1);
        }
        columns.push(RecodedColumn {
            name: name.clone(),
            boundaries: b,
            classes,
        });
    }
    Ok(Recoded { table: out, columns, warnings })
}

impl Recoded {
    /// CSV text with one leading `#` comment line per recoded column giving
    /// its boundaries.
    pub fn to_csv(&self) -> Result<String> {
        let mut s = String::new();
        for c in &self.columns {
            let [a, b, d] = c.boundaries;
            let _ = writeln!(s, "# {}: Q1 <= {a} < Q2 <= {b} < Q3 <= {d} < Q4", c.name);
        }
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.table.headers)?;
        for r in &self.table.rows {
            w.write_record(r)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
        s.push_str(&String::from_utf8(bytes).map_err(|e| Error::invalid(e.to_string()))?);
        Ok(s)
    }
}
