//! Estimation data: outcome vector plus a design matrix whose column 0 is
//! the intercept. All file I/O for the crate lives here.

use crate::error::{Error, Result};
use nalgebra::DMatrix;
use std::io::{Read, Write};
use std::path::Path;

pub const INTERCEPT_NAME: &str = "(intercept)";

/// Outcome `y`, design `x` (n x d, column 0 identically 1) and the index of
/// the target covariate whose partial effect is estimated.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    x: DMatrix<f64>,
    target_index: usize,
    column_names: Vec<String>,
    outcome_name: String,
}

impl Dataset {
    /// Validates every invariant: n >= d + 1, finite entries, unit
    /// intercept column, target not the intercept.
    pub fn new(
        y: Vec<f64>,
        x: DMatrix<f64>,
        target_index: usize,
        column_names: Vec<String>,
        outcome_name: impl Into<String>,
    ) -> Result<Self> {
        let (n, d) = x.shape();
        if y.len() != n {
            return Err(Error::InvalidDataset(format!(
                "outcome has {} rows, design has {n}",
                y.len()
            )));
        }
        if d < 2 {
            return Err(Error::InvalidDataset(
                "design needs an intercept and at least one covariate".into(),
            ));
        }
        if n < d + 1 {
            return Err(Error::InvalidDataset(format!(
                "need at least d + 1 = {} observations, got {n}",
                d + 1
            )));
        }
        if column_names.len() != d {
            return Err(Error::InvalidDataset(format!(
                "{} column names for {d} columns",
                column_names.len()
            )));
        }
        if target_index == 0 || target_index >= d {
            return Err(Error::InvalidDataset(format!(
                "target index {target_index} must be in 1..{d}"
            )));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset(format!("outcome row {i} is not finite")));
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidDataset("design contains non-finite values".into()));
        }
        if x.column(0).iter().any(|&v| v != 1.0) {
            return Err(Error::InvalidDataset("column 0 must be identically 1".into()));
        }
        Ok(Dataset {
            y,
            x,
            target_index,
            column_names,
            outcome_name: outcome_name.into(),
        })
    }

    /// Builds the design `[intercept, controls..., target]`.
    pub fn from_columns(
        outcome: (&str, Vec<f64>),
        target: (&str, Vec<f64>),
        controls: Vec<(&str, Vec<f64>)>,
    ) -> Result<Self> {
        let n = outcome.1.len();
        let d = controls.len() + 2;
        let mut names = Vec::with_capacity(d);
        names.push(INTERCEPT_NAME.to_string());
        let mut columns: Vec<Vec<f64>> = Vec::with_capacity(d);
        columns.push(vec![1.0; n]);
        for (name, col) in controls {
            names.push(name.to_string());
            columns.push(col);
        }
        names.push(target.0.to_string());
        columns.push(target.1);
        if let Some(c) = columns.iter().position(|c| c.len() != n) {
            return Err(Error::InvalidDataset(format!(
                "column `{}` has {} rows, outcome has {n}",
                names[c],
                columns[c].len()
            )));
        }
        let x = DMatrix::from_fn(n, d, |i, j| columns[j][i]);
        Dataset::new(outcome.1, x, d - 1, names, outcome.0)
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn x(&self) -> &DMatrix<f64> {
        &self.x
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn target_index(&self) -> usize {
        self.target_index
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn outcome_name(&self) -> &str {
        &self.outcome_name
    }

    pub fn target_name(&self) -> &str {
        &self.column_names[self.target_index]
    }

    /// Values of the target covariate.
    pub fn target(&self) -> &[f64] {
        self.column(self.target_index)
    }

    pub fn column(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.x.as_slice()[j * n..(j + 1) * n]
    }

    /// Row `i` of the design, copied into `buf`.
    pub fn row_into(&self, i: usize, buf: &mut [f64]) {
        for (j, b) in buf.iter_mut().enumerate() {
            *b = self.x[(i, j)];
        }
    }

    /// Rows selected by `indices` (repetition allowed), pairs kept intact.
    pub fn resample(&self, indices: &[usize]) -> Dataset {
        let y = indices.iter().map(|&i| self.y[i]).collect();
        let x = DMatrix::from_fn(indices.len(), self.d(), |r, j| self.x[(indices[r], j)]);
        Dataset {
            y,
            x,
            target_index: self.target_index,
            column_names: self.column_names.clone(),
            outcome_name: self.outcome_name.clone(),
        }
    }

    /// Same design with a different outcome vector.
    pub fn with_outcome(&self, y: Vec<f64>) -> Result<Dataset> {
        Dataset::new(
            y,
            self.x.clone(),
            self.target_index,
            self.column_names.clone(),
            self.outcome_name.clone(),
        )
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct LoadOptions {
    /// Skip rows with a missing value in a selected column instead of failing.
    pub drop_na: bool,
}

fn is_missing(token: &str) -> bool {
    matches!(
        token.to_ascii_lowercase().as_str(),
        "" | "na" | "n/a" | "nan" | "null" | "."
    )
}

pub fn load_csv(
    path: impl AsRef<Path>,
    outcome: &str,
    target: &str,
    controls: &[String],
    opts: LoadOptions,
) -> Result<Dataset> {
    let file = std::fs::File::open(path.as_ref())?;
    read_csv(file, outcome, target, controls, opts)
}

pub fn read_csv<R: Read>(
    reader: R,
    outcome: &str,
    target: &str,
    controls: &[String],
    opts: LoadOptions,
) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(Error::EmptyFile);
    }
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };
    let mut selected: Vec<(String, usize)> = Vec::with_capacity(controls.len() + 2);
    selected.push((outcome.to_string(), find(outcome)?));
    for c in controls {
        selected.push((c.clone(), find(c)?));
    }
    selected.push((target.to_string(), find(target)?));

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); selected.len()];
    let mut dropped = 0usize;
    let mut values = vec![0.0; selected.len()];
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let row = r + 1;
        let mut missing = None;
        for (k, (name, idx)) in selected.iter().enumerate() {
            let token = record.get(*idx).unwrap_or("");
            if is_missing(token) {
                missing = Some(name);
                break;
            }
            match token.parse::<f64>() {
                Ok(v) if v.is_finite() => values[k] = v,
                _ => {
                    return Err(Error::NonNumericCell {
                        row,
                        column: name.clone(),
                        value: token.to_string(),
                    })
                }
            }
        }
        if let Some(column) = missing {
            if opts.drop_na {
                dropped += 1;
                continue;
            }
            return Err(Error::RowWithMissingValue {
                row,
                column: column.clone(),
            });
        }
        for (col, &v) in columns.iter_mut().zip(&values) {
            col.push(v);
        }
    }
    if dropped > 0 {
        log::warn!("dropped {dropped} rows with missing values");
    }
    if columns[0].is_empty() {
        return Err(Error::EmptyFile);
    }

    let mut columns = columns.into_iter();
    let y = columns.next().expect("outcome column");
    let mut rest: Vec<Vec<f64>> = columns.collect();
    let target_col = rest.pop().expect("target column");
    let controls = controls.iter().map(String::as_str).zip(rest).collect();
    Dataset::from_columns((outcome, y), (target, target_col), controls)
}

/// Writes outcome and non-intercept columns; floats use the shortest
/// representation that parses back to the same value.
pub fn write_csv<W: Write>(data: &Dataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![data.outcome_name().to_string()];
    header.extend(data.column_names()[1..].iter().cloned());
    w.write_record(&header)?;
    let mut row = Vec::with_capacity(data.d());
    for i in 0..data.n() {
        row.clear();
        row.push(data.y[i].to_string());
        for j in 1..data.d() {
            row.push(data.x[(i, j)].to_string());
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
