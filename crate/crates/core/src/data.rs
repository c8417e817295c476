//! Tabular ingest: delimited text parsing, alphabetical ordinal encoding,
//! seeded train/test splitting and min-max feature scaling.

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed::rng_for;

/// Default regression target for the student-performance files.
pub const DEFAULT_TARGET: &str = "G3";

#[derive(Debug, Clone, PartialEq)]
pub struct RawColumn {
    pub name: String,
    pub values: Vec<String>,
}

/// Parsed text table: named columns of raw string cells.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    columns: Vec<RawColumn>,
    row_count: usize,
}

impl RawTable {
    pub fn new(columns: Vec<RawColumn>) -> Result<Self> {
        let row_count = columns.first().map_or(0, |c| c.values.len());
        let mut seen = HashSet::new();
        for c in &columns {
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name `{}`", c.name)));
            }
            if c.values.len() != row_count {
                return Err(Error::Schema(format!(
                    "column `{}` has {} values, expected {row_count}",
                    c.name,
                    c.values.len()
                )));
            }
        }
        Ok(Self { columns, row_count })
    }

    pub fn columns(&self) -> &[RawColumn] {
        &self.columns
    }

    pub fn row_count(&self) -> usize {
        self.row_count
    }

    pub fn column(&self, name: &str) -> Option<&RawColumn> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_names(&self) -> impl Iterator<Item = &str> {
        self.columns.iter().map(|c| c.name.as_str())
    }
}

fn detect_delimiter(header: &str) -> u8 {
    if header.contains(';') {
        b';'
    } else {
        b','
    }
}

/// Parses delimited text with a header line.
///
/// The delimiter is `;` when the header contains one, `,` otherwise. Fields may
/// be double-quoted. Rows with a different field count than the header, and
/// empty cells, are rejected with the offending line number.
pub fn parse_table(csv_text: &str) -> Result<RawTable> {
    let header_line = csv_text
        .lines()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| Error::Parse {
            line: 1,
            message: "input is empty".into(),
        })?;
    let delimiter = detect_delimiter(header_line);

    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(csv_text.as_bytes());

    let mut records = reader.records();
    let header = match records.next() {
        Some(rec) => rec.map_err(csv_error)?,
        None => {
            return Err(Error::Parse {
                line: 1,
                message: "missing header".into(),
            })
        }
    };
    let mut columns: Vec<RawColumn> = header
        .iter()
        .map(|name| RawColumn {
            name: name.to_string(),
            values: Vec::new(),
        })
        .collect();
    if columns.iter().any(|c| c.name.is_empty()) {
        return Err(Error::Schema("empty column name in header".into()));
    }

    for rec in records {
        let rec = rec.map_err(csv_error)?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() == 1 && rec.get(0) == Some("") {
            continue;
        }
        if rec.len() != columns.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} fields, found {}", columns.len(), rec.len()),
            });
        }
        for (col, cell) in columns.iter_mut().zip(rec.iter()) {
            if cell.is_empty() {
                return Err(Error::Parse {
                    line,
                    message: format!("empty cell in column `{}`", col.name),
                });
            }
            col.values.push(cell.to_string());
        }
    }
    RawTable::new(columns)
}

fn csv_error(e: csv::Error) -> Error {
    let line = e.position().map_or(0, |p| p.line());
    Error::Parse {
        line,
        message: e.to_string(),
    }
}

fn parse_number(s: &str) -> Option<f64> {
    s.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn is_numeric_column(col: &RawColumn) -> bool {
    col.values.iter().all(|v| parse_number(v).is_some())
}

/// How raw columns map onto numeric features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingSchema {
    /// Per categorical column: category -> 0-based code, in alphabetical order.
    pub ordinal_maps: BTreeMap<String, BTreeMap<String, u32>>,
    pub numeric_columns: Vec<String>,
    pub target_column: String,
    /// Feature columns in emission order.
    pub feature_columns: Vec<String>,
}

impl EncodingSchema {
    /// Removes the named columns from the feature set. Unknown names are ignored.
    pub fn exclude_features(&mut self, names: &[&str]) {
        self.feature_columns
            .retain(|c| !names.contains(&c.as_str()));
    }

    pub fn n_features(&self) -> usize {
        self.feature_columns.len()
    }
}

/// Fits an encoding: numeric columns pass through, every other column gets an
/// alphabetical 0-based ordinal map.
pub fn build_encoding_schema(raw: &RawTable, target: &str) -> Result<EncodingSchema> {
    let target_col = raw
        .column(target)
        .ok_or_else(|| Error::Schema(format!("target column `{target}` not found")))?;
    if !is_numeric_column(target_col) {
        return Err(Error::Schema(format!(
            "target column `{target}` is not numeric"
        )));
    }

    let mut ordinal_maps = BTreeMap::new();
    let mut numeric_columns = Vec::new();
    let mut feature_columns = Vec::new();
    for col in raw.columns() {
        if col.name != target {
            feature_columns.push(col.name.clone());
        }
        if is_numeric_column(col) {
            numeric_columns.push(col.name.clone());
        } else {
            let mut categories: Vec<&str> = col.values.iter().map(String::as_str).collect();
            categories.sort_unstable();
            categories.dedup();
            let map = categories
                .into_iter()
                .zip(0u32..)
                .map(|(c, code)| (c.to_string(), code))
                .collect();
            ordinal_maps.insert(col.name.clone(), map);
        }
    }
    Ok(EncodingSchema {
        ordinal_maps,
        numeric_columns,
        target_column: target.to_string(),
        feature_columns,
    })
}

/// Real-valued feature matrix with its regression target split out.
#[derive(Debug, Clone, PartialEq)]
pub struct NumericTable {
    features: Matrix,
    target: Vec<f64>,
    feature_names: Vec<String>,
}

impl NumericTable {
    pub fn new(features: Matrix, target: Vec<f64>, feature_names: Vec<String>) -> Result<Self> {
        if features.rows() != target.len() {
            return Err(Error::Shape(format!(
                "{} feature rows but {} targets",
                features.rows(),
                target.len()
            )));
        }
        if features.cols() != feature_names.len() {
            return Err(Error::Shape(format!(
                "{} feature columns but {} names",
                features.cols(),
                feature_names.len()
            )));
        }
        if !features.is_finite() || target.iter().any(|t| !t.is_finite()) {
            return Err(Error::Numeric("table contains non-finite values".into()));
        }
        Ok(Self {
            features,
            target,
            feature_names,
        })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    pub fn select_rows(&self, indices: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(indices),
            target: indices.iter().map(|&i| self.target[i]).collect(),
            feature_names: self.feature_names.clone(),
        }
    }
}

/// Applies a fitted schema to a raw table.
pub fn encode(raw: &RawTable, schema: &EncodingSchema) -> Result<NumericTable> {
    let n = raw.row_count();
    let lookup = |name: &str| {
        raw.column(name)
            .ok_or_else(|| Error::Schema(format!("column `{name}` missing from input")))
    };

    let mut features = Matrix::zeros(n, schema.feature_columns.len());
    for (j, name) in schema.feature_columns.iter().enumerate() {
        let col = lookup(name)?;
        match schema.ordinal_maps.get(name) {
            Some(map) => {
                for (i, v) in col.values.iter().enumerate() {
                    let code = map.get(v).ok_or_else(|| Error::Encoding {
                        column: name.clone(),
                        value: v.clone(),
                    })?;
                    features.set(i, j, f64::from(*code));
                }
            }
            None => {
                for (i, v) in col.values.iter().enumerate() {
                    let x = parse_number(v).ok_or_else(|| Error::Encoding {
                        column: name.clone(),
                        value: v.clone(),
                    })?;
                    features.set(i, j, x);
                }
            }
        }
    }

    let target_col = lookup(&schema.target_column)?;
    let target = target_col
        .values
        .iter()
        .map(|v| {
            parse_number(v).ok_or_else(|| Error::Encoding {
                column: schema.target_column.clone(),
                value: v.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;

    NumericTable::new(features, target, schema.feature_columns.clone())
}

/// Seeded permutation of `0..n` cut into `floor(train_fraction * n)` train
/// indices and the remainder as test indices.
pub fn split_indices(n: usize, train_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Split(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if n < 2 {
        return Err(Error::Split(format!(
            "need at least 2 rows to split, got {n}"
        )));
    }
    let n_train = (train_fraction * n as f64).floor() as usize;
    if n_train == 0 || n_train == n {
        return Err(Error::Split(format!(
            "train fraction {train_fraction} leaves an empty partition for {n} rows"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng_for(seed, "split"));
    let test = order.split_off(n_train);
    Ok((order, test))
}

pub fn split_train_test(
    table: &NumericTable,
    train_fraction: f64,
    seed: u64,
) -> Result<(NumericTable, NumericTable)> {
    let (train, test) = split_indices(table.n_rows(), train_fraction, seed)?;
    Ok((table.select_rows(&train), table.select_rows(&test)))
}

/// Per-feature min/max, fitted on training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl Scaler {
    pub fn n_features(&self) -> usize {
        self.min.len()
    }

    pub fn transform_row(&self, row: &[f64], out: &mut [f64]) {
        for (j, (&x, o)) in row.iter().zip(out.iter_mut()).enumerate() {
            let range = self.max[j] - self.min[j];
            *o = if range > 0.0 {
                (x - self.min[j]) / range
            } else {
                0.0
            };
        }
    }

    pub fn transform(&self, features: &Matrix) -> Result<Matrix> {
        if features.cols() != self.n_features() {
            return Err(Error::Shape(format!(
                "scaler fitted on {} features, table has {}",
                self.n_features(),
                features.cols()
            )));
        }
        let mut out = Matrix::zeros(features.rows(), features.cols());
        for r in 0..features.rows() {
            self.transform_row(features.row(r), out.row_mut(r));
        }
        Ok(out)
    }
}

pub fn fit_minmax(train: &NumericTable) -> Result<Scaler> {
    fit_minmax_matrix(train.features())
}

pub fn fit_minmax_matrix(x: &Matrix) -> Result<Scaler> {
    if x.rows() == 0 {
        return Err(Error::Argument("cannot fit a scaler on zero rows".into()));
    }
    let mut min = x.row(0).to_vec();
    let mut max = min.clone();
    for row in x.iter_rows().skip(1) {
        for (j, &v) in row.iter().enumerate() {
            min[j] = min[j].min(v);
            max[j] = max[j].max(v);
        }
    }
    Ok(Scaler { min, max })
}

/// Scales features with `(x - min) / (max - min)`; constant features map to 0.
/// Values outside the fitted range are not clamped. The target is untouched.
pub fn apply_minmax(scaler: &Scaler, table: &NumericTable) -> Result<NumericTable> {
    Ok(NumericTable {
        features: scaler.transform(table.features())?,
        target: table.target.clone(),
        feature_names: table.feature_names.clone(),
    })
}
