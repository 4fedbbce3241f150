use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Identifies the origin of a feature row built from a time series.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RowKey {
    pub station_id: String,
    pub timestamp: i64,
}

/// Dense `n × d` design matrix with named columns, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    column_names: Vec<String>,
    values: Vec<f64>,
    n_rows: usize,
    keys: Option<Vec<RowKey>>,
}

impl FeatureMatrix {
    pub fn new(column_names: Vec<String>, values: Vec<f64>) -> Result<Self> {
        let d = column_names.len();
        if d == 0 {
            return Err(Error::invalid("feature matrix needs at least one column"));
        }
        if values.len() % d != 0 {
            return Err(Error::invalid(format!(
                "{} values cannot fill rows of {d} columns",
                values.len()
            )));
        }
        let mut seen = HashSet::new();
        for name in &column_names {
            if !seen.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate column name `{name}`")));
            }
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!(
                "non-finite value at row {}, column `{}`",
                pos / d,
                column_names[pos % d]
            )));
        }
        Ok(Self {
            n_rows: values.len() / d,
            column_names,
            values,
            keys: None,
        })
    }

    pub fn from_rows(column_names: Vec<String>, rows: &[Vec<f64>]) -> Result<Self> {
        let d = column_names.len();
        let mut values = Vec::with_capacity(rows.len() * d);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::invalid(format!(
                    "row {i} has {} values, expected {d}",
                    r.len()
                )));
            }
            values.extend_from_slice(r);
        }
        Self::new(column_names, values)
    }

    /// Columns named `x0..x{d-1}`.
    pub fn from_unnamed_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let d = rows.first().map_or(0, Vec::len);
        Self::from_rows((0..d).map(|j| format!("x{j}")).collect(), rows)
    }

    pub fn with_keys(mut self, keys: Vec<RowKey>) -> Result<Self> {
        if keys.len() != self.n_rows {
            return Err(Error::invalid(format!(
                "{} row keys for {} rows",
                keys.len(),
                self.n_rows
            )));
        }
        self.keys = Some(keys);
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.column_names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows == 0
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn keys(&self) -> Option<&[RowKey]> {
        self.keys.as_deref()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.n_cols();
        &self.values[i * d..(i + 1) * d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.values.chunks_exact(self.n_cols())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i * self.n_cols() + j]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.rows().map(|r| r[j]).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.column_names.iter().position(|c| c == name)
    }

    pub fn select_columns(&self, cols: &[usize]) -> Result<Self> {
        let d = self.n_cols();
        if let Some(&bad) = cols.iter().find(|&&c| c >= d) {
            return Err(Error::invalid(format!("column index {bad} out of range 0..{d}")));
        }
        let names = cols.iter().map(|&c| self.column_names[c].clone()).collect();
        let mut values = Vec::with_capacity(self.n_rows * cols.len());
        for r in self.rows() {
            values.extend(cols.iter().map(|&c| r[c]));
        }
        let mut out = Self::new(names, values)?;
        out.keys = self.keys.clone();
        Ok(out)
    }

    /// Reorders columns to match `names`, failing with the list of absent
    /// columns.
    pub fn select_named(&self, names: &[String]) -> Result<Self> {
        let mut idx = Vec::with_capacity(names.len());
        let mut missing = Vec::new();
        for n in names {
            match self.column_index(n) {
                Some(i) => idx.push(i),
                None => missing.push(n.as_str()),
            }
        }
        if !missing.is_empty() {
            return Err(Error::Schema(format!(
                "missing columns: {}",
                missing.join(", ")
            )));
        }
        self.select_columns(&idx)
    }

    pub fn select_rows(&self, rows: &[usize]) -> Self {
        let mut values = Vec::with_capacity(rows.len() * self.n_cols());
        for &r in rows {
            values.extend_from_slice(self.row(r));
        }
        Self {
            column_names: self.column_names.clone(),
            values,
            n_rows: rows.len(),
            keys: self
                .keys
                .as_ref()
                .map(|k| rows.iter().map(|&r| k[r].clone()).collect()),
        }
    }

    /// Row-wise concatenation; keys survive only when both sides carry them.
    pub fn vstack(&self, other: &Self) -> Result<Self> {
        if self.column_names != other.column_names {
            return Err(Error::Schema(
                "cannot stack matrices with different columns".into(),
            ));
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        let keys = match (&self.keys, &other.keys) {
            (Some(a), Some(b)) => Some(a.iter().chain(b).cloned().collect()),
            _ => None,
        };
        Ok(Self {
            column_names: self.column_names.clone(),
            values,
            n_rows: self.n_rows + other.n_rows,
            keys,
        })
    }
}

/// Binary outlier marks aligned with instances.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    marks: Vec<bool>,
    vicinity_radius: usize,
}

impl LabelVector {
    pub fn new(marks: Vec<bool>, vicinity_radius: usize) -> Self {
        Self {
            marks,
            vicinity_radius,
        }
    }

    pub fn pointwise(marks: Vec<bool>) -> Self {
        Self::new(marks, 0)
    }

    pub fn zeros(n: usize) -> Self {
        Self::pointwise(vec![false; n])
    }

    pub fn from_ints(marks: &[u8]) -> Result<Self> {
        let marks = marks
            .iter()
            .map(|&m| match m {
                0 => Ok(false),
                1 => Ok(true),
                other => Err(Error::invalid(format!("label {other} is not 0 or 1"))),
            })
            .collect::<Result<_>>()?;
        Ok(Self::pointwise(marks))
    }

    pub fn marks(&self) -> &[bool] {
        &self.marks
    }

    pub fn len(&self) -> usize {
        self.marks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.marks.is_empty()
    }

    pub fn vicinity_radius(&self) -> usize {
        self.vicinity_radius
    }

    pub fn positives(&self) -> usize {
        self.marks.iter().filter(|&&m| m).count()
    }

    pub fn as_f64(&self) -> Vec<f64> {
        self.marks.iter().map(|&m| if m { 1.0 } else { 0.0 }).collect()
    }

    pub fn concat(&self, other: &Self) -> Self {
        let mut marks = self.marks.clone();
        marks.extend_from_slice(&other.marks);
        Self::new(marks, self.vicinity_radius)
    }
}
