//! The n x p data matrix with an explicit missingness mask.

use std::collections::HashSet;

use crate::error::{Error, Result};

/// Row-major n x p matrix of reals plus a mask (`true` = missing).
///
/// Masked slots hold no meaningful value; reading one through [`DataMatrix::value`]
/// is an error and [`DataMatrix::get`] returns `None`.
#[derive(Debug, Clone)]
pub struct DataMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
    mask: Vec<bool>,
    col_names: Vec<String>,
}

/// Observed/missing row index sets for one target column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSplit {
    pub target_col: usize,
    pub rows_obs: Vec<usize>,
    pub rows_mis: Vec<usize>,
}

impl DataMatrix {
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        mut values: Vec<f64>,
        mask: Vec<bool>,
        col_names: Vec<String>,
    ) -> Result<Self> {
        if n_rows < 2 || n_cols < 1 {
            return Err(Error::Shape(format!(
                "need at least 2 rows and 1 column, got {n_rows}x{n_cols}"
            )));
        }
        let len = n_rows * n_cols;
        if values.len() != len || mask.len() != len {
            return Err(Error::Shape(format!(
                "expected {len} values and mask entries, got {} and {}",
                values.len(),
                mask.len()
            )));
        }
        if col_names.len() != n_cols {
            return Err(Error::Shape(format!(
                "expected {n_cols} column names, got {}",
                col_names.len()
            )));
        }
        let mut seen = HashSet::with_capacity(n_cols);
        for (i, name) in col_names.iter().enumerate() {
            if name.is_empty() {
                return Err(Error::EmptyColumnName(i));
            }
            if !seen.insert(name.as_str()) {
                return Err(Error::DuplicateColumn(name.clone()));
            }
        }
        for (idx, (v, &missing)) in values.iter_mut().zip(&mask).enumerate() {
            if missing {
                *v = f64::NAN;
            } else if !v.is_finite() {
                return Err(Error::NonFinite {
                    row: idx / n_cols,
                    col: idx % n_cols,
                });
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            values,
            mask,
            col_names,
        })
    }

    /// A matrix with no missing entries.
    pub fn complete(
        n_rows: usize,
        n_cols: usize,
        values: Vec<f64>,
        col_names: Vec<String>,
    ) -> Result<Self> {
        let mask = vec![false; values.len()];
        Self::new(n_rows, n_cols, values, mask, col_names)
    }

    /// Builds from rows of optional values with default column names `V1..Vp`.
    pub fn from_rows(rows: &[Vec<Option<f64>>]) -> Result<Self> {
        let n_rows = rows.len();
        let n_cols = rows.first().map_or(0, Vec::len);
        let mut values = Vec::with_capacity(n_rows * n_cols);
        let mut mask = Vec::with_capacity(n_rows * n_cols);
        for (r, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::RaggedRow {
                    row: r,
                    expected: n_cols,
                    found: row.len(),
                });
            }
            for v in row {
                values.push(v.unwrap_or(f64::NAN));
                mask.push(v.is_none());
            }
        }
        Self::new(n_rows, n_cols, values, mask, default_names(n_cols))
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_rows, self.n_cols)
    }

    pub fn col_names(&self) -> &[String] {
        &self.col_names
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.n_cols + col]
    }

    /// The value at `(row, col)`, or `None` if it is missing.
    pub fn get(&self, row: usize, col: usize) -> Option<f64> {
        let idx = row * self.n_cols + col;
        (!self.mask[idx]).then(|| self.values[idx])
    }

    pub fn value(&self, row: usize, col: usize) -> Result<f64> {
        self.check_bounds(row, col)?;
        self.get(row, col).ok_or(Error::MissingEntry { row, col })
    }

    pub(crate) fn check_bounds(&self, row: usize, col: usize) -> Result<()> {
        if row >= self.n_rows || col >= self.n_cols {
            return Err(Error::OutOfBounds {
                row,
                col,
                n_rows: self.n_rows,
                n_cols: self.n_cols,
            });
        }
        Ok(())
    }

    /// Fills an entry and clears its mask bit.
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        let idx = row * self.n_cols + col;
        self.values[idx] = value;
        self.mask[idx] = false;
    }

    pub(crate) fn mark_missing(&mut self, row: usize, col: usize) {
        let idx = row * self.n_cols + col;
        self.values[idx] = f64::NAN;
        self.mask[idx] = true;
    }

    pub fn missing_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    pub fn is_complete(&self) -> bool {
        !self.mask.contains(&true)
    }

    pub fn missing_per_column(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_cols];
        for (idx, _) in self.mask.iter().enumerate().filter(|(_, &m)| m) {
            counts[idx % self.n_cols] += 1;
        }
        counts
    }

    /// Missing positions in row-major order.
    pub fn missing_positions(&self) -> Vec<(usize, usize)> {
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(|(idx, _)| (idx / self.n_cols, idx % self.n_cols))
            .collect()
    }

    pub fn column_split(&self, target_col: usize) -> ColumnSplit {
        let (rows_mis, rows_obs) = (0..self.n_rows).partition(|&r| self.is_missing(r, target_col));
        ColumnSplit {
            target_col,
            rows_obs,
            rows_mis,
        }
    }

    pub fn observed_column(&self, col: usize) -> Vec<f64> {
        (0..self.n_rows).filter_map(|r| self.get(r, col)).collect()
    }

    /// Row-major values of a complete matrix.
    pub fn dense(&self) -> Result<&[f64]> {
        match self.missing_count() {
            0 => Ok(&self.values),
            k => Err(Error::NotComplete(k)),
        }
    }

    /// Row-major values with masked slots set to NaN.
    pub(crate) fn raw_values(&self) -> &[f64] {
        &self.values
    }

    /// A complete matrix with the same shape and column names.
    pub(crate) fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        Self::complete(self.n_rows, self.n_cols, values, self.col_names.clone())
    }

    pub fn same_shape(&self, other: &Self) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                left_rows: self.n_rows,
                left_cols: self.n_cols,
                right_rows: other.n_rows,
                right_cols: other.n_cols,
            });
        }
        Ok(())
    }

    /// Rejects columns with fewer than `required` observed entries.
    pub fn require_observed(&self, required: usize) -> Result<()> {
        let missing = self.missing_per_column();
        for (c, &m) in missing.iter().enumerate() {
            let observed = self.n_rows - m;
            if observed == 0 {
                return Err(Error::FullyMissingColumn(self.col_names[c].clone()));
            }
            if observed < required {
                return Err(Error::TooFewObserved {
                    name: self.col_names[c].clone(),
                    observed,
                    required,
                });
            }
        }
        Ok(())
    }
}

/// Equal shape, names and mask, and bit-identical observed values.
impl PartialEq for DataMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.shape() == other.shape()
            && self.col_names == other.col_names
            && self.mask == other.mask
            && self
                .values
                .iter()
                .zip(&other.values)
                .zip(&self.mask)
                .all(|((a, b), &m)| m || a.to_bits() == b.to_bits())
    }
}

pub fn default_names(n_cols: usize) -> Vec<String> {
    (1..=n_cols).map(|i| format!("V{i}")).collect()
}
