//! The n x d data table every multivariate routine consumes.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// An n x d numeric table with optional row/column labels.
///
/// All entries are finite; n >= 1 and d >= 1 are enforced at construction.
#[derive(Debug, Clone)]
pub struct DataMatrix {
    data: DMatrix<f64>,
    row_labels: Option<Vec<String>>,
    col_labels: Option<Vec<String>>,
}

impl DataMatrix {
    pub fn new(data: DMatrix<f64>) -> Result<Self> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::EmptySample);
        }
        for j in 0..data.ncols() {
            for i in 0..data.nrows() {
                if !data[(i, j)].is_finite() {
                    return Err(Error::NonFinite { row: i, col: j });
                }
            }
        }
        Ok(Self { data, row_labels: None, col_labels: None })
    }

    /// Builds from row slices; every row must have the same length.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::EmptySample);
        }
        let d = rows[0].len();
        if let Some(bad) = rows.iter().position(|r| r.len() != d) {
            return Err(Error::InvalidParameter(format!(
                "row {bad} has {} entries, expected {d}",
                rows[bad].len()
            )));
        }
        Self::new(DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]))
    }

    pub fn with_row_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(Error::InvalidParameter(format!(
                "{} row labels for {} rows",
                labels.len(),
                self.n()
            )));
        }
        self.row_labels = Some(labels);
        Ok(self)
    }

    pub fn with_col_labels(mut self, labels: Vec<String>) -> Result<Self> {
        if labels.len() != self.d() {
            return Err(Error::InvalidParameter(format!(
                "{} column labels for {} columns",
                labels.len(),
                self.d()
            )));
        }
        self.col_labels = Some(labels);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn d(&self) -> usize {
        self.data.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.data.row(i).transpose()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.data.column(j).iter().cloned().collect()
    }

    pub fn row_labels(&self) -> Option<&[String]> {
        self.row_labels.as_deref()
    }

    pub fn col_labels(&self) -> Option<&[String]> {
        self.col_labels.as_deref()
    }

    /// Label of row `i`, falling back to the 1-based index.
    pub fn row_label(&self, i: usize) -> String {
        match &self.row_labels {
            Some(l) => l[i].clone(),
            None => (i + 1).to_string(),
        }
    }

    /// Label of column `j`, falling back to "c<j+1>".
    pub fn col_label(&self, j: usize) -> String {
        match &self.col_labels {
            Some(l) => l[j].clone(),
            None => format!("c{}", j + 1),
        }
    }

    /// New matrix restricted to the given rows, labels carried along.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::EmptySample);
        }
        let data = DMatrix::from_fn(rows.len(), self.d(), |i, j| self.data[(rows[i], j)]);
        let mut out = Self::new(data)?;
        if let Some(l) = &self.row_labels {
            out.row_labels = Some(rows.iter().map(|&i| l[i].clone()).collect());
        }
        out.col_labels = self.col_labels.clone();
        Ok(out)
    }
}
