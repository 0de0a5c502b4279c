use serde::{Deserialize, Serialize};

use crate::domain::PaymentClass;
use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::InvalidParameter(format!(
                "matrix data length {} != {rows} x {cols}",
                data.len()
            )));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            if r.len() != cols {
                return Err(Error::InvalidParameter("ragged rows".into()));
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix { rows: rows.len(), cols, data })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn iter_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks(self.cols.max(1)).take(self.rows)
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix {
            rows: idx.len(),
            cols: self.cols,
            data,
        }
    }

    pub fn map_rows(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Matrix {
        let mut data = Vec::with_capacity(self.data.len());
        for r in self.iter_rows() {
            data.extend(f(r));
        }
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        }
    }
}

/// Labeled design matrix with named columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub columns: Vec<String>,
    pub x: Matrix,
    pub y: Vec<PaymentClass>,
}

impl Dataset {
    pub fn new(columns: Vec<String>, x: Matrix, y: Vec<PaymentClass>) -> Result<Self> {
        if columns.len() != x.cols() || y.len() != x.rows() {
            return Err(Error::InvalidParameter(format!(
                "dataset shape mismatch: {} columns, {}x{} matrix, {} labels",
                columns.len(),
                x.rows(),
                x.cols(),
                y.len()
            )));
        }
        Ok(Dataset { columns, x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            columns: self.columns.clone(),
            x: self.x.select_rows(idx),
            y: idx.iter().map(|&i| self.y[i]).collect(),
        }
    }

    pub fn targets(&self) -> Vec<f64> {
        self.y.iter().map(|c| c.as_target()).collect()
    }

    pub fn late_count(&self) -> usize {
        self.y.iter().filter(|c| c.is_late()).count()
    }

    pub fn require_both_classes(&self) -> Result<()> {
        let late = self.late_count();
        if late == 0 || late == self.len() {
            Err(Error::InsufficientData(
                "training set must contain both Late and OnTime rows".into(),
            ))
        } else {
            Ok(())
        }
    }
}
