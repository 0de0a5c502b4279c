//! Feature quantization shared by the tree learners.
//!
//! A feature with at most `MAX_BINS` distinct training values gets one bin per
//! value, so split search over bins is exactly the search over all midpoints
//! between consecutive distinct values. Wider features are cut at quantiles.

use super::data::Matrix;

pub const MAX_BINS: usize = 256;

#[derive(Debug, Clone)]
pub struct BinnedMatrix {
    n_rows: usize,
    /// Column-major bin codes.
    codes: Vec<Vec<u8>>,
    /// `thresholds[j][b]` separates bin `b` (values `<=`) from bin `b + 1`.
    thresholds: Vec<Vec<f64>>,
}

impl BinnedMatrix {
    pub fn new(x: &Matrix) -> Self {
        let mut codes = Vec::with_capacity(x.cols());
        let mut thresholds = Vec::with_capacity(x.cols());
        for j in 0..x.cols() {
            let column: Vec<f64> = (0..x.rows()).map(|i| x.get(i, j)).collect();
            let mut distinct = column.clone();
            distinct.sort_by(|a, b| a.total_cmp(b));
            distinct.dedup();
            let cuts: Vec<f64> = if distinct.len() <= MAX_BINS {
                distinct.windows(2).map(|w| midpoint(w[0], w[1])).collect()
            } else {
                let mut cuts = Vec::with_capacity(MAX_BINS - 1);
                for b in 1..MAX_BINS {
                    let pos = b * distinct.len() / MAX_BINS;
                    let c = midpoint(distinct[pos - 1], distinct[pos]);
                    if cuts.last().is_none_or(|&last| c > last) {
                        cuts.push(c);
                    }
                }
                cuts
            };
            let col_codes = column
                .iter()
                .map(|&v| cuts.partition_point(|&c| c < v) as u8)
                .collect();
            codes.push(col_codes);
            thresholds.push(cuts);
        }
        BinnedMatrix {
            n_rows: x.rows(),
            codes,
            thresholds,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.codes.len()
    }

    pub fn n_bins(&self, j: usize) -> usize {
        self.thresholds[j].len() + 1
    }

    pub fn code(&self, i: usize, j: usize) -> usize {
        self.codes[j][i] as usize
    }

    pub fn column(&self, j: usize) -> &[u8] {
        &self.codes[j]
    }

    /// Raw-value threshold for the split "bin <= b goes left".
    pub fn threshold(&self, j: usize, b: usize) -> f64 {
        self.thresholds[j][b]
    }
}

fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) / 2.0;
    // Keep a strictly below-b threshold even when the gap is one ulp.
    if m >= b {
        a
    } else {
        m
    }
}
