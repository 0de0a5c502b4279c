use serde::{Deserialize, Serialize};

use super::data::{Dataset, Matrix};
use crate::error::Result;

const VAR_FLOOR: f64 = 1e-9;

/// Gaussian Naive Bayes with per-class means and floored variances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayes {
    /// Index 0 is OnTime, 1 is Late.
    pub log_prior: [f64; 2],
    pub mean: [Vec<f64>; 2],
    pub var: [Vec<f64>; 2],
}

impl NaiveBayes {
    pub fn fit(data: &Dataset) -> Result<Self> {
        data.require_both_classes()?;
        let d = data.x.cols();
        let mut count = [0.0f64; 2];
        let mut sum = [vec![0.0; d], vec![0.0; d]];
        for (r, y) in data.x.iter_rows().zip(&data.y) {
            let c = y.is_late() as usize;
            count[c] += 1.0;
            for (s, v) in sum[c].iter_mut().zip(r) {
                *s += v;
            }
        }
        let mean = [0, 1].map(|c| sum[c].iter().map(|s| s / count[c]).collect::<Vec<_>>());
        let mut sq = [vec![0.0; d], vec![0.0; d]];
        for (r, y) in data.x.iter_rows().zip(&data.y) {
            let c = y.is_late() as usize;
            for ((s, v), m) in sq[c].iter_mut().zip(r).zip(&mean[c]) {
                *s += (v - m) * (v - m);
            }
        }
        let var = [0, 1].map(|c| sq[c].iter().map(|s| (s / count[c]).max(VAR_FLOOR)).collect());
        let n = count[0] + count[1];
        Ok(NaiveBayes {
            log_prior: [(count[0] / n).ln(), (count[1] / n).ln()],
            mean,
            var,
        })
    }

    fn joint_log_likelihood(&self, row: &[f64], c: usize) -> f64 {
        let mut ll = self.log_prior[c];
        for ((&x, &m), &v) in row.iter().zip(&self.mean[c]).zip(&self.var[c]) {
            ll -= 0.5 * ((2.0 * std::f64::consts::PI * v).ln() + (x - m) * (x - m) / v);
        }
        ll
    }

    /// `[P(OnTime), P(Late)]` for one row.
    pub fn class_proba(&self, row: &[f64]) -> [f64; 2] {
        let l0 = self.joint_log_likelihood(row, 0);
        let l1 = self.joint_log_likelihood(row, 1);
        let top = l0.max(l1);
        let e0 = (l0 - top).exp();
        let e1 = (l1 - top).exp();
        let z = e0 + e1;
        [e0 / z, e1 / z]
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        x.iter_rows().map(|r| self.class_proba(r)[1]).collect()
    }
}
