use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{Dataset, Matrix};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KnnParams {
    pub k: usize,
}

impl Default for KnnParams {
    fn default() -> Self {
        KnnParams { k: 49 }
    }
}

/// Brute-force k-nearest-neighbours on Euclidean distance. Equal distances
/// are ordered by training row index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knn {
    pub k: usize,
    pub x: Matrix,
    pub late: Vec<bool>,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl Knn {
    pub fn fit(data: &Dataset, params: &KnnParams) -> Result<Self> {
        if params.k < 1 {
            return Err(Error::InvalidParameter("k must be >= 1".into()));
        }
        if params.k > data.len() {
            return Err(Error::InsufficientData(format!(
                "k = {} exceeds the {} training rows",
                params.k,
                data.len()
            )));
        }
        Ok(Knn {
            k: params.k,
            x: data.x.clone(),
            late: data.y.iter().map(|c| c.is_late()).collect(),
        })
    }

    /// Indices of the `k` nearest training rows, nearest first.
    pub fn neighbors(&self, row: &[f64], k: usize) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = self
            .x
            .iter_rows()
            .enumerate()
            .map(|(i, r)| (sq_dist(row, r), i))
            .collect();
        let k = k.min(d.len());
        let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
        if k < d.len() && k > 0 {
            d.select_nth_unstable_by(k - 1, cmp);
        }
        d.truncate(k);
        d.sort_by(cmp);
        d.into_iter().map(|(_, i)| i).collect()
    }

    /// Late fraction among the first `k` entries of a nearest-first list, for
    /// every `k` in `ks`.
    pub fn proba_for_ks(&self, nearest: &[usize], ks: &[usize]) -> Vec<f64> {
        let mut prefix = Vec::with_capacity(nearest.len() + 1);
        prefix.push(0usize);
        for &i in nearest {
            prefix.push(prefix.last().unwrap() + self.late[i] as usize);
        }
        ks.iter().map(|&k| prefix[k] as f64 / k as f64).collect()
    }

    /// Probabilities for several `k` at once, one inner vector per `k`.
    pub fn predict_proba_many(&self, x: &Matrix, ks: &[usize]) -> Vec<Vec<f64>> {
        let kmax = ks.iter().copied().max().unwrap_or(1).min(self.late.len());
        let ks: Vec<usize> = ks.iter().map(|&k| k.min(kmax)).collect();
        let per_row: Vec<Vec<f64>> = (0..x.rows())
            .into_par_iter()
            .map(|i| self.proba_for_ks(&self.neighbors(x.row(i), kmax), &ks))
            .collect();
        (0..ks.len())
            .map(|j| per_row.iter().map(|r| r[j]).collect())
            .collect()
    }

    pub fn predict_proba(&self, x: &Matrix) -> Vec<f64> {
        self.predict_proba_many(x, &[self.k]).remove(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::PaymentClass;

    fn data() -> Dataset {
        let rows = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![5.0, 5.0], vec![1.0, 0.0]];
        let y = [false, true, false, true, false].map(PaymentClass::from_late).to_vec();
        Dataset::new(vec!["a".into(), "b".into()], Matrix::from_rows(&rows).unwrap(), y).unwrap()
    }

    #[test]
    fn k1_returns_own_label() {
        let d = data();
        let m = Knn::fit(&d, &KnnParams { k: 1 }).unwrap();
        assert_eq!(m.predict_proba(&Matrix::from_rows(&[vec![5.0, 5.0], vec![0.0, 0.0]]).unwrap()), vec![1.0, 0.0]);
        // Rows 1 and 4 coincide; the lower index wins.
        assert_eq!(m.neighbors(&[1.0, 0.0], 2), vec![1, 4]);
    }

    #[test]
    fn full_k_is_global_fraction() {
        let d = data();
        let m = Knn::fit(&d, &KnnParams { k: 5 }).unwrap();
        for p in m.predict_proba(&d.x) {
            assert_eq!(p, 0.4);
        }
        assert!(Knn::fit(&d, &KnnParams { k: 6 }).is_err());
    }
}
