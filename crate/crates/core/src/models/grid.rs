//! Cross-validated grid search.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::data::Dataset;
use super::{ModelKind, ModelParams, ScoringModel, StandardScaler};
use crate::error::{Error, Result};
use crate::eval::{accuracy, roc_auc};
use crate::splits::CvFolds;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    #[default]
    Accuracy,
    Auc,
}

impl Metric {
    pub fn score(self, proba: &[f64], data: &Dataset) -> Result<f64> {
        match self {
            Metric::Accuracy => accuracy(proba, &data.y, 0.5),
            Metric::Auc => roc_auc(proba, &data.y).map(|r| r.auc),
        }
    }
}

/// Candidate values per hyperparameter. Points are the Cartesian product in
/// key order, varying the last key fastest; unlisted fields keep defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperGrid {
    pub kind: ModelKind,
    #[serde(default)]
    pub axes: BTreeMap<String, Vec<Value>>,
}

impl HyperGrid {
    pub fn singleton(kind: ModelKind) -> Self {
        HyperGrid {
            kind,
            axes: BTreeMap::new(),
        }
    }

    pub fn from_params(params: &ModelParams) -> Result<Self> {
        let Value::Object(obj) = serde_json::to_value(params).map_err(|e| Error::Config(e.to_string()))? else {
            unreachable!("model params serialize to an object")
        };
        Ok(HyperGrid {
            kind: params.kind(),
            axes: obj
                .into_iter()
                .filter(|(k, _)| k != "kind")
                .map(|(k, v)| (k, vec![v]))
                .collect(),
        })
    }

    /// Search grids over the candidate sets reported for each learner.
    pub fn default_for(kind: ModelKind) -> Self {
        let axes: Vec<(&str, Value)> = match kind {
            ModelKind::LogisticRegression => vec![
                ("penalty", serde_json::json!(["l1", "l2"])),
                ("c", serde_json::json!([0.5, 1.0, 5.0, 10.0, 20.0, 50.0])),
                ("class_weight", serde_json::json!(["balanced", "none"])),
                ("max_iter", serde_json::json!([10, 50, 100])),
            ],
            ModelKind::Knn => vec![("k", Value::from((29..100).collect::<Vec<u64>>()))],
            ModelKind::DecisionTree => vec![("max_depth", serde_json::json!([4, 8, 12]))],
            ModelKind::RandomForest => vec![
                ("max_depth", serde_json::json!([8, 12, 16])),
                ("max_features", serde_json::json!(["sqrt", {"fraction": 0.5}])),
            ],
            ModelKind::Gbdt => vec![
                ("subsample", serde_json::json!([0.7, 1.0])),
                ("colsample", serde_json::json!([0.7, 1.0])),
                ("reg_alpha", serde_json::json!([1.0, 10.0])),
                ("max_depth", serde_json::json!([3, 7, 15])),
            ],
            ModelKind::Mlp => vec![("late_weight", serde_json::json!([1.6, 2.0, 3.0, 4.0]))],
            ModelKind::NaiveBayes | ModelKind::Ensemble => vec![],
        };
        HyperGrid {
            kind,
            axes: axes
                .into_iter()
                .map(|(k, v)| (k.to_string(), v.as_array().unwrap().clone()))
                .collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.axes.values().map(|v| v.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn points(&self) -> Result<Vec<ModelParams>> {
        if let Some((name, _)) = self.axes.iter().find(|(_, v)| v.is_empty()) {
            return Err(Error::Config(format!("grid axis `{name}` has no candidate values")));
        }
        let Value::Object(base) =
            serde_json::to_value(self.kind.default_params()).map_err(|e| Error::Config(e.to_string()))?
        else {
            unreachable!("model params serialize to an object")
        };
        let axes: Vec<(&String, &Vec<Value>)> = self.axes.iter().collect();
        let mut out = Vec::with_capacity(self.len());
        let mut idx = vec![0usize; axes.len()];
        loop {
            let mut obj = base.clone();
            for (a, &i) in axes.iter().zip(&idx) {
                obj.insert(a.0.clone(), a.1[i].clone());
            }
            let p: ModelParams = serde_json::from_value(Value::Object(obj))
                .map_err(|e| Error::Config(format!("grid point for {}: {e}", self.kind)))?;
            out.push(p);
            let mut k = axes.len();
            loop {
                if k == 0 {
                    return Ok(out);
                }
                k -= 1;
                idx[k] += 1;
                if idx[k] < axes[k].1.len() {
                    break;
                }
                idx[k] = 0;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvRow {
    pub point: usize,
    pub fold: usize,
    pub params: ModelParams,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best_index: usize,
    pub best: ModelParams,
    pub mean_scores: Vec<f64>,
    pub table: Vec<CvRow>,
}

/// Validation probabilities for every point on one fold. k-NN shares one
/// neighbour search across all `k`.
fn fold_probas(points: &[ModelParams], train: &Dataset, val: &Dataset, seed: u64) -> Result<Vec<Vec<f64>>> {
    let ks: Option<Vec<usize>> = points
        .iter()
        .map(|p| match p {
            ModelParams::Knn(k) => Some(k.k),
            _ => None,
        })
        .collect();
    if let Some(ks) = ks {
        if ks.iter().any(|&k| k == 0 || k > train.len()) {
            return Err(Error::InsufficientData(format!(
                "fold with {} training rows cannot serve k in {:?}..{:?}",
                train.len(),
                ks.iter().min(),
                ks.iter().max()
            )));
        }
        let scaler = StandardScaler::fit(&train.x);
        let knn = super::Knn {
            k: 1,
            x: scaler.transform(&train.x),
            late: train.y.iter().map(|c| c.is_late()).collect(),
        };
        return Ok(knn.predict_proba_many(&scaler.transform(&val.x), &ks));
    }
    points
        .par_iter()
        .map(|p| ScoringModel::fit(p, train, seed)?.predict_dataset(val))
        .collect()
}

/// Scores every grid point on every fold and picks the best mean score; the
/// earliest point wins ties.
pub fn grid_search(grid: &HyperGrid, data: &Dataset, folds: &CvFolds, metric: Metric, seed: u64) -> Result<GridResult> {
    let points = grid.points()?;
    let per_fold: Vec<Vec<f64>> = folds
        .folds
        .par_iter()
        .map(|f| {
            let train = data.subset(&f.train);
            let val = data.subset(&f.validation);
            fold_probas(&points, &train, &val, seed)?
                .iter()
                .map(|p| metric.score(p, &val))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let mut table = Vec::with_capacity(points.len() * folds.folds.len());
    let mut mean_scores = Vec::with_capacity(points.len());
    for (pi, p) in points.iter().enumerate() {
        let mut sum = 0.0;
        for (fi, scores) in per_fold.iter().enumerate() {
            table.push(CvRow {
                point: pi,
                fold: fi,
                params: p.clone(),
                score: scores[pi],
            });
            sum += scores[pi];
        }
        mean_scores.push(sum / per_fold.len() as f64);
    }
    let mut best_index = 0;
    for (i, &s) in mean_scores.iter().enumerate() {
        if s > mean_scores[best_index] {
            best_index = i;
        }
    }
    Ok(GridResult {
        best_index,
        best: points[best_index].clone(),
        mean_scores,
        table,
    })
}
