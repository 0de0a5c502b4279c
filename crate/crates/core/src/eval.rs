//! Metrics and evaluation experiments: accuracy, ROC/AUC, per-month and
//! per-region accuracy, the region robustness table and the window sweep.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Invoice, PaymentClass, Region, Snapshot, YearMonth, GRACE_DAYS};
use crate::error::{Error, Result};
use crate::features::{featurize, FeatureVector, WindowSize};
use crate::models::{Dataset, ModelParams, ScoringModel};
use crate::pipeline::{dataset, prepare, Prepared};
use crate::splits::SplitSpec;

pub const DEFAULT_THRESHOLD: f64 = 0.5;

fn check_lengths(n_pred: usize, n_labels: usize) -> Result<()> {
    if n_pred != n_labels {
        return Err(Error::InvalidParameter(format!(
            "{n_pred} predictions for {n_labels} labels"
        )));
    }
    if n_pred == 0 {
        return Err(Error::InsufficientData("no predictions to evaluate".into()));
    }
    Ok(())
}

/// Share of rows where `p >= threshold` agrees with the label being Late.
pub fn accuracy(proba: &[f64], labels: &[PaymentClass], threshold: f64) -> Result<f64> {
    check_lengths(proba.len(), labels.len())?;
    let hits = proba
        .iter()
        .zip(labels)
        .filter(|(p, y)| (**p >= threshold) == y.is_late())
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Majority-class share.
pub fn baseline(labels: &[PaymentClass]) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::InsufficientData("no labels".into()));
    }
    let late = labels.iter().filter(|c| c.is_late()).count();
    Ok(late.max(labels.len() - late) as f64 / labels.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RocCurve {
    /// (false positive rate, true positive rate), from (0, 0) to (1, 1).
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// ROC by a descending threshold sweep; rows with equal scores enter the
/// curve together. AUC by the trapezoid rule.
pub fn roc_auc(scores: &[f64], labels: &[PaymentClass]) -> Result<RocCurve> {
    check_lengths(scores.len(), labels.len())?;
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::InvalidParameter("NaN score".into()));
    }
    let pos = labels.iter().filter(|c| c.is_late()).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::InsufficientData("ROC needs both Late and OnTime labels".into()));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let mut points = vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0u64, 0u64);
    // Twice the area in units of pair counts keeps the sum exact.
    let mut area2 = 0u128;
    let mut i = 0;
    while i < idx.len() {
        let (tp0, fp0) = (tp, fp);
        let s = scores[idx[i]];
        while i < idx.len() && scores[idx[i]] == s {
            if labels[idx[i]].is_late() {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area2 += ((fp - fp0) as u128) * ((tp + tp0) as u128);
        points.push((fp as f64 / neg as f64, tp as f64 / pos as f64));
    }
    Ok(RocCurve {
        points,
        auc: area2 as f64 / (2.0 * pos as f64 * neg as f64),
    })
}

fn group_accuracy<K: Ord + Copy>(proba: &[f64], labels: &[PaymentClass], keys: &[K], threshold: f64) -> Result<BTreeMap<K, f64>> {
    check_lengths(proba.len(), labels.len())?;
    if keys.len() != labels.len() {
        return Err(Error::InvalidParameter(format!("{} group keys for {} rows", keys.len(), labels.len())));
    }
    let mut acc: BTreeMap<K, (usize, usize)> = BTreeMap::new();
    for ((p, y), k) in proba.iter().zip(labels).zip(keys) {
        let e = acc.entry(*k).or_default();
        e.0 += ((*p >= threshold) == y.is_late()) as usize;
        e.1 += 1;
    }
    Ok(acc.into_iter().map(|(k, (h, n))| (k, h as f64 / n as f64)).collect())
}

pub fn accuracy_by_month(proba: &[f64], labels: &[PaymentClass], months: &[YearMonth]) -> Result<BTreeMap<YearMonth, f64>> {
    group_accuracy(proba, labels, months, DEFAULT_THRESHOLD)
}

pub fn accuracy_by_region(proba: &[f64], labels: &[PaymentClass], regions: &[Region]) -> Result<BTreeMap<Region, f64>> {
    group_accuracy(proba, labels, regions, DEFAULT_THRESHOLD)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEval {
    pub accuracy: f64,
    pub by_month: BTreeMap<YearMonth, f64>,
    pub by_region: BTreeMap<Region, f64>,
    pub roc: RocCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_test: usize,
    pub baseline: f64,
    pub models: BTreeMap<String, ModelEval>,
}

pub fn evaluate_predictions(proba: &[f64], test_rows: &[FeatureVector], labels: &[PaymentClass]) -> Result<ModelEval> {
    let months: Vec<YearMonth> = test_rows.iter().map(|r| r.creation_month()).collect();
    let regions: Vec<Region> = test_rows.iter().map(|r| r.country.region()).collect();
    Ok(ModelEval {
        accuracy: accuracy(proba, labels, DEFAULT_THRESHOLD)?,
        by_month: accuracy_by_month(proba, labels, &months)?,
        by_region: accuracy_by_region(proba, labels, &regions)?,
        roc: roc_auc(proba, labels)?,
    })
}

/// Evaluates fitted models on the test partition.
pub fn evaluate(models: &[(String, &ScoringModel)], prepared: &Prepared) -> Result<EvalReport> {
    let mut out = BTreeMap::new();
    for (name, m) in models {
        let proba = m.predict_dataset(&prepared.test)?;
        out.insert(name.clone(), evaluate_predictions(&proba, &prepared.test_rows, &prepared.test.y)?);
    }
    Ok(EvalReport {
        n_test: prepared.test.len(),
        baseline: baseline(&prepared.test.y)?,
        models: out,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRow {
    pub trained_on: String,
    pub na: Option<f64>,
    pub la: Option<f64>,
    pub general: Option<f64>,
}

/// Accuracy of models trained on both regions or on one, evaluated on each
/// regional test subset. Untested cells are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionTable {
    pub rows: Vec<RegionRow>,
}

impl RegionTable {
    pub fn to_csv(&self) -> String {
        let cell = |v: Option<f64>| v.map_or("-".to_string(), |a| format!("{a:.6}"));
        let mut s = String::from("trained_on,NA,LA,General\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{},{}\n", r.trained_on, cell(r.na), cell(r.la), cell(r.general)));
        }
        s
    }
}

fn region_subset(rows: &[FeatureVector], data: &Dataset, region: Region) -> (Vec<usize>, Dataset) {
    let idx: Vec<usize> = (0..rows.len()).filter(|&i| rows[i].country.region() == region).collect();
    let d = data.subset(&idx);
    (idx, d)
}

/// Trains on NA+LA, NA only and LA only (same chronological split), and
/// scores each model on the regional test subsets.
pub fn region_robustness_experiment(prepared: &Prepared, params: &ModelParams, seed: u64) -> Result<RegionTable> {
    let (_, train_na) = region_subset(&prepared.train_rows, &prepared.train, Region::NorthAmerica);
    let (_, train_la) = region_subset(&prepared.train_rows, &prepared.train, Region::LatinAmerica);
    let (_, test_na) = region_subset(&prepared.test_rows, &prepared.test, Region::NorthAmerica);
    let (_, test_la) = region_subset(&prepared.test_rows, &prepared.test, Region::LatinAmerica);
    for (name, d) in [("NA train", &train_na), ("LA train", &train_la), ("NA test", &test_na), ("LA test", &test_la)] {
        if d.is_empty() {
            return Err(Error::InsufficientData(format!("{name} partition is empty")));
        }
    }
    let score = |m: &ScoringModel, d: &Dataset| -> Result<f64> { accuracy(&m.predict_dataset(d)?, &d.y, DEFAULT_THRESHOLD) };
    let trains = [&prepared.train, &train_na, &train_la];
    let models: Vec<ScoringModel> = trains
        .par_iter()
        .map(|d| ScoringModel::fit(params, d, seed))
        .collect::<Result<_>>()?;
    let na_only = score(&models[1], &test_na)?;
    let la_only = score(&models[2], &test_la)?;
    Ok(RegionTable {
        rows: vec![
            RegionRow {
                trained_on: "NA+LA".into(),
                na: Some(score(&models[0], &test_na)?),
                la: Some(score(&models[0], &test_la)?),
                general: Some(score(&models[0], &prepared.test)?),
            },
            RegionRow {
                trained_on: "NA".into(),
                na: Some(na_only),
                la: None,
                general: Some(na_only),
            },
            RegionRow {
                trained_on: "LA".into(),
                na: None,
                la: Some(la_only),
                general: Some(la_only),
            },
        ],
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub windows: Vec<u32>,
    pub models: Vec<String>,
    /// `accuracy[m][k]` for model `m` at `windows[k]`.
    pub accuracy: Vec<Vec<f64>>,
    pub best_window: Vec<u32>,
}

impl SweepResult {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("model,w,accuracy\n");
        for (m, row) in self.models.iter().zip(&self.accuracy) {
            for (w, a) in self.windows.iter().zip(row) {
                s.push_str(&format!("{m},{w},{a:.6}\n"));
            }
        }
        s
    }
}

/// Refeaturizes the portfolio for every window, trains each model on the
/// same chronological split and records test accuracy.
pub fn window_sweep(
    invoices: &[Invoice],
    snap: &Snapshot,
    models: &[ModelParams],
    windows: &[WindowSize],
    spec: &SplitSpec,
    seed: u64,
) -> Result<SweepResult> {
    if models.is_empty() || windows.is_empty() {
        return Err(Error::InvalidParameter("window sweep needs models and windows".into()));
    }
    let first = invoices.iter().map(|i| i.creation_date).min();
    let last = invoices.iter().map(|i| i.creation_date).max();
    if let (Some(a), Some(b)) = (first, last) {
        let span = YearMonth::of(a).months_until(YearMonth::of(b)) + 1;
        let need = windows.iter().map(|w| w.months()).max().unwrap() as i32 + 1;
        if span < need {
            return Err(Error::InsufficientData(format!(
                "portfolio spans {span} months, sweep needs at least {need}"
            )));
        }
    } else {
        return Err(Error::InsufficientData("no invoices".into()));
    }
    let prepared: Vec<Prepared> = windows
        .par_iter()
        .map(|&w| prepare(&featurize(invoices, snap, w, GRACE_DAYS)?, spec))
        .collect::<Result<_>>()?;
    let cells: Vec<(usize, usize)> = (0..models.len())
        .flat_map(|m| (0..windows.len()).map(move |k| (m, k)))
        .collect();
    let scores: Vec<f64> = cells
        .par_iter()
        .map(|&(m, k)| {
            let p = &prepared[k];
            let model = ScoringModel::fit(&models[m], &p.train, seed)?;
            accuracy(&model.predict_dataset(&p.test)?, &p.test.y, DEFAULT_THRESHOLD)
        })
        .collect::<Result<_>>()?;
    let ws: Vec<u32> = windows.iter().map(|w| w.months()).collect();
    let accuracy: Vec<Vec<f64>> = scores.chunks(windows.len()).map(|c| c.to_vec()).collect();
    let best_window = accuracy
        .iter()
        .map(|row| {
            let mut best = 0;
            for (k, &a) in row.iter().enumerate() {
                if a > row[best] {
                    best = k;
                }
            }
            ws[best]
        })
        .collect();
    Ok(SweepResult {
        windows: ws,
        models: models.iter().map(|m| m.kind().to_string()).collect(),
        accuracy,
        best_window,
    })
}

/// Convenience for callers that hold feature rows already.
pub fn labeled_dataset(rows: &[FeatureVector]) -> Result<Dataset> {
    dataset(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use PaymentClass::{Late, OnTime};

    #[test]
    fn accuracy_basics() {
        let y = [Late, OnTime, Late, Late];
        assert_eq!(accuracy(&[0.9, 0.1, 0.5, 0.7], &y, 0.5).unwrap(), 1.0);
        assert_eq!(accuracy(&[1.0; 4], &y, 0.5).unwrap(), baseline(&y).unwrap());
        assert!(accuracy(&[], &[], 0.5).is_err());
        assert!(accuracy(&[0.1], &y, 0.5).is_err());
    }

    #[test]
    fn auc_extremes_and_ties() {
        let y = [Late, Late, OnTime, OnTime];
        assert_eq!(roc_auc(&[0.9, 0.8, 0.2, 0.1], &y).unwrap().auc, 1.0);
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &y).unwrap().auc, 0.0);
        let tied = roc_auc(&[0.5; 4], &y).unwrap();
        assert_eq!(tied.auc, 0.5);
        assert_eq!(tied.points, vec![(0.0, 0.0), (1.0, 1.0)]);
        assert!(roc_auc(&[0.1, 0.2], &[Late, Late]).is_err());
    }

    #[test]
    fn month_accuracy_decomposes() {
        let m1 = YearMonth::new(2019, 1).unwrap();
        let m2 = YearMonth::new(2019, 2).unwrap();
        let y = [Late, OnTime, Late, OnTime, Late];
        let p = [0.9, 0.2, 0.1, 0.7, 0.6];
        let months = [m1, m1, m2, m2, m2];
        let by = accuracy_by_month(&p, &y, &months).unwrap();
        assert_eq!(by[&m1], 1.0);
        let weighted = (by[&m1] * 2.0 + by[&m2] * 3.0) / 5.0;
        assert!((weighted - accuracy(&p, &y, 0.5).unwrap()).abs() < 1e-12);
    }
}
