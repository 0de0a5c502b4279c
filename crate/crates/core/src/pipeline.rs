//! Shared featurize, split, impute and fit steps.

use crate::domain::{Invoice, Snapshot, GRACE_DAYS};
use crate::error::{Error, Result};
use crate::features::{featurize, fit_imputation, impute, FeatureVector, ImputationStats, WindowSize, FEATURE_COLUMNS};
use crate::models::{Dataset, Matrix, ModelParams, ScoringModel};
use crate::splits::{time_split, Split, SplitSpec};

pub fn feature_columns() -> Vec<String> {
    FEATURE_COLUMNS.iter().map(|c| c.to_string()).collect()
}

/// Design matrix of imputed, labeled rows.
pub fn dataset(rows: &[FeatureVector]) -> Result<Dataset> {
    let mut data = Vec::with_capacity(rows.len() * FEATURE_COLUMNS.len());
    let mut y = Vec::with_capacity(rows.len());
    for r in rows {
        let inputs = r.model_inputs().ok_or_else(|| {
            Error::InvalidParameter(format!("invoice {} still has missing features", r.invoice_id))
        })?;
        let label = r
            .label
            .ok_or_else(|| Error::InvalidParameter(format!("invoice {} has no label", r.invoice_id)))?;
        data.extend(inputs);
        y.push(label);
    }
    Dataset::new(feature_columns(), Matrix::new(rows.len(), FEATURE_COLUMNS.len(), data)?, y)
}

/// Unlabeled design matrix, for scoring.
pub fn input_matrix(rows: &[FeatureVector]) -> Result<Matrix> {
    let mut data = Vec::with_capacity(rows.len() * FEATURE_COLUMNS.len());
    for r in rows {
        data.extend(r.model_inputs().ok_or_else(|| {
            Error::InvalidParameter(format!("invoice {} still has missing features", r.invoice_id))
        })?);
    }
    Matrix::new(rows.len(), FEATURE_COLUMNS.len(), data)
}

/// Imputed train and test partitions of one featurized portfolio.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train_rows: Vec<FeatureVector>,
    pub test_rows: Vec<FeatureVector>,
    pub imputation: ImputationStats,
    pub split: Split,
    pub train: Dataset,
    pub test: Dataset,
}

/// Splits labeled rows chronologically and imputes both sides with training
/// means.
pub fn prepare(rows: &[FeatureVector], spec: &SplitSpec) -> Result<Prepared> {
    prepare_with_split(rows, time_split(rows, spec)?)
}

/// Like [`prepare`] for a partition computed elsewhere.
pub fn prepare_with_split(rows: &[FeatureVector], split: Split) -> Result<Prepared> {
    if split.train.iter().chain(&split.test).any(|&i| i >= rows.len()) {
        return Err(Error::InvalidParameter("split refers to rows that do not exist".into()));
    }
    let raw_train: Vec<FeatureVector> = split.train.iter().map(|&i| rows[i].clone()).collect();
    let imputation = fit_imputation(&raw_train)?;
    let train_rows: Vec<FeatureVector> = raw_train.iter().map(|r| impute(r, &imputation)).collect();
    let test_rows: Vec<FeatureVector> = split.test.iter().map(|&i| impute(&rows[i], &imputation)).collect();
    Ok(Prepared {
        train: dataset(&train_rows)?,
        test: dataset(&test_rows)?,
        train_rows,
        test_rows,
        imputation,
        split,
    })
}

pub fn featurize_and_prepare(invoices: &[Invoice], snap: &Snapshot, w: WindowSize, spec: &SplitSpec) -> Result<Prepared> {
    let rows = featurize(invoices, snap, w, GRACE_DAYS)?;
    prepare(&rows, spec)
}

/// Fits on the training partition and returns test probabilities.
pub fn fit_and_score(params: &ModelParams, prepared: &Prepared, seed: u64) -> Result<(ScoringModel, Vec<f64>)> {
    let model = ScoringModel::fit(params, &prepared.train, seed)?;
    let proba = model.predict_dataset(&prepared.test)?;
    Ok((model, proba))
}
