//! Chronological train/test partitioning and expanding-window CV folds.
//!
//! Rows are ordered by (creation_date, id); ids break date ties so every
//! partition is reproducible regardless of input order.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::domain::Invoice;
use crate::error::{Error, Result};
use crate::features::FeatureVector;

pub trait Dated {
    fn creation_date(&self) -> NaiveDate;
    fn row_id(&self) -> &str;
}

impl Dated for Invoice {
    fn creation_date(&self) -> NaiveDate {
        self.creation_date
    }
    fn row_id(&self) -> &str {
        &self.invoice_id
    }
}

impl Dated for FeatureVector {
    fn creation_date(&self) -> NaiveDate {
        self.creation_date
    }
    fn row_id(&self) -> &str {
        &self.invoice_id
    }
}

impl<T: Dated> Dated for &T {
    fn creation_date(&self) -> NaiveDate {
        (*self).creation_date()
    }
    fn row_id(&self) -> &str {
        (*self).row_id()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitSpec {
    /// Train on rows created strictly before the date.
    CutoffDate(NaiveDate),
    /// Train on the first fraction of rows in chronological order.
    TrainFraction(f64),
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec::TrainFraction(0.7)
    }
}

/// Indices into the input rows, each side in chronological order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

pub fn chronological_order<T: Dated>(rows: &[T]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..rows.len()).collect();
    idx.sort_by(|&a, &b| {
        rows[a]
            .creation_date()
            .cmp(&rows[b].creation_date())
            .then_with(|| rows[a].row_id().cmp(rows[b].row_id()))
    });
    idx
}

pub fn time_split<T: Dated>(rows: &[T], spec: &SplitSpec) -> Result<Split> {
    if rows.is_empty() {
        return Err(Error::InsufficientData("cannot split an empty row set".into()));
    }
    let order = chronological_order(rows);
    let n_train = match *spec {
        SplitSpec::CutoffDate(cutoff) => {
            let first = rows[order[0]].creation_date();
            let last = rows[order[order.len() - 1]].creation_date();
            if cutoff <= first || cutoff > last {
                return Err(Error::CutoffOutOfRange { cutoff, first, last });
            }
            order.partition_point(|&i| rows[i].creation_date() < cutoff)
        }
        SplitSpec::TrainFraction(f) => {
            if !(f > 0.0 && f < 1.0) {
                return Err(Error::InvalidParameter(format!("train_fraction {f} outside (0, 1)")));
            }
            let n = (f * rows.len() as f64).round() as usize;
            if n == 0 || n == rows.len() {
                return Err(Error::InsufficientData(format!(
                    "train_fraction {f} of {} rows leaves an empty partition",
                    rows.len()
                )));
            }
            n
        }
    };
    let (train, test) = order.split_at(n_train);
    Ok(Split {
        train: train.to_vec(),
        test: test.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CvFolds {
    pub k: usize,
    pub folds: Vec<Fold>,
}

/// Expanding-window folds: the chronology is cut into `k + 1` blocks and fold
/// `i` trains on blocks `1..=i` and validates on block `i + 1`. A boundary
/// falling inside a run of equal creation dates moves forward past the run so
/// no validation row shares a date with its training rows.
pub fn time_series_folds<T: Dated>(train_rows: &[T], k: usize) -> Result<CvFolds> {
    if k < 2 {
        return Err(Error::InvalidParameter(format!("fold count {k} must be >= 2")));
    }
    let n = train_rows.len();
    if n < 2 * k {
        return Err(Error::InsufficientData(format!(
            "{n} rows are too few for {k} folds (need >= {})",
            2 * k
        )));
    }
    let order = chronological_order(train_rows);
    let date = |pos: usize| train_rows[order[pos]].creation_date();
    let block = n / (k + 1);
    let first = n - k * block;
    let mut bounds = Vec::with_capacity(k + 1);
    for i in 0..k {
        let mut b = first + i * block;
        while b < n && date(b - 1) == date(b) {
            b += 1;
        }
        bounds.push(b);
    }
    bounds.push(n);
    if bounds.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InsufficientData(format!(
            "creation-date ties leave an empty validation block for k = {k}"
        )));
    }
    let folds = (0..k)
        .map(|i| Fold {
            train: order[..bounds[i]].to_vec(),
            validation: order[bounds[i]..bounds[i + 1]].to_vec(),
        })
        .collect();
    Ok(CvFolds { k, folds })
}

/// Audit record of a train/test partition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitManifest {
    pub spec: SplitSpec,
    pub train_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

impl SplitManifest {
    pub fn new<T: Dated>(rows: &[T], spec: SplitSpec, split: &Split) -> Self {
        let ids = |idx: &[usize]| idx.iter().map(|&i| rows[i].row_id().to_string()).collect();
        SplitManifest {
            spec,
            train_ids: ids(&split.train),
            test_ids: ids(&split.test),
        }
    }
}
