//! Invoice-level fields plus windowed customer-history aggregates.
//!
//! For an invoice created on `ref_date`, only the customer's invoices created
//! in `[ref_date - w months, ref_date)` participate. An invoice counts as paid
//! when it settled strictly before `ref_date`; otherwise it is outstanding.
//! Nothing dated on or after `ref_date` is observable.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Months, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{label_invoice, Country, Invoice, PaymentClass, Snapshot, Usd, YearMonth};
use crate::error::{Error, Result};
use crate::stats::{mean, population_std};

/// History window in months, within [3, 12].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct WindowSize(u32);

impl WindowSize {
    pub const MIN: u32 = 3;
    pub const MAX: u32 = 12;

    pub fn new(months: u32) -> Result<Self> {
        if (Self::MIN..=Self::MAX).contains(&months) {
            Ok(WindowSize(months))
        } else {
            Err(Error::WindowSize(months))
        }
    }

    pub fn months(self) -> u32 {
        self.0
    }

    pub fn all() -> impl Iterator<Item = WindowSize> {
        (Self::MIN..=Self::MAX).map(WindowSize)
    }

    /// First day included in the window ending (exclusive) at `ref_date`.
    pub fn start(self, ref_date: NaiveDate) -> NaiveDate {
        ref_date
            .checked_sub_months(Months::new(self.0))
            .expect("date within chrono range")
    }
}

impl TryFrom<u32> for WindowSize {
    type Error = Error;
    fn try_from(v: u32) -> Result<Self> {
        WindowSize::new(v)
    }
}

impl From<WindowSize> for u32 {
    fn from(w: WindowSize) -> u32 {
        w.0
    }
}

impl Default for WindowSize {
    fn default() -> Self {
        WindowSize(4)
    }
}

/// Lag value for a prior invoice that was paid before the reference date.
pub const LAG_PAID: i8 = 1;
pub const LAG_UNPAID: i8 = 0;
/// Lag value when the customer has fewer prior invoices in the window.
pub const LAG_NULL: i8 = -1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub invoice_id: String,
    pub customer_id: String,
    pub country: Country,
    pub creation_date: NaiveDate,
    pub label: Option<PaymentClass>,
    pub base_amount: Usd,
    pub days_to_due: i64,
    pub paid_invoice_lag: [i8; 3],
    pub total_paid_invoices: u32,
    pub sum_amount_paid_invoices: Usd,
    pub total_invoices_late: u32,
    pub sum_amount_late_invoices: Usd,
    pub total_outstanding_invoices: u32,
    pub total_outstanding_late: u32,
    pub sum_total_outstanding: Usd,
    pub sum_late_outstanding: Usd,
    pub average_days_late: Option<f64>,
    pub average_days_outstanding_late: Option<f64>,
    pub std_dev_invoices_late: Option<f64>,
    pub std_dev_outstanding_late: Option<f64>,
    pub payment_frequency_difference: u32,
}

/// Model input columns in matrix order.
pub const FEATURE_COLUMNS: [&str; 25] = [
    "base_amount",
    "days_to_due",
    "paid_invoice_lag1",
    "paid_invoice_lag2",
    "paid_invoice_lag3",
    "total_paid_invoices",
    "sum_amount_paid_invoices",
    "total_invoices_late",
    "sum_amount_late_invoices",
    "total_outstanding_invoices",
    "total_outstanding_late",
    "sum_total_outstanding",
    "sum_late_outstanding",
    "average_days_late",
    "average_days_outstanding_late",
    "std_dev_invoices_late",
    "std_dev_outstanding_late",
    "payment_frequency_difference",
    "country_US",
    "country_AR",
    "country_BR",
    "country_CL",
    "country_CO",
    "country_EC",
    "country_MX",
];

impl FeatureVector {
    pub fn creation_month(&self) -> YearMonth {
        YearMonth::of(self.creation_date)
    }

    pub fn country_onehot(&self) -> [f64; 7] {
        let mut v = [0.0; 7];
        v[self.country.index()] = 1.0;
        v
    }

    pub fn has_missing(&self) -> bool {
        self.average_days_late.is_none()
            || self.average_days_outstanding_late.is_none()
            || self.std_dev_invoices_late.is_none()
            || self.std_dev_outstanding_late.is_none()
    }

    /// Model inputs in [`FEATURE_COLUMNS`] order; `None` while any value is
    /// still missing.
    pub fn model_inputs(&self) -> Option<Vec<f64>> {
        let mut v = Vec::with_capacity(FEATURE_COLUMNS.len());
        v.push(self.base_amount.as_f64());
        v.push(self.days_to_due as f64);
        v.extend(self.paid_invoice_lag.iter().map(|&l| l as f64));
        v.push(self.total_paid_invoices as f64);
        v.push(self.sum_amount_paid_invoices.as_f64());
        v.push(self.total_invoices_late as f64);
        v.push(self.sum_amount_late_invoices.as_f64());
        v.push(self.total_outstanding_invoices as f64);
        v.push(self.total_outstanding_late as f64);
        v.push(self.sum_total_outstanding.as_f64());
        v.push(self.sum_late_outstanding.as_f64());
        v.push(self.average_days_late?);
        v.push(self.average_days_outstanding_late?);
        v.push(self.std_dev_invoices_late?);
        v.push(self.std_dev_outstanding_late?);
        v.push(self.payment_frequency_difference as f64);
        v.extend(self.country_onehot());
        Some(v)
    }
}

/// Computes the pre-imputation feature vector of `inv`.
///
/// `history` may contain any invoices of the same customer, including `inv`
/// itself and invoices created later; they are filtered by the window.
pub fn compute_features(
    inv: &Invoice,
    history: &[Invoice],
    w: WindowSize,
    grace_days: i64,
) -> Result<FeatureVector> {
    compute_features_refs(inv, history.iter(), w, grace_days)
}

fn compute_features_refs<'a>(
    inv: &Invoice,
    history: impl Iterator<Item = &'a Invoice>,
    w: WindowSize,
    grace_days: i64,
) -> Result<FeatureVector> {
    let ref_date = inv.creation_date;
    let start = w.start(ref_date);

    let mut pool: Vec<&Invoice> = Vec::new();
    for h in history {
        if h.customer_id != inv.customer_id {
            return Err(Error::ForeignHistory {
                expected: inv.customer_id.clone(),
                found: h.customer_id.clone(),
                invoice_id: h.invoice_id.clone(),
            });
        }
        if h.creation_date >= start && h.creation_date < ref_date {
            pool.push(h);
        }
    }
    // Most recent first; ties by descending id.
    pool.sort_by(|a, b| {
        b.creation_date
            .cmp(&a.creation_date)
            .then_with(|| b.invoice_id.cmp(&a.invoice_id))
    });

    let mut fv = FeatureVector {
        invoice_id: inv.invoice_id.clone(),
        customer_id: inv.customer_id.clone(),
        country: inv.country,
        creation_date: inv.creation_date,
        label: None,
        base_amount: inv.base_amount,
        days_to_due: (inv.due_date - inv.creation_date).num_days(),
        paid_invoice_lag: [LAG_NULL; 3],
        total_paid_invoices: 0,
        sum_amount_paid_invoices: Usd::ZERO,
        total_invoices_late: 0,
        sum_amount_late_invoices: Usd::ZERO,
        total_outstanding_invoices: 0,
        total_outstanding_late: 0,
        sum_total_outstanding: Usd::ZERO,
        sum_late_outstanding: Usd::ZERO,
        average_days_late: None,
        average_days_outstanding_late: None,
        std_dev_invoices_late: None,
        std_dev_outstanding_late: None,
        payment_frequency_difference: 0,
    };

    let mut paid_late_days = Vec::new();
    let mut outstanding_late_days = Vec::new();
    let mut settle_dates = Vec::new();
    for (i, h) in pool.iter().enumerate() {
        let paid_by_ref = h.settled_date.filter(|&s| s < ref_date);
        if i < 3 {
            fv.paid_invoice_lag[i] = if paid_by_ref.is_some() { LAG_PAID } else { LAG_UNPAID };
        }
        match paid_by_ref {
            Some(settled) => {
                fv.total_paid_invoices += 1;
                fv.sum_amount_paid_invoices += h.base_amount;
                settle_dates.push(settled);
                let days_late = (settled - h.due_date).num_days();
                if days_late > grace_days {
                    fv.total_invoices_late += 1;
                    fv.sum_amount_late_invoices += h.base_amount;
                    paid_late_days.push(days_late as f64);
                }
            }
            None => {
                fv.total_outstanding_invoices += 1;
                fv.sum_total_outstanding += h.base_amount;
                let days_late = (ref_date - h.due_date).num_days();
                if days_late > grace_days {
                    fv.total_outstanding_late += 1;
                    fv.sum_late_outstanding += h.base_amount;
                    outstanding_late_days.push(days_late as f64);
                }
            }
        }
    }
    settle_dates.sort_unstable();
    settle_dates.dedup();
    fv.payment_frequency_difference = settle_dates.len() as u32;
    fv.average_days_late = mean(&paid_late_days);
    fv.std_dev_invoices_late = population_std(&paid_late_days);
    fv.average_days_outstanding_late = mean(&outstanding_late_days);
    fv.std_dev_outstanding_late = population_std(&outstanding_late_days);
    Ok(fv)
}

/// Featurizes every invoice, labeled as of `snap`, in (creation_date,
/// invoice_id) order. Unresolvable invoices keep `label: None`.
pub fn featurize_all(
    invoices: &[Invoice],
    snap: &Snapshot,
    w: WindowSize,
    grace_days: i64,
) -> Result<Vec<FeatureVector>> {
    let mut by_customer: BTreeMap<&str, Vec<&Invoice>> = BTreeMap::new();
    for inv in invoices {
        by_customer.entry(inv.customer_id.as_str()).or_default().push(inv);
    }
    for hist in by_customer.values_mut() {
        hist.sort_by_key(|i| i.creation_date);
    }
    let mut order: Vec<&Invoice> = invoices.iter().collect();
    order.sort_by(|a, b| {
        a.creation_date
            .cmp(&b.creation_date)
            .then_with(|| a.invoice_id.cmp(&b.invoice_id))
    });
    order
        .par_iter()
        .map(|inv| {
            let hist = &by_customer[inv.customer_id.as_str()];
            let start = w.start(inv.creation_date);
            let lo = hist.partition_point(|h| h.creation_date < start);
            let hi = hist.partition_point(|h| h.creation_date < inv.creation_date);
            let mut fv = compute_features_refs(inv, hist[lo..hi].iter().copied(), w, grace_days)?;
            fv.label = label_invoice(inv, snap, grace_days)?;
            Ok(fv)
        })
        .collect()
}

/// Like [`featurize_all`] but keeps only resolvable (labeled) invoices.
pub fn featurize(invoices: &[Invoice], snap: &Snapshot, w: WindowSize, grace_days: i64) -> Result<Vec<FeatureVector>> {
    let mut rows = featurize_all(invoices, snap, w, grace_days)?;
    rows.retain(|r| r.label.is_some());
    Ok(rows)
}

/// Training means of the features that can be missing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImputationStats {
    pub average_days_late: f64,
    pub average_days_outstanding_late: f64,
    pub std_dev_invoices_late: f64,
    pub std_dev_outstanding_late: f64,
}

type Getter = fn(&FeatureVector) -> Option<f64>;

const IMPUTABLE: [(&str, Getter); 4] = [
    ("average_days_late", |f| f.average_days_late),
    ("average_days_outstanding_late", |f| f.average_days_outstanding_late),
    ("std_dev_invoices_late", |f| f.std_dev_invoices_late),
    ("std_dev_outstanding_late", |f| f.std_dev_outstanding_late),
];

pub fn fit_imputation(train_rows: &[FeatureVector]) -> Result<ImputationStats> {
    if train_rows.is_empty() {
        return Err(Error::InsufficientData("imputation needs at least one training row".into()));
    }
    let means: Vec<f64> = IMPUTABLE
        .iter()
        .map(|&(name, get)| {
            let present: Vec<f64> = train_rows.iter().filter_map(get).collect();
            mean(&present).unwrap_or_else(|| {
                log::warn!("feature {name} is missing in every training row; imputing 0");
                0.0
            })
        })
        .collect();
    Ok(ImputationStats {
        average_days_late: means[0],
        average_days_outstanding_late: means[1],
        std_dev_invoices_late: means[2],
        std_dev_outstanding_late: means[3],
    })
}

/// Replaces missing averages and deviations by the training means. Counts
/// and sums are never missing by construction.
pub fn impute(fv: &FeatureVector, stats: &ImputationStats) -> FeatureVector {
    let mut out = fv.clone();
    out.average_days_late.get_or_insert(stats.average_days_late);
    out.average_days_outstanding_late
        .get_or_insert(stats.average_days_outstanding_late);
    out.std_dev_invoices_late.get_or_insert(stats.std_dev_invoices_late);
    out.std_dev_outstanding_late.get_or_insert(stats.std_dev_outstanding_late);
    out
}

const META_COLUMNS: [&str; 4] = ["invoice_id", "customer_id", "country", "creation_date"];
const LABEL_COLUMN: &str = "label";

/// Header of the feature matrix CSV: metadata, model inputs, label last.
pub fn feature_csv_header() -> Vec<&'static str> {
    META_COLUMNS
        .iter()
        .chain(FEATURE_COLUMNS.iter())
        .chain(std::iter::once(&LABEL_COLUMN))
        .copied()
        .collect()
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_features<W: Write>(rows: &[FeatureVector], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(feature_csv_header())?;
    for r in rows {
        let mut rec: Vec<String> = vec![
            r.invoice_id.clone(),
            r.customer_id.clone(),
            r.country.code().to_string(),
            r.creation_date.to_string(),
            r.base_amount.to_string(),
            r.days_to_due.to_string(),
        ];
        rec.extend(r.paid_invoice_lag.iter().map(|l| l.to_string()));
        rec.extend([
            r.total_paid_invoices.to_string(),
            r.sum_amount_paid_invoices.to_string(),
            r.total_invoices_late.to_string(),
            r.sum_amount_late_invoices.to_string(),
            r.total_outstanding_invoices.to_string(),
            r.total_outstanding_late.to_string(),
            r.sum_total_outstanding.to_string(),
            r.sum_late_outstanding.to_string(),
            opt(r.average_days_late),
            opt(r.average_days_outstanding_late),
            opt(r.std_dev_invoices_late),
            opt(r.std_dev_outstanding_late),
            r.payment_frequency_difference.to_string(),
        ]);
        rec.extend(r.country_onehot().iter().map(|x| x.to_string()));
        rec.push(r.label.map(|l| l.to_string()).unwrap_or_default());
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn read_features<R: Read>(reader: R, origin: &Path) -> Result<Vec<FeatureVector>> {
    let mut r = csv::Reader::from_reader(reader);
    let header = r.headers()?.clone();
    let expected = feature_csv_header();
    if header.iter().ne(expected.iter().copied()) {
        return Err(Error::Schema {
            path: origin.to_path_buf(),
            reason: format!("expected header `{}`", expected.join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let err = |col: usize, msg: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            reason: format!("column {}: {msg}", expected[col]),
        };
        macro_rules! num {
            ($col:expr, $t:ty) => {
                rec[$col]
                    .parse::<$t>()
                    .map_err(|e| err($col, format!("`{}`: {e}", &rec[$col])))?
            };
        }
        let usd = |col: usize| rec[col].parse::<Usd>().map_err(|e| err(col, e));
        let optf = |col: usize| -> Result<Option<f64>> {
            match &rec[col] {
                "" => Ok(None),
                s => s.parse().map(Some).map_err(|e| err(col, format!("`{s}`: {e}"))),
            }
        };
        let fv = FeatureVector {
            invoice_id: rec[0].to_string(),
            customer_id: rec[1].to_string(),
            country: rec[2].parse().map_err(|e| err(2, e))?,
            creation_date: num!(3, NaiveDate),
            base_amount: usd(4)?,
            days_to_due: num!(5, i64),
            paid_invoice_lag: [num!(6, i8), num!(7, i8), num!(8, i8)],
            total_paid_invoices: num!(9, u32),
            sum_amount_paid_invoices: usd(10)?,
            total_invoices_late: num!(11, u32),
            sum_amount_late_invoices: usd(12)?,
            total_outstanding_invoices: num!(13, u32),
            total_outstanding_late: num!(14, u32),
            sum_total_outstanding: usd(15)?,
            sum_late_outstanding: usd(16)?,
            average_days_late: optf(17)?,
            average_days_outstanding_late: optf(18)?,
            std_dev_invoices_late: optf(19)?,
            std_dev_outstanding_late: optf(20)?,
            payment_frequency_difference: num!(21, u32),
            label: match &rec[expected.len() - 1] {
                "" => None,
                s => Some(s.parse().map_err(|e| err(expected.len() - 1, e))?),
            },
        };
        if fv.paid_invoice_lag.iter().any(|l| !(-1..=1).contains(l)) {
            return Err(err(6, "lags must be in {-1, 0, 1}".into()));
        }
        let onehot: Vec<f64> = (22..29).map(|c| Ok(num!(c, f64))).collect::<Result<_>>()?;
        if onehot != fv.country_onehot() {
            return Err(err(22, "one-hot columns disagree with country".into()));
        }
        out.push(fv);
    }
    Ok(out)
}
