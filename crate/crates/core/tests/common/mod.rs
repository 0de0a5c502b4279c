//! Independent reference implementations used by the integration tests.
//!
//! Everything here recomputes a result from its literal definition with the
//! simplest possible loop, without calling the library routine under test.
#![allow(dead_code)]

use std::collections::BTreeMap;

use arcollect::datagen::{generate_portfolio, Portfolio, PortfolioConfig};
use arcollect::domain::{Country, Invoice, PaymentClass, Usd};
use arcollect::features::{FeatureVector, WindowSize};
use arcollect::models::logistic::{LogisticObjective, LogisticParams};
use arcollect::models::{Dataset, Matrix, Mlp};
use arcollect::pipeline::{featurize_and_prepare, Prepared};
use arcollect::splits::SplitSpec;
use chrono::{Datelike, Duration, NaiveDate};
use rand::Rng;

pub fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

/// Random invoices of one customer spread over 2019-01..2020-06. About a
/// third stay outstanding.
pub fn random_history<R: Rng>(rng: &mut R, customer: &str, n: usize) -> Vec<Invoice> {
    let origin = date(2019, 1, 1);
    (0..n)
        .map(|k| {
            let created = origin + Duration::days(rng.random_range(0..540));
            let due = created + Duration::days([30, 45, 60][rng.random_range(0..3)]);
            let settled = if rng.random_bool(0.3) {
                None
            } else {
                Some(created + Duration::days(rng.random_range(0..120)))
            };
            Invoice::new(
                format!("{customer}-{k:03}"),
                customer,
                Country::Mexico,
                Usd::from_cents(rng.random_range(1..5_000_000)),
                created,
                due,
                settled,
            )
            .unwrap()
        })
        .collect()
}

/// Calendar subtraction of whole months, clamping the day to the target
/// month's length.
fn months_before(d: NaiveDate, months: u32) -> NaiveDate {
    let total = d.year() * 12 + d.month0() as i32 - months as i32;
    let (y, m) = (total.div_euclid(12), total.rem_euclid(12) as u32 + 1);
    let mut day = d.day();
    loop {
        if let Some(x) = NaiveDate::from_ymd_opt(y, m, day) {
            return x;
        }
        day -= 1;
    }
}

fn avg(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn pop_sd(xs: &[f64]) -> Option<f64> {
    let m = avg(xs)?;
    Some((xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64).sqrt())
}

/// Feature vector of `inv` by literal filtering of each pool.
pub fn brute_features(inv: &Invoice, history: &[Invoice], w: u32, grace: i64) -> FeatureVector {
    let r = inv.creation_date;
    let start = months_before(r, w);
    let mut window: Vec<&Invoice> = history
        .iter()
        .filter(|h| h.creation_date >= start && h.creation_date < r)
        .collect();
    // most recent first, ties by larger id first
    window.sort_by(|a, b| (b.creation_date, &b.invoice_id).cmp(&(a.creation_date, &a.invoice_id)));

    let is_paid = |h: &Invoice| matches!(h.settled_date, Some(s) if s < r);
    let paid: Vec<&Invoice> = window.iter().copied().filter(|h| is_paid(h)).collect();
    let outstanding: Vec<&Invoice> = window.iter().copied().filter(|h| !is_paid(h)).collect();
    let paid_late: Vec<&Invoice> = paid
        .iter()
        .copied()
        .filter(|h| (h.settled_date.unwrap() - h.due_date).num_days() > grace)
        .collect();
    let out_late: Vec<&Invoice> = outstanding
        .iter()
        .copied()
        .filter(|h| (r - h.due_date).num_days() > grace)
        .collect();
    let sum = |v: &[&Invoice]| v.iter().fold(Usd::ZERO, |acc, h| acc + h.base_amount);
    let paid_days: Vec<f64> = paid_late
        .iter()
        .map(|h| (h.settled_date.unwrap() - h.due_date).num_days() as f64)
        .collect();
    let out_days: Vec<f64> = out_late.iter().map(|h| (r - h.due_date).num_days() as f64).collect();

    let mut lags = [-1i8; 3];
    for (k, h) in window.iter().take(3).enumerate() {
        lags[k] = if is_paid(h) { 1 } else { 0 };
    }
    let mut settle_days: Vec<NaiveDate> = paid.iter().map(|h| h.settled_date.unwrap()).collect();
    settle_days.sort();
    settle_days.dedup();

    FeatureVector {
        invoice_id: inv.invoice_id.clone(),
        customer_id: inv.customer_id.clone(),
        country: inv.country,
        creation_date: r,
        label: None,
        base_amount: inv.base_amount,
        days_to_due: (inv.due_date - r).num_days(),
        paid_invoice_lag: lags,
        total_paid_invoices: paid.len() as u32,
        sum_amount_paid_invoices: sum(&paid),
        total_invoices_late: paid_late.len() as u32,
        sum_amount_late_invoices: sum(&paid_late),
        total_outstanding_invoices: outstanding.len() as u32,
        total_outstanding_late: out_late.len() as u32,
        sum_total_outstanding: sum(&outstanding),
        sum_late_outstanding: sum(&out_late),
        average_days_late: avg(&paid_days),
        average_days_outstanding_late: avg(&out_days),
        std_dev_invoices_late: pop_sd(&paid_days),
        std_dev_outstanding_late: pop_sd(&out_days),
        payment_frequency_difference: settle_days.len() as u32,
    }
}

/// AUC as the probability that a random late row outscores a random on-time
/// row, ties counting one half.
pub fn mann_whitney_auc(scores: &[f64], labels: &[PaymentClass]) -> f64 {
    let mut wins = 0.0;
    let mut pairs = 0.0;
    for (i, li) in labels.iter().enumerate() {
        if !li.is_late() {
            continue;
        }
        for (j, lj) in labels.iter().enumerate() {
            if lj.is_late() {
                continue;
            }
            pairs += 1.0;
            if scores[i] > scores[j] {
                wins += 1.0;
            } else if scores[i] == scores[j] {
                wins += 0.5;
            }
        }
    }
    wins / pairs
}

/// Kendall tau between two strict orders of the same items, by pair counting.
pub fn kendall_pairs(a: &[String], b: &[String]) -> f64 {
    let pos_b: BTreeMap<&str, usize> = b.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let n = a.len();
    let (mut conc, mut disc) = (0i64, 0i64);
    for i in 0..n {
        for j in i + 1..n {
            if pos_b[a[i].as_str()] < pos_b[a[j].as_str()] {
                conc += 1;
            } else {
                disc += 1;
            }
        }
    }
    (conc - disc) as f64 / (n * (n - 1) / 2) as f64
}

/// Tau-b by pair counting.
pub fn kendall_tau_b_pairs(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len();
    let (mut conc, mut disc, mut tx, mut ty) = (0f64, 0f64, 0f64, 0f64);
    for i in 0..n {
        for j in i + 1..n {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            if dx == 0.0 && dy == 0.0 {
                continue;
            } else if dx == 0.0 {
                tx += 1.0;
            } else if dy == 0.0 {
                ty += 1.0;
            } else if dx.signum() == dy.signum() {
                conc += 1.0;
            } else {
                disc += 1.0;
            }
        }
    }
    (conc - disc) / ((conc + disc + tx) * (conc + disc + ty)).sqrt()
}

/// Spearman correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        (0..v.len())
            .map(|i| {
                let below = v.iter().filter(|&&o| o < v[i]).count() as f64;
                let equal = v.iter().filter(|&&o| o == v[i]).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    }
    let (rx, ry) = (ranks(x), ranks(y));
    let mx = rx.iter().sum::<f64>() / rx.len() as f64;
    let my = ry.iter().sum::<f64>() / ry.len() as f64;
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my) * (b - my)).sum();
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx * vy).sqrt()
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

pub fn portfolio(seed: u64, drift: bool) -> Portfolio {
    let mut cfg = PortfolioConfig::with_seed(seed);
    cfg.drift_enabled = drift;
    generate_portfolio(&cfg).unwrap()
}

pub fn prepared(p: &Portfolio, w: u32) -> Prepared {
    featurize_and_prepare(&p.invoices, &p.snapshot, WindowSize::new(w).unwrap(), &SplitSpec::default()).unwrap()
}

fn random_labels<R: Rng>(rng: &mut R, n: usize) -> Vec<PaymentClass> {
    let mut y: Vec<PaymentClass> = (0..n).map(|_| PaymentClass::from_late(rng.random_bool(0.4))).collect();
    y[0] = PaymentClass::Late;
    y[1] = PaymentClass::OnTime;
    y
}

/// Random score/label set with frequent score ties; both classes present.
pub fn random_scores<R: Rng>(rng: &mut R, n: usize) -> (Vec<f64>, Vec<PaymentClass>) {
    let y = random_labels(rng, n);
    let s = (0..n).map(|_| (rng.random::<f64>() * 20.0).round() / 20.0).collect();
    (s, y)
}

pub fn random_dataset<R: Rng>(rng: &mut R, n: usize, d: usize) -> Dataset {
    let x: Vec<f64> = (0..n * d).map(|_| rng.random_range(-2.0..2.0)).collect();
    let y = random_labels(rng, n);
    Dataset::new((0..d).map(|j| format!("x{j}")).collect(), Matrix::new(n, d, x).unwrap(), y).unwrap()
}

/// Relative error with a small absolute floor for vanishing gradients.
fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}

/// Largest relative error between the analytic logistic gradient and central
/// differences over one random dataset and coefficient vector.
pub fn logistic_gradient_error<R: Rng>(rng: &mut R) -> f64 {
    let (n, d) = (rng.random_range(5..60), rng.random_range(1..6));
    let data = random_dataset(rng, n, d);
    let obj = LogisticObjective::new(&data, &LogisticParams { c: rng.random_range(0.1..5.0), ..Default::default() });
    let beta: Vec<f64> = (0..=d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let (_, grad) = obj.value_and_gradient(&beta);
    let h = 1e-5;
    (0..beta.len())
        .map(|j| {
            let (mut hi, mut lo) = (beta.clone(), beta.clone());
            hi[j] += h;
            lo[j] -= h;
            rel_err(grad[j], (obj.value(&hi) - obj.value(&lo)) / (2.0 * h))
        })
        .fold(0.0, f64::max)
}

/// Same for the network loss over a random minibatch. All parameters,
/// biases included, are drawn at random so no row sits on a ReLU kink.
pub fn mlp_gradient_error<R: Rng>(rng: &mut R) -> f64 {
    let data = random_dataset(rng, 30, 4);
    let mut net = Mlp::init(4, &[6, 5], rng.random());
    let theta: Vec<f64> = (0..net.n_params()).map(|_| rng.random_range(-1.0..1.0)).collect();
    net.set_params_flat(&theta);
    let late: Vec<bool> = data.y.iter().map(|c| c.is_late()).collect();
    let mut rows: Vec<usize> = (0..30).filter(|_| rng.random_bool(0.6)).collect();
    rows.push(0);
    let (_, grad) = net.loss_and_grad(&data.x, &late, &rows, 1.5);
    let h = 1e-6;
    let mut probe = net.clone();
    (0..theta.len())
        .map(|j| {
            let mut t = theta.clone();
            t[j] += h;
            probe.set_params_flat(&t);
            let up = probe.loss_and_grad(&data.x, &late, &rows, 1.5).0;
            t[j] -= 2.0 * h;
            probe.set_params_flat(&t);
            let down = probe.loss_and_grad(&data.x, &late, &rows, 1.5).0;
            rel_err(grad[j], (up - down) / (2.0 * h))
        })
        .fold(0.0, f64::max)
}
