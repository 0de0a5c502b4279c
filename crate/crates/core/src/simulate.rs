//! Monte-Carlo comparison of collection policies.
//!
//! Each month collectors call the top `n` customers of a ranking, made at the
//! start of the month over the invoices created in it. A contacted
//! customer's truly late invoices are recovered with probability `p`; on-time
//! invoices are collected whatever happens. Both policies read the same
//! uniform draw for a given invoice, so differences are paired and `p = 0`
//! gives exactly zero.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{Invoice, Usd, YearMonth};
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::ranking::{
    greedy_order, overdue_balances, rank_customers_by_risk, rank_customers_greedy, risk_order, ScoredInvoice,
};
use crate::stats::{mean, median, quantile};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub n_calls: Vec<usize>,
    pub p_grid: Vec<f64>,
    pub runs: usize,
    /// Months to simulate; empty means every month present in the data.
    pub months: Vec<YearMonth>,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            n_calls: vec![100, 200, 300],
            p_grid: (0..=10).map(|i| i as f64 / 10.0).collect(),
            runs: 100,
            months: Vec::new(),
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_calls.is_empty() || self.n_calls.contains(&0) {
            return Err(Error::Config("simulation.n_calls must be non-empty and >= 1".into()));
        }
        if self.p_grid.is_empty() || self.p_grid.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Config("simulation.p_grid values must lie in [0, 1]".into()));
        }
        if self.runs == 0 {
            return Err(Error::Config("simulation.runs must be >= 1".into()));
        }
        Ok(())
    }
}

/// A simulated invoice: model probability plus its true outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimInvoice {
    pub invoice_id: String,
    pub customer_id: String,
    pub month: YearMonth,
    pub value: Usd,
    pub p_late: f64,
    pub late: bool,
}

/// Pairs labeled feature rows with model probabilities.
pub fn sim_invoices(rows: &[FeatureVector], proba: &[f64]) -> Result<Vec<SimInvoice>> {
    if rows.len() != proba.len() {
        return Err(Error::InvalidParameter(format!("{} rows but {} probabilities", rows.len(), proba.len())));
    }
    rows.iter()
        .zip(proba)
        .map(|(r, &p)| {
            let label = r
                .label
                .ok_or_else(|| Error::InvalidParameter(format!("invoice {} has no label", r.invoice_id)))?;
            Ok(SimInvoice {
                invoice_id: r.invoice_id.clone(),
                customer_id: r.customer_id.clone(),
                month: r.creation_month(),
                value: r.base_amount,
                p_late: p,
                late: label.is_late(),
            })
        })
        .collect()
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Uniform in [0, 1) addressed by (seed, month, run, invoice index).
pub fn contact_draw(seed: u64, month: YearMonth, run: usize, invoice: usize) -> f64 {
    let mut h = splitmix(seed);
    for part in [month.year as u64 * 12 + month.month as u64, run as u64, invoice as u64] {
        h = splitmix(h ^ part);
    }
    (h >> 11) as f64 / (1u64 << 53) as f64
}

/// One month's invoices with both rankings resolved to invoice positions.
#[derive(Debug, Clone)]
pub struct MonthPlan {
    pub month: YearMonth,
    pub invoices: Vec<SimInvoice>,
    /// Invoice positions per customer, customers in risk order.
    risk: Vec<Vec<usize>>,
    greedy: Vec<Vec<usize>>,
    on_time_value: Usd,
}

impl MonthPlan {
    /// `overdue` holds customer balances past due at the start of the month.
    pub fn new(month: YearMonth, invoices: Vec<SimInvoice>, overdue: &HashMap<String, Usd>) -> Result<Self> {
        let scored: Vec<ScoredInvoice> = invoices
            .iter()
            .map(|i| ScoredInvoice {
                invoice_id: i.invoice_id.clone(),
                customer_id: i.customer_id.clone(),
                value: i.value,
                p_late: i.p_late,
            })
            .collect();
        let mut members: HashMap<&str, Vec<usize>> = HashMap::new();
        for (k, inv) in invoices.iter().enumerate() {
            members.entry(inv.customer_id.as_str()).or_default().push(k);
        }
        let resolve = |order: Vec<String>| -> Vec<Vec<usize>> { order.iter().map(|c| members[c.as_str()].clone()).collect() };
        let risk = resolve(risk_order(&rank_customers_by_risk(&scored)?));
        let greedy = resolve(greedy_order(&rank_customers_greedy(&scored, overdue)?));
        let on_time_value = invoices.iter().filter(|i| !i.late).map(|i| i.value).sum();
        Ok(MonthPlan {
            month,
            risk,
            greedy,
            on_time_value,
            invoices,
        })
    }

    pub fn n_customers(&self) -> usize {
        self.risk.len()
    }

    pub fn total_value(&self) -> Usd {
        self.invoices.iter().map(|i| i.value).sum()
    }

    pub fn late_value(&self) -> Usd {
        self.invoices.iter().filter(|i| i.late).map(|i| i.value).sum()
    }

    fn collected(&self, order: &[Vec<usize>], n: usize, p: f64, draw: &dyn Fn(usize) -> f64) -> Usd {
        let mut total = self.on_time_value;
        for cust in order.iter().take(n) {
            for &k in cust {
                let inv = &self.invoices[k];
                if inv.late && draw(k) < p {
                    total += inv.value;
                }
            }
        }
        total
    }

    /// Money collected under the (risk, greedy) rankings. `draw(k)` is the
    /// uniform for invoice `k`; both policies see the same value.
    pub fn simulate(&self, n: usize, p: f64, draw: &dyn Fn(usize) -> f64) -> (Usd, Usd) {
        if n > self.n_customers() {
            log::debug!("{}: n = {n} exceeds {} customers, contacting all", self.month, self.n_customers());
        }
        (self.collected(&self.risk, n, p, draw), self.collected(&self.greedy, n, p, draw))
    }
}

/// Collected money under the risk and greedy rankings for one month and run.
pub fn simulate_month(
    invoices: &[SimInvoice],
    overdue: &HashMap<String, Usd>,
    n: usize,
    p: f64,
    seed: u64,
    run: usize,
) -> Result<(Usd, Usd)> {
    let Some(first) = invoices.first() else {
        return Ok((Usd::ZERO, Usd::ZERO));
    };
    let plan = MonthPlan::new(first.month, invoices.to_vec(), overdue)?;
    Ok(plan.simulate(n, p, &|k| contact_draw(seed, plan.month, run, k)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimCell {
    pub month: YearMonth,
    pub n: usize,
    pub p: f64,
    /// Risk-ranking minus greedy collections per run.
    pub savings_diff: Vec<Usd>,
    pub summary: CellSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthInfo {
    pub month: YearMonth,
    pub n_invoices: usize,
    pub n_customers: usize,
    pub total_value: Usd,
    pub late_value: Usd,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub config: SimConfig,
    pub months: Vec<MonthInfo>,
    pub cells: Vec<SimCell>,
}

fn summarize(diffs: &[Usd]) -> CellSummary {
    let xs: Vec<f64> = diffs.iter().map(|d| d.as_f64()).collect();
    CellSummary {
        mean: mean(&xs).unwrap_or(0.0),
        median: median(&xs).unwrap_or(0.0),
        q1: quantile(&xs, 0.25).unwrap_or(0.0),
        q3: quantile(&xs, 0.75).unwrap_or(0.0),
    }
}

/// Runs the whole (month, n, p) grid. `history` is the full invoice ledger,
/// used for overdue balances. Cells are independent and each run's draws are
/// addressed by counters, so the result does not depend on scheduling.
pub fn run_simulation(invoices: &[SimInvoice], history: &[Invoice], cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let mut by_month: BTreeMap<YearMonth, Vec<SimInvoice>> = BTreeMap::new();
    for inv in invoices {
        by_month.entry(inv.month).or_default().push(inv.clone());
    }
    let months: Vec<YearMonth> = if cfg.months.is_empty() {
        by_month.keys().copied().collect()
    } else {
        cfg.months.clone()
    };
    let mut plans = Vec::with_capacity(months.len());
    for m in &months {
        let invs = by_month
            .remove(m)
            .ok_or_else(|| Error::InsufficientData(format!("no invoices created in {m}")))?;
        plans.push(MonthPlan::new(*m, invs, &overdue_balances(history, m.first_day()))?);
    }
    let mut keys = Vec::new();
    for (mi, _) in plans.iter().enumerate() {
        for &n in &cfg.n_calls {
            for &p in &cfg.p_grid {
                keys.push((mi, n, p));
            }
        }
    }
    let cells = keys
        .par_iter()
        .map(|&(mi, n, p)| {
            let plan = &plans[mi];
            let savings_diff: Vec<Usd> = (0..cfg.runs)
                .map(|run| {
                    let (model, greedy) = plan.simulate(n, p, &|k| contact_draw(cfg.seed, plan.month, run, k));
                    Usd::from_cents(model.cents() - greedy.cents())
                })
                .collect();
            SimCell {
                month: plan.month,
                n,
                p,
                summary: summarize(&savings_diff),
                savings_diff,
            }
        })
        .collect();
    Ok(SimResult {
        config: cfg.clone(),
        months: plans
            .iter()
            .map(|pl| MonthInfo {
                month: pl.month,
                n_invoices: pl.invoices.len(),
                n_customers: pl.n_customers(),
                total_value: pl.total_value(),
                late_value: pl.late_value(),
            })
            .collect(),
        cells,
    })
}

impl SimResult {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["month", "n", "p", "run", "savings_diff"])?;
        for c in &self.cells {
            for (run, d) in c.savings_diff.iter().enumerate() {
                w.write_record([c.month.to_string(), c.n.to_string(), format!("{:.1}", c.p), run.to_string(), d.to_string()])?;
            }
        }
        w.flush().map_err(|e| Error::io("<simulation>", e))
    }

    pub fn write_summary_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["month", "n", "p", "mean", "median", "q1", "q3"])?;
        for c in &self.cells {
            let s = &c.summary;
            w.write_record([
                c.month.to_string(),
                c.n.to_string(),
                format!("{:.1}", c.p),
                format!("{:.2}", s.mean),
                format!("{:.2}", s.median),
                format!("{:.2}", s.q1),
                format!("{:.2}", s.q3),
            ])?;
        }
        w.flush().map_err(|e| Error::io("<simulation>", e))
    }

    /// Mean savings difference per p for one (month, n), in grid order.
    pub fn mean_curve(&self, month: YearMonth, n: usize) -> Vec<(f64, f64)> {
        self.cells
            .iter()
            .filter(|c| c.month == month && c.n == n)
            .map(|c| (c.p, c.summary.mean))
            .collect()
    }
}
