//! Synthetic receivables portfolios.
//!
//! Each customer carries a payment-behavior profile. Lateness of an invoice is
//! a Bernoulli draw whose log-odds combine the customer's base propensity, a
//! monthly AR(1) latent state (so recent behavior predicts the next invoice),
//! a payment-term offset that is not monotone in the term length, and an
//! optional per-customer drift term. Drift slopes are clamped at zero so
//! customers only ever improve, at customer-specific speeds.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use chrono::{Duration, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution, LogNormal, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::domain::{Country, Invoice, Snapshot, Usd, YearMonth, GRACE_DAYS};
use crate::error::{Error, Result};
use crate::stats::{logit, sigmoid};

/// Invoice and customer counts per country of the reference portfolio.
const REFERENCE_MIX: [(Country, u32, u32); 7] = [
    (Country::UnitedStates, 26_506, 4_276),
    (Country::Argentina, 220, 27),
    (Country::Brazil, 17_510, 785),
    (Country::Chile, 11_634, 324),
    (Country::Colombia, 16_302, 514),
    (Country::Ecuador, 6, 1),
    (Country::Mexico, 19_484, 578),
];
const REFERENCE_MONTHS: f64 = 13.0;
const CUSTOMER_SCALE: f64 = 10.0;
const INVOICE_SCALE: f64 = 9.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomerProfile {
    pub customer_id: String,
    pub country: Country,
    pub base_lateness_prob: f64,
    pub lateness_days_mean: f64,
    pub lateness_days_dispersion: f64,
    /// Expected invoices per month.
    pub invoice_rate: f64,
    pub amount_log_mean: f64,
    pub amount_log_sd: f64,
    /// Change in lateness log-odds per month; negative means improving.
    pub drift_slope: f64,
    /// Preferred payment term in days.
    pub payment_term_days: i64,
}

impl CustomerProfile {
    pub fn validate(&self) -> Result<()> {
        let ok = (0.0..=1.0).contains(&self.base_lateness_prob)
            && self.lateness_days_mean >= 0.0
            && self.lateness_days_dispersion >= 0.0
            && self.invoice_rate > 0.0
            && self.amount_log_sd >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "customer profile {} out of range",
                self.customer_id
            )))
        }
    }
}

/// Knobs of the behavioral model. Defaults are tuned so the default portfolio
/// has a Late share near 55% and a clear recent-history signal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BehaviorConfig {
    /// Beta parameters of the base lateness probability, per region.
    pub lateness_beta_na: (f64, f64),
    pub lateness_beta_la: (f64, f64),
    /// Mean and spread of the per-customer drift slope when drift is enabled.
    pub drift_slope_mean: f64,
    pub drift_slope_sd: f64,
    /// AR(1) coefficient of the monthly latent propensity.
    pub persistence: f64,
    /// Stationary standard deviation of the latent propensity (log-odds).
    pub latent_sd: f64,
    /// Range of the per-customer mean days late, when late.
    pub lateness_days_range: (f64, f64),
    pub lateness_dispersion_range: (f64, f64),
    /// Mean invoices per customer-month by country.
    pub invoice_rate: BTreeMap<Country, f64>,
    pub amount_log_mean: f64,
    pub amount_log_mean_sd: f64,
    pub amount_log_sd: f64,
    /// Days after the last generated month at which the snapshot is taken.
    pub observation_lag_days: i64,
    /// Probability that an invoice uses the customer's preferred term.
    pub preferred_term_share: f64,
    /// Lateness log-odds offsets for 30/45/60-day terms, per region.
    pub term_effect_na: [f64; 3],
    pub term_effect_la: [f64; 3],
    /// Log-odds per standard deviation of an invoice's log amount above the
    /// customer's typical amount.
    pub amount_effect: f64,
    /// Log-odds added while the customer already has an unpaid invoice past
    /// its grace period when the new invoice is issued.
    pub overdue_effect: f64,
}

impl Default for BehaviorConfig {
    fn default() -> Self {
        let invoice_rate = REFERENCE_MIX
            .iter()
            .map(|&(c, inv, cust)| {
                let rate = inv as f64 / cust as f64 / REFERENCE_MONTHS * CUSTOMER_SCALE / INVOICE_SCALE;
                (c, rate)
            })
            .collect();
        BehaviorConfig {
            lateness_beta_na: (0.6, 0.45),
            lateness_beta_la: (0.6, 0.45),
            drift_slope_mean: 0.0,
            drift_slope_sd: 1.0,
            persistence: 0.85,
            latent_sd: 0.5,
            lateness_days_range: (8.0, 40.0),
            lateness_dispersion_range: (2.0, 12.0),
            invoice_rate,
            amount_log_mean: 9.5,
            amount_log_mean_sd: 1.0,
            amount_log_sd: 0.6,
            observation_lag_days: 120,
            preferred_term_share: 0.2,
            term_effect_na: [-1.2, 1.2, -1.2],
            term_effect_la: [-1.2, 1.2, -1.2],
            amount_effect: 0.0,
            overdue_effect: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PortfolioConfig {
    pub n_customers: BTreeMap<Country, u32>,
    pub start_month: YearMonth,
    pub end_month: YearMonth,
    pub drift_enabled: bool,
    pub seed: u64,
    #[serde(default)]
    pub behavior: BehaviorConfig,
}

impl PortfolioConfig {
    /// Reference country mix scaled down to desk size (about 650 customers
    /// and 10k invoices over 2018-11..2019-11).
    pub fn with_seed(seed: u64) -> Self {
        let n_customers = REFERENCE_MIX
            .iter()
            .map(|&(c, _, cust)| (c, ((cust as f64 / CUSTOMER_SCALE).round() as u32).max(1)))
            .collect();
        PortfolioConfig {
            n_customers,
            start_month: YearMonth { year: 2018, month: 11 },
            end_month: YearMonth { year: 2019, month: 11 },
            drift_enabled: true,
            seed,
            behavior: BehaviorConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.start_month >= self.end_month {
            return Err(Error::Config(format!(
                "start_month {} must precede end_month {}",
                self.start_month, self.end_month
            )));
        }
        if self.n_customers.values().all(|&n| n == 0) {
            return Err(Error::Config("portfolio has zero customers".into()));
        }
        let b = &self.behavior;
        if !(0.0..1.0).contains(&b.persistence) {
            return Err(Error::Config(format!(
                "behavior.persistence {} outside [0, 1)",
                b.persistence
            )));
        }
        for (name, (a, bb)) in [("lateness_beta_na", b.lateness_beta_na), ("lateness_beta_la", b.lateness_beta_la)] {
            if a <= 0.0 || bb <= 0.0 {
                return Err(Error::Config(format!("behavior.{name} parameters must be > 0")));
            }
        }
        if b.latent_sd < 0.0 || b.drift_slope_sd < 0.0 || b.amount_log_sd < 0.0 || b.amount_log_mean_sd < 0.0 {
            return Err(Error::Config("behavior standard deviations must be >= 0".into()));
        }
        if b.lateness_days_range.0 < 0.0 || b.lateness_days_range.0 > b.lateness_days_range.1 {
            return Err(Error::Config("behavior.lateness_days_range invalid".into()));
        }
        if b.lateness_dispersion_range.0 < 0.0 || b.lateness_dispersion_range.0 > b.lateness_dispersion_range.1 {
            return Err(Error::Config("behavior.lateness_dispersion_range invalid".into()));
        }
        if !(0.0..=1.0).contains(&b.preferred_term_share) {
            return Err(Error::Config("behavior.preferred_term_share outside [0, 1]".into()));
        }
        if b.observation_lag_days < 0 {
            return Err(Error::Config("behavior.observation_lag_days must be >= 0".into()));
        }
        for (&country, &n) in &self.n_customers {
            if n > 0 && self.rate_for(country) <= 0.0 {
                return Err(Error::Config(format!(
                    "behavior.invoice_rate for {country} must be > 0"
                )));
            }
        }
        Ok(())
    }

    fn rate_for(&self, country: Country) -> f64 {
        self.behavior.invoice_rate.get(&country).copied().unwrap_or(0.0)
    }

    pub fn months(&self) -> Vec<YearMonth> {
        let mut out = vec![self.start_month];
        while *out.last().unwrap() < self.end_month {
            let next = out.last().unwrap().succ();
            out.push(next);
        }
        out
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot::new(self.end_month.last_day() + Duration::days(self.behavior.observation_lag_days))
    }
}

impl Default for PortfolioConfig {
    fn default() -> Self {
        PortfolioConfig::with_seed(42)
    }
}

#[derive(Debug, Clone)]
pub struct Portfolio {
    pub invoices: Vec<Invoice>,
    pub snapshot: Snapshot,
    pub profiles: Vec<CustomerProfile>,
}

const PAYMENT_TERMS: [i64; 3] = [30, 45, 60];
const EARLY_PAYMENT_DAYS: i64 = 10;
const MAX_DAYS_LATE: i64 = 240;

fn draw_profiles(cfg: &PortfolioConfig, rng: &mut ChaCha8Rng) -> Result<Vec<CustomerProfile>> {
    let b = &cfg.behavior;
    let beta = |(a, bb): (f64, f64)| Beta::new(a, bb).map_err(|e| Error::Config(e.to_string()));
    let beta_na = beta(b.lateness_beta_na)?;
    let beta_la = beta(b.lateness_beta_la)?;
    let slope = Normal::new(b.drift_slope_mean, b.drift_slope_sd).map_err(|e| Error::Config(e.to_string()))?;
    let amount_mean = Normal::new(b.amount_log_mean, b.amount_log_mean_sd).map_err(|e| Error::Config(e.to_string()))?;
    // Mean-one jitter of the invoice rate across customers of a country.
    let rate_jitter = LogNormal::new(-0.125, 0.5).map_err(|e| Error::Config(e.to_string()))?;

    let mut profiles = Vec::new();
    let mut next_id = 1;
    for (&country, &n) in &cfg.n_customers {
        for _ in 0..n {
            let base = match country.region() {
                crate::domain::Region::NorthAmerica => beta_na.sample(rng),
                crate::domain::Region::LatinAmerica => beta_la.sample(rng),
            };
            let drift_slope = if cfg.drift_enabled {
                slope.sample(rng).min(0.0)
            } else {
                0.0
            };
            let (dlo, dhi) = b.lateness_days_range;
            let (slo, shi) = b.lateness_dispersion_range;
            let profile = CustomerProfile {
                customer_id: format!("C{next_id:05}"),
                country,
                base_lateness_prob: base.clamp(0.005, 0.995),
                lateness_days_mean: dlo + (dhi - dlo) * rng.random::<f64>(),
                lateness_days_dispersion: slo + (shi - slo) * rng.random::<f64>(),
                invoice_rate: cfg.rate_for(country) * rate_jitter.sample(rng),
                amount_log_mean: amount_mean.sample(rng),
                amount_log_sd: b.amount_log_sd,
                drift_slope,
                payment_term_days: PAYMENT_TERMS[rng.random_range(0..PAYMENT_TERMS.len())],
            };
            profile.validate()?;
            profiles.push(profile);
            next_id += 1;
        }
    }
    Ok(profiles)
}

struct Draft {
    customer: usize,
    seq: usize,
    invoice: Invoice,
}

/// Generates a portfolio; identical configs give identical portfolios.
pub fn generate_portfolio(cfg: &PortfolioConfig) -> Result<Portfolio> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let profiles = draw_profiles(cfg, &mut rng)?;
    let b = &cfg.behavior;
    let months = cfg.months();
    let center = (months.len() - 1) as f64 / 2.0;
    let snapshot = cfg.snapshot();
    let innovation = Normal::new(0.0, b.latent_sd * (1.0 - b.persistence * b.persistence).sqrt())
        .map_err(|e| Error::Config(e.to_string()))?;
    let stationary = Normal::new(0.0, b.latent_sd).map_err(|e| Error::Config(e.to_string()))?;

    let mut drafts = Vec::new();
    for (ci, p) in profiles.iter().enumerate() {
        let arrivals = Poisson::new(p.invoice_rate).map_err(|e| Error::Config(e.to_string()))?;
        let amount = LogNormal::new(p.amount_log_mean, p.amount_log_sd.max(1e-12))
            .map_err(|e| Error::Config(e.to_string()))?;
        let days_late = Normal::new(p.lateness_days_mean, p.lateness_days_dispersion.max(1e-12))
            .map_err(|e| Error::Config(e.to_string()))?;
        let base_logit = logit(p.base_lateness_prob);
        let mut latent = stationary.sample(&mut rng);
        let mut seq = 0;
        // (overdue from, settled) of this customer's earlier invoices.
        let mut open: Vec<(NaiveDate, NaiveDate)> = Vec::new();
        for (mi, &month) in months.iter().enumerate() {
            if mi > 0 {
                latent = b.persistence * latent + innovation.sample(&mut rng);
            }
            let month_logit = base_logit + latent + p.drift_slope * (mi as f64 - center);
            let term_effect = match p.country.region() {
                crate::domain::Region::NorthAmerica => b.term_effect_na,
                crate::domain::Region::LatinAmerica => b.term_effect_la,
            };
            let count = arrivals.sample(&mut rng) as u32;
            let mut days: Vec<u32> = (0..count)
                .map(|_| rng.random_range(0..month.days_in_month()))
                .collect();
            days.sort_unstable();
            for day in days {
                let creation = month.first_day() + Duration::days(day as i64);
                let term_idx = if rng.random::<f64>() < b.preferred_term_share {
                    PAYMENT_TERMS.iter().position(|&t| t == p.payment_term_days).unwrap()
                } else {
                    rng.random_range(0..PAYMENT_TERMS.len())
                };
                let due = creation + Duration::days(PAYMENT_TERMS[term_idx]);
                let log_amount = amount.sample(&mut rng).ln();
                let z = if p.amount_log_sd > 0.0 {
                    (log_amount - p.amount_log_mean) / p.amount_log_sd
                } else {
                    0.0
                };
                open.retain(|&(_, settled)| settled > creation);
                let overdue = open.iter().any(|&(from, _)| from < creation);
                let p_late = sigmoid(
                    month_logit
                        + term_effect[term_idx]
                        + b.amount_effect * z
                        + if overdue { b.overdue_effect } else { 0.0 },
                );
                let offset = if rng.random::<f64>() < p_late {
                    (days_late.sample(&mut rng).round() as i64).clamp(GRACE_DAYS + 1, MAX_DAYS_LATE)
                } else {
                    rng.random_range(-EARLY_PAYMENT_DAYS..=GRACE_DAYS)
                };
                let settled = (due + Duration::days(offset)).max(creation);
                open.push((due + Duration::days(GRACE_DAYS), settled));
                let cents = ((log_amount.exp() * 100.0).round() as i64).max(100);
                drafts.push(Draft {
                    customer: ci,
                    seq,
                    invoice: Invoice {
                        invoice_id: String::new(),
                        customer_id: p.customer_id.clone(),
                        country: p.country,
                        base_amount: Usd::from_cents(cents),
                        creation_date: creation,
                        due_date: due,
                        settled_date: (settled <= snapshot.as_of_date).then_some(settled),
                    },
                });
                seq += 1;
            }
        }
    }

    drafts.sort_by_key(|d| (d.invoice.creation_date, d.customer, d.seq));
    let width = drafts.len().to_string().len().max(6);
    let invoices: Vec<Invoice> = drafts
        .into_iter()
        .enumerate()
        .map(|(i, mut d)| {
            d.invoice.invoice_id = format!("INV{:0width$}", i + 1);
            d.invoice
        })
        .collect();
    for inv in &invoices {
        inv.validate()?;
    }
    snapshot.check_covers(&invoices)?;
    Ok(Portfolio {
        invoices,
        snapshot,
        profiles,
    })
}

pub const INVOICE_CSV_HEADER: [&str; 7] = [
    "invoice_id",
    "customer_id",
    "country",
    "base_amount",
    "creation_date",
    "due_date",
    "settled_date",
];

pub fn write_invoices<W: Write>(invoices: &[Invoice], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(INVOICE_CSV_HEADER)?;
    for inv in invoices {
        let amount = inv.base_amount.to_string();
        let creation = inv.creation_date.to_string();
        let due = inv.due_date.to_string();
        let settled = inv.settled_date.map(|d| d.to_string()).unwrap_or_default();
        w.write_record([
            inv.invoice_id.as_str(),
            inv.customer_id.as_str(),
            inv.country.code(),
            &amount,
            &creation,
            &due,
            &settled,
        ])?;
    }
    w.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

/// Parses invoices; `origin` names the source in error messages.
pub fn read_invoices<R: Read>(reader: R, origin: &Path) -> Result<Vec<Invoice>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = r.headers()?.clone();
    if header.iter().ne(INVOICE_CSV_HEADER.iter().copied()) {
        return Err(Error::Schema {
            path: origin.to_path_buf(),
            reason: format!(
                "expected header `{}`, found `{}`",
                INVOICE_CSV_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::Parse {
                path: origin.to_path_buf(),
                line,
                reason: e.to_string(),
            }
        })?;
        let line = rec.position().map(|p| p.line()).unwrap_or(0);
        let parse_err = |reason: String| Error::Parse {
            path: origin.to_path_buf(),
            line,
            reason,
        };
        let date = |field: &str, s: &str| {
            s.parse::<NaiveDate>()
                .map_err(|e| parse_err(format!("{field} `{s}`: {e}")))
        };
        let inv = Invoice {
            invoice_id: rec[0].to_string(),
            customer_id: rec[1].to_string(),
            country: rec[2].parse().map_err(parse_err)?,
            base_amount: rec[3].parse().map_err(parse_err)?,
            creation_date: date("creation_date", &rec[4])?,
            due_date: date("due_date", &rec[5])?,
            settled_date: match &rec[6] {
                "" => None,
                s => Some(date("settled_date", s)?),
            },
        };
        inv.validate().map_err(|e| parse_err(e.to_string()))?;
        out.push(inv);
    }
    Ok(out)
}

pub fn write_portfolio_csv(invoices: &[Invoice], path: &Path) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_invoices(invoices, std::io::BufWriter::new(file))
}

pub fn read_portfolio_csv(path: &Path) -> Result<Vec<Invoice>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_invoices(std::io::BufReader::new(file), path)
}
