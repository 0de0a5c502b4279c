//! Core receivables types and the late/on-time labeling rule.

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Days after the due date a payment may arrive and still count as on time.
pub const GRACE_DAYS: i64 = 5;

/// Country of the invoicing branch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Country {
    #[serde(rename = "US")]
    UnitedStates,
    #[serde(rename = "AR")]
    Argentina,
    #[serde(rename = "BR")]
    Brazil,
    #[serde(rename = "CL")]
    Chile,
    #[serde(rename = "CO")]
    Colombia,
    #[serde(rename = "EC")]
    Ecuador,
    #[serde(rename = "MX")]
    Mexico,
}

impl Country {
    pub const ALL: [Country; 7] = [
        Country::UnitedStates,
        Country::Argentina,
        Country::Brazil,
        Country::Chile,
        Country::Colombia,
        Country::Ecuador,
        Country::Mexico,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Country::UnitedStates => "US",
            Country::Argentina => "AR",
            Country::Brazil => "BR",
            Country::Chile => "CL",
            Country::Colombia => "CO",
            Country::Ecuador => "EC",
            Country::Mexico => "MX",
        }
    }

    pub fn region(self) -> Region {
        match self {
            Country::UnitedStates => Region::NorthAmerica,
            _ => Region::LatinAmerica,
        }
    }

    /// Position in [`Country::ALL`], used for one-hot encoding.
    pub fn index(self) -> usize {
        Country::ALL.iter().position(|&c| c == self).unwrap()
    }
}

impl fmt::Display for Country {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Country {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Country::ALL
            .iter()
            .copied()
            .find(|c| c.code() == s)
            .ok_or_else(|| format!("unknown country code `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Region {
    #[serde(rename = "NA")]
    NorthAmerica,
    #[serde(rename = "LA")]
    LatinAmerica,
}

impl fmt::Display for Region {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Region::NorthAmerica => "NA",
            Region::LatinAmerica => "LA",
        })
    }
}

/// A USD amount held as integer cents so that sums are exact.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Usd(i64);

impl Usd {
    pub const ZERO: Usd = Usd(0);

    pub fn from_cents(cents: i64) -> Self {
        Usd(cents)
    }

    pub fn cents(self) -> i64 {
        self.0
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 100.0
    }
}

impl std::ops::Add for Usd {
    type Output = Usd;
    fn add(self, rhs: Usd) -> Usd {
        Usd(self.0 + rhs.0)
    }
}

impl std::ops::AddAssign for Usd {
    fn add_assign(&mut self, rhs: Usd) {
        self.0 += rhs.0;
    }
}

impl std::iter::Sum for Usd {
    fn sum<I: Iterator<Item = Usd>>(iter: I) -> Usd {
        Usd(iter.map(|u| u.0).sum())
    }
}

impl fmt::Display for Usd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}

impl FromStr for Usd {
    type Err = String;

    /// Parses a plain decimal with at most two fraction digits.
    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let bad = || format!("invalid amount `{s}`");
        let (neg, body) = match s.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, s),
        };
        let (whole, frac) = match body.split_once('.') {
            Some((w, f)) => (w, f),
            None => (body, ""),
        };
        if whole.is_empty() || !whole.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        if frac.len() > 2 || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let whole: i64 = whole.parse().map_err(|_| bad())?;
        let frac_cents: i64 = match frac.len() {
            0 => 0,
            1 => frac.parse::<i64>().map_err(|_| bad())? * 10,
            _ => frac.parse().map_err(|_| bad())?,
        };
        let cents = whole
            .checked_mul(100)
            .and_then(|c| c.checked_add(frac_cents))
            .ok_or_else(bad)?;
        Ok(Usd(if neg { -cents } else { cents }))
    }
}

/// Calendar month, ordered chronologically. Serialized as `YYYY-MM`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct YearMonth {
    pub year: i32,
    pub month: u32,
}

impl YearMonth {
    pub fn new(year: i32, month: u32) -> Result<Self> {
        if !(1..=12).contains(&month) {
            return Err(Error::Config(format!("month {month} outside 1..=12")));
        }
        Ok(YearMonth { year, month })
    }

    pub fn of(date: NaiveDate) -> Self {
        YearMonth {
            year: date.year(),
            month: date.month(),
        }
    }

    pub fn first_day(self) -> NaiveDate {
        NaiveDate::from_ymd_opt(self.year, self.month, 1).expect("valid year-month")
    }

    pub fn last_day(self) -> NaiveDate {
        self.succ().first_day().pred_opt().expect("date in range")
    }

    pub fn succ(self) -> Self {
        if self.month == 12 {
            YearMonth { year: self.year + 1, month: 1 }
        } else {
            YearMonth { year: self.year, month: self.month + 1 }
        }
    }

    /// Signed number of months from `self` to `other`.
    pub fn months_until(self, other: YearMonth) -> i32 {
        (other.year - self.year) * 12 + other.month as i32 - self.month as i32
    }

    pub fn days_in_month(self) -> u32 {
        (self.last_day() - self.first_day()).num_days() as u32 + 1
    }
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

impl FromStr for YearMonth {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let bad = || format!("invalid year-month `{s}`, expected YYYY-MM");
        let (y, m) = s.split_once('-').ok_or_else(bad)?;
        let year = y.parse().map_err(|_| bad())?;
        let month = m.parse().map_err(|_| bad())?;
        YearMonth::new(year, month).map_err(|_| bad())
    }
}

impl Serialize for YearMonth {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for YearMonth {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// One receivable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Invoice {
    pub invoice_id: String,
    pub customer_id: String,
    pub country: Country,
    pub base_amount: Usd,
    pub creation_date: NaiveDate,
    pub due_date: NaiveDate,
    /// `None` while outstanding.
    pub settled_date: Option<NaiveDate>,
}

impl Invoice {
    pub fn new(
        invoice_id: impl Into<String>,
        customer_id: impl Into<String>,
        country: Country,
        base_amount: Usd,
        creation_date: NaiveDate,
        due_date: NaiveDate,
        settled_date: Option<NaiveDate>,
    ) -> Result<Self> {
        let inv = Invoice {
            invoice_id: invoice_id.into(),
            customer_id: customer_id.into(),
            country,
            base_amount,
            creation_date,
            due_date,
            settled_date,
        };
        inv.validate()?;
        Ok(inv)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| {
            Err(Error::InvalidInvoice {
                invoice_id: self.invoice_id.clone(),
                reason,
            })
        };
        if self.base_amount.cents() <= 0 {
            return fail(format!("base_amount {} must be > 0", self.base_amount));
        }
        if self.creation_date > self.due_date {
            return fail(format!(
                "creation_date {} after due_date {}",
                self.creation_date, self.due_date
            ));
        }
        if let Some(settled) = self.settled_date {
            if settled < self.creation_date {
                return fail(format!(
                    "settled_date {settled} before creation_date {}",
                    self.creation_date
                ));
            }
        }
        Ok(())
    }

    pub fn region(&self) -> Region {
        self.country.region()
    }

    pub fn creation_month(&self) -> YearMonth {
        YearMonth::of(self.creation_date)
    }

    /// Days between due date and settlement, if settled.
    pub fn days_past_due(&self) -> Option<i64> {
        self.settled_date.map(|s| (s - self.due_date).num_days())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PaymentClass {
    OnTime,
    Late,
}

impl PaymentClass {
    pub fn is_late(self) -> bool {
        self == PaymentClass::Late
    }

    pub fn from_late(late: bool) -> Self {
        if late {
            PaymentClass::Late
        } else {
            PaymentClass::OnTime
        }
    }

    /// 1.0 for Late, 0.0 for OnTime.
    pub fn as_target(self) -> f64 {
        if self.is_late() {
            1.0
        } else {
            0.0
        }
    }
}

impl fmt::Display for PaymentClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PaymentClass::OnTime => "on_time",
            PaymentClass::Late => "late",
        })
    }
}

impl FromStr for PaymentClass {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "on_time" => Ok(PaymentClass::OnTime),
            "late" => Ok(PaymentClass::Late),
            _ => Err(format!("unknown payment class `{s}`")),
        }
    }
}

/// End of observed data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub as_of_date: NaiveDate,
}

impl Snapshot {
    pub fn new(as_of_date: NaiveDate) -> Self {
        Snapshot { as_of_date }
    }

    /// Checks that no invoice was created after the snapshot.
    pub fn check_covers(&self, invoices: &[Invoice]) -> Result<()> {
        match invoices.iter().find(|i| i.creation_date > self.as_of_date) {
            Some(inv) => Err(Error::InvalidInvoice {
                invoice_id: inv.invoice_id.clone(),
                reason: format!(
                    "created {} after snapshot {}",
                    inv.creation_date, self.as_of_date
                ),
            }),
            None => Ok(()),
        }
    }
}

/// Ground-truth class of an invoice as observed at `snap`.
///
/// Settled invoices are on time when paid at most `grace_days` after the due
/// date. Outstanding invoices are late once the snapshot is more than
/// `grace_days` past due, and unlabeled (`None`) before that.
pub fn label_invoice(inv: &Invoice, snap: &Snapshot, grace_days: i64) -> Result<Option<PaymentClass>> {
    inv.validate()?;
    if grace_days < 0 {
        return Err(Error::InvalidParameter(format!(
            "grace_days {grace_days} must be >= 0"
        )));
    }
    Ok(match inv.settled_date {
        Some(settled) => Some(PaymentClass::from_late(
            (settled - inv.due_date).num_days() > grace_days,
        )),
        None if (snap.as_of_date - inv.due_date).num_days() > grace_days => Some(PaymentClass::Late),
        None => None,
    })
}
