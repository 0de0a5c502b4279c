//! Risk-weighted customer prioritization, the greedy dollar-value baseline and
//! Kendall rank correlation between the two orders.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use serde::{Deserialize, Serialize};

use chrono::NaiveDate;

use crate::domain::{Invoice, Usd};
use crate::error::{Error, Result};

/// An open invoice with the model's probability of it being paid late.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredInvoice {
    pub invoice_id: String,
    pub customer_id: String,
    pub value: Usd,
    pub p_late: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InvoiceRisk {
    pub value: Usd,
    pub p_late: f64,
    /// Expected late dollars.
    pub risk: f64,
}

pub fn invoice_risk(value: Usd, p_late: f64) -> Result<InvoiceRisk> {
    if value.cents() <= 0 {
        return Err(Error::InvalidParameter(format!("invoice value must be positive, got {value}")));
    }
    if !(0.0..=1.0).contains(&p_late) {
        return Err(Error::InvalidParameter(format!("probability {p_late} outside [0, 1]")));
    }
    Ok(InvoiceRisk {
        value,
        p_late,
        risk: value.as_f64() * p_late,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CustomerRank {
    /// 1-based position.
    pub rank: usize,
    pub customer_id: String,
    pub mean_risk: f64,
    pub n_invoices: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreedyRank {
    pub rank: usize,
    pub customer_id: String,
    /// Past-due, unpaid balance at the ranking date.
    pub overdue_value: Usd,
    /// Value of the customer's invoices being ranked.
    pub open_value: Usd,
    pub n_invoices: usize,
}

/// Per-customer value of invoices created before `as_of`, past their due
/// date and still unpaid on `as_of`.
pub fn overdue_balances(invoices: &[Invoice], as_of: NaiveDate) -> HashMap<String, Usd> {
    let mut out: HashMap<String, Usd> = HashMap::new();
    for inv in invoices {
        let unpaid = inv.settled_date.is_none_or(|d| d >= as_of);
        if inv.creation_date < as_of && inv.due_date < as_of && unpaid {
            *out.entry(inv.customer_id.clone()).or_default() += inv.base_amount;
        }
    }
    out
}

/// Groups by customer in first-seen order, keeping invoice order inside.
fn group<'a>(invoices: &'a [ScoredInvoice]) -> Vec<(&'a str, Vec<&'a ScoredInvoice>)> {
    let mut at: HashMap<&str, usize> = HashMap::new();
    let mut groups: Vec<(&str, Vec<&ScoredInvoice>)> = Vec::new();
    for inv in invoices {
        let i = *at.entry(inv.customer_id.as_str()).or_insert_with(|| {
            groups.push((inv.customer_id.as_str(), Vec::new()));
            groups.len() - 1
        });
        groups[i].1.push(inv);
    }
    groups
}

/// Customers by descending mean invoice risk; ties go to the smaller id.
pub fn rank_customers_by_risk(invoices: &[ScoredInvoice]) -> Result<Vec<CustomerRank>> {
    let mut out = Vec::new();
    for (customer, members) in group(invoices) {
        let mut sum = 0.0;
        for inv in &members {
            sum += invoice_risk(inv.value, inv.p_late)?.risk;
        }
        out.push(CustomerRank {
            rank: 0,
            customer_id: customer.to_string(),
            mean_risk: sum / members.len() as f64,
            n_invoices: members.len(),
        });
    }
    out.sort_by(|a, b| b.mean_risk.total_cmp(&a.mean_risk).then_with(|| a.customer_id.cmp(&b.customer_id)));
    for (i, r) in out.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok(out)
}

/// The collector's usual rule: customers by descending overdue dollars, then
/// by the value of the invoices being ranked.
pub fn rank_customers_greedy(invoices: &[ScoredInvoice], overdue: &HashMap<String, Usd>) -> Result<Vec<GreedyRank>> {
    let mut out = Vec::new();
    for (customer, members) in group(invoices) {
        let mut total = Usd::ZERO;
        for inv in &members {
            if inv.value.cents() <= 0 {
                return Err(Error::InvalidParameter(format!("invoice {} has non-positive value", inv.invoice_id)));
            }
            total += inv.value;
        }
        out.push(GreedyRank {
            rank: 0,
            customer_id: customer.to_string(),
            overdue_value: overdue.get(customer).copied().unwrap_or_default(),
            open_value: total,
            n_invoices: members.len(),
        });
    }
    out.sort_by(|a, b| {
        (b.overdue_value, b.open_value)
            .cmp(&(a.overdue_value, a.open_value))
            .then_with(|| a.customer_id.cmp(&b.customer_id))
    });
    for (i, r) in out.iter_mut().enumerate() {
        r.rank = i + 1;
    }
    Ok(out)
}

pub fn risk_order(ranks: &[CustomerRank]) -> Vec<String> {
    ranks.iter().map(|r| r.customer_id.clone()).collect()
}

pub fn greedy_order(ranks: &[GreedyRank]) -> Vec<String> {
    ranks.iter().map(|r| r.customer_id.clone()).collect()
}

/// Merge sort that counts pairs out of order. Equal keys are not counted.
fn count_inversions(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut inv = count_inversions(&mut v[..mid], buf) + count_inversions(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            inv += (mid - i) as u64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    inv
}

/// Pairs tied within runs of equal values of an already sorted slice.
fn tied_pairs<T: PartialEq>(sorted: &[T]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Tie-adjusted Kendall tau-b of paired samples, O(n log n).
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::InvalidParameter(format!("sample lengths differ: {} vs {}", x.len(), y.len())));
    }
    if x.iter().chain(y).any(|v| v.is_nan()) {
        return Err(Error::InvalidParameter("NaN in rank correlation input".into()));
    }
    let n = x.len() as u64;
    if n < 2 {
        return Err(Error::InsufficientData("rank correlation needs at least two elements".into()));
    }
    let mut idx: Vec<usize> = (0..x.len()).collect();
    idx.sort_by(|&a, &b| x[a].total_cmp(&x[b]).then(y[a].total_cmp(&y[b])));
    let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
    let pairs: Vec<(f64, f64)> = idx.iter().map(|&i| (x[i], y[i])).collect();
    let tie_x = tied_pairs(&xs);
    let tie_xy = tied_pairs(&pairs);
    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let mut buf = Vec::with_capacity(ys.len());
    let discordant = count_inversions(&mut ys, &mut buf);
    let tie_y = tied_pairs(&ys);
    let n0 = n * (n - 1) / 2;
    // Pairs tied in neither coordinate are concordant or discordant.
    let untied = n0 + tie_xy - tie_x - tie_y;
    let concordant = untied - discordant;
    let denom = ((n0 - tie_x) as f64 * (n0 - tie_y) as f64).sqrt();
    if denom == 0.0 {
        return Err(Error::InsufficientData("a sample is constant; tau is undefined".into()));
    }
    Ok((concordant as f64 - discordant as f64) / denom)
}

/// Kendall tau between two strict orders of the same elements. Orders of
/// fewer than two elements count as identical.
pub fn kendall_tau(order_a: &[String], order_b: &[String]) -> Result<f64> {
    let pos_b: HashMap<&str, usize> = order_b.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    if pos_b.len() != order_b.len() {
        return Err(Error::OrderMismatch("second order contains duplicates".into()));
    }
    if order_a.len() != order_b.len() {
        return Err(Error::OrderMismatch(format!("{} vs {} elements", order_a.len(), order_b.len())));
    }
    let mut ys = Vec::with_capacity(order_a.len());
    let mut seen = std::collections::HashSet::new();
    for s in order_a {
        if !seen.insert(s.as_str()) {
            return Err(Error::OrderMismatch(format!("`{s}` appears twice in the first order")));
        }
        let p = pos_b
            .get(s.as_str())
            .ok_or_else(|| Error::OrderMismatch(format!("`{s}` is missing from the second order")))?;
        ys.push(*p as f64);
    }
    if ys.len() < 2 {
        return Ok(1.0);
    }
    let xs: Vec<f64> = (0..ys.len()).map(|i| i as f64).collect();
    kendall_tau_b(&xs, &ys)
}

/// Share of the first `k` customers common to both orders.
pub fn top_k_overlap(order_a: &[String], order_b: &[String], k: usize) -> f64 {
    let k = k.min(order_a.len()).min(order_b.len());
    if k == 0 {
        return 0.0;
    }
    let top: std::collections::HashSet<&String> = order_a[..k].iter().collect();
    order_b[..k].iter().filter(|c| top.contains(c)).count() as f64 / k as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingComparison {
    pub n_customers: usize,
    pub n_invoices: usize,
    pub kendall_tau: f64,
    /// `k -> overlap` for each requested cutoff.
    pub top_k_overlap: BTreeMap<usize, f64>,
}

pub fn compare_rankings(
    invoices: &[ScoredInvoice],
    overdue: &HashMap<String, Usd>,
    ks: &[usize],
) -> Result<(Vec<CustomerRank>, Vec<GreedyRank>, RankingComparison)> {
    let risk = rank_customers_by_risk(invoices)?;
    let greedy = rank_customers_greedy(invoices, overdue)?;
    let a = risk_order(&risk);
    let b = greedy_order(&greedy);
    let cmp = RankingComparison {
        n_customers: a.len(),
        n_invoices: invoices.len(),
        kendall_tau: kendall_tau(&a, &b)?,
        top_k_overlap: ks.iter().map(|&k| (k, top_k_overlap(&a, &b, k))).collect(),
    };
    Ok((risk, greedy, cmp))
}

pub fn write_risk_ranking<W: Write>(ranks: &[CustomerRank], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["rank", "customer_id", "mean_risk", "n_invoices"])?;
    for r in ranks {
        w.write_record([
            r.rank.to_string(),
            r.customer_id.clone(),
            format!("{:.6}", r.mean_risk),
            r.n_invoices.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<ranking>", e))
}

pub fn write_greedy_ranking<W: Write>(ranks: &[GreedyRank], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["rank", "customer_id", "overdue_value", "open_value", "n_invoices"])?;
    for r in ranks {
        w.write_record([
            r.rank.to_string(),
            r.customer_id.clone(),
            r.overdue_value.to_string(),
            r.open_value.to_string(),
            r.n_invoices.to_string(),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<ranking>", e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inv(id: &str, cust: &str, dollars: i64, p: f64) -> ScoredInvoice {
        ScoredInvoice {
            invoice_id: id.into(),
            customer_id: cust.into(),
            value: Usd::from_cents(dollars * 100),
            p_late: p,
        }
    }

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn risk_is_value_times_probability() {
        let r1 = invoice_risk(Usd::from_cents(100_000_000), 0.2506).unwrap();
        let r2 = invoice_risk(Usd::from_cents(30_000_000), 0.9358).unwrap();
        assert!((r1.risk - 250_600.0).abs() < 1e-6);
        assert!((r2.risk - 280_740.0).abs() < 1e-6);
        assert!(r2.risk > r1.risk);
        assert_eq!(invoice_risk(Usd::from_cents(500), 0.0).unwrap().risk, 0.0);
        assert_eq!(invoice_risk(Usd::from_cents(500), 1.0).unwrap().risk, 5.0);
        assert!(invoice_risk(Usd::from_cents(0), 0.5).is_err());
        assert!(invoice_risk(Usd::from_cents(10), 1.5).is_err());
    }

    #[test]
    fn hypothetical_pair_orders_differ() {
        let invs = vec![inv("i1", "c1", 1_000_000, 0.2506), inv("i2", "c2", 300_000, 0.9358)];
        let (risk, greedy, cmp) = compare_rankings(&invs, &HashMap::new(), &[1]).unwrap();
        assert_eq!(risk_order(&risk), ids(&["c2", "c1"]));
        assert_eq!(greedy_order(&greedy), ids(&["c1", "c2"]));
        assert_eq!(cmp.kendall_tau, -1.0);
        assert_eq!(cmp.top_k_overlap[&1], 0.0);
    }

    #[test]
    fn mean_not_sum_and_ties_by_id() {
        let invs = vec![inv("a1", "A", 100, 1.0), inv("a2", "A", 300, 1.0), inv("b1", "B", 250, 1.0)];
        let r = rank_customers_by_risk(&invs).unwrap();
        assert_eq!(risk_order(&r), ids(&["B", "A"]));
        assert_eq!(r[1].mean_risk, 200.0);
        assert_eq!((r[0].rank, r[1].rank), (1, 2));
        let tied = vec![inv("x", "Z", 50, 0.5), inv("y", "M", 50, 0.5)];
        assert_eq!(risk_order(&rank_customers_by_risk(&tied).unwrap()), ids(&["M", "Z"]));
        assert_eq!(greedy_order(&rank_customers_greedy(&tied, &HashMap::new()).unwrap()), ids(&["M", "Z"]));
    }

    #[test]
    fn overdue_balance_leads_greedy() {
        let invs = vec![inv("a", "big", 900, 0.1), inv("b", "owes", 10, 0.1)];
        let overdue: HashMap<String, Usd> = [("owes".to_string(), Usd::from_cents(100))].into();
        assert_eq!(greedy_order(&rank_customers_greedy(&invs, &overdue).unwrap()), ids(&["owes", "big"]));
        let d = |s: &str| s.parse::<NaiveDate>().unwrap();
        let hist = vec![
            Invoice::new("1", "c", crate::domain::Country::Chile, Usd::from_cents(500), d("2019-01-01"), d("2019-01-31"), None).unwrap(),
            Invoice::new("2", "c", crate::domain::Country::Chile, Usd::from_cents(700), d("2019-01-01"), d("2019-01-31"), Some(d("2019-02-10"))).unwrap(),
            Invoice::new("3", "c", crate::domain::Country::Chile, Usd::from_cents(900), d("2019-01-20"), d("2019-02-20"), None).unwrap(),
            Invoice::new("4", "c", crate::domain::Country::Chile, Usd::from_cents(300), d("2019-01-01"), d("2019-01-31"), Some(d("2019-01-30"))).unwrap(),
        ];
        assert_eq!(overdue_balances(&hist, d("2019-02-05"))["c"], Usd::from_cents(1200));
    }

    #[test]
    fn tau_extremes_and_mismatch() {
        let a = ids(&["a", "b", "c", "d"]);
        let mut r = a.clone();
        r.reverse();
        assert_eq!(kendall_tau(&a, &a).unwrap(), 1.0);
        assert_eq!(kendall_tau(&a, &r).unwrap(), -1.0);
        assert!(kendall_tau(&a, &ids(&["a", "b", "c", "e"])).is_err());
        assert!(kendall_tau(&a, &ids(&["a", "b", "c"])).is_err());
        assert!(kendall_tau(&ids(&["a", "a"]), &ids(&["a", "b"])).is_err());
    }

    #[test]
    fn tau_b_with_ties() {
        // Known value: x = [1,2,2,3], y = [1,3,2,2]: C = 3, D = 1, ties 1 each.
        let t = kendall_tau_b(&[1.0, 2.0, 2.0, 3.0], &[1.0, 3.0, 2.0, 2.0]).unwrap();
        assert!((t - 2.0 / 5.0).abs() < 1e-12, "{t}");
        assert!(kendall_tau_b(&[1.0, 1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn csv_header() {
        let r = rank_customers_by_risk(&[inv("i", "c", 10, 0.5)]).unwrap();
        let mut buf = Vec::new();
        write_risk_ranking(&r, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "rank,customer_id,mean_risk,n_invoices\n1,c,5.000000,1\n");
    }
}
