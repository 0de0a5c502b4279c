mod common;

use std::collections::{BTreeMap, HashMap};

use arcollect::domain::Usd;
use arcollect::ranking::{
    greedy_order, kendall_tau, kendall_tau_b, rank_customers_by_risk, rank_customers_greedy, risk_order, ScoredInvoice,
};
use common::{kendall_pairs, kendall_tau_b_pairs};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_scored(rng: &mut ChaCha8Rng) -> Vec<ScoredInvoice> {
    let n_cust = rng.random_range(1..40);
    (0..rng.random_range(1..300))
        .map(|k| ScoredInvoice {
            invoice_id: format!("I{k}"),
            customer_id: format!("C{:02}", rng.random_range(0..n_cust)),
            // coarse values make exact ties common
            value: Usd::from_cents(100 * rng.random_range(1..20)),
            p_late: rng.random_range(0..5) as f64 / 4.0,
        })
        .collect()
}

#[test]
fn risk_ranking_matches_resort_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let inv = random_scored(&mut rng);
        let mut groups: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for i in &inv {
            groups.entry(&i.customer_id).or_default().push(i.value.as_f64() * i.p_late);
        }
        let mut expect: Vec<(f64, &str)> = groups
            .iter()
            .map(|(c, r)| (r.iter().sum::<f64>() / r.len() as f64, *c))
            .collect();
        expect.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(b.1)));
        let got = risk_order(&rank_customers_by_risk(&inv).unwrap());
        let want: Vec<String> = expect.iter().map(|e| e.1.to_string()).collect();
        assert_eq!(got, want);
    }
}

#[test]
fn greedy_ranking_matches_resort_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..100 {
        let inv = random_scored(&mut rng);
        let mut overdue = HashMap::new();
        let mut open: BTreeMap<&str, i64> = BTreeMap::new();
        for i in &inv {
            *open.entry(&i.customer_id).or_default() += i.value.cents();
        }
        for c in open.keys() {
            if rng.random_bool(0.5) {
                overdue.insert(c.to_string(), Usd::from_cents(1000 * rng.random_range(0..3)));
            }
        }
        let mut expect: Vec<(i64, i64, &str)> = open
            .iter()
            .map(|(c, v)| (overdue.get(*c).map_or(0, |u: &Usd| u.cents()), *v, *c))
            .collect();
        expect.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.cmp(&a.1)).then(a.2.cmp(b.2)));
        let got = greedy_order(&rank_customers_greedy(&inv, &overdue).unwrap());
        let want: Vec<String> = expect.iter().map(|e| e.2.to_string()).collect();
        assert_eq!(got, want);
    }
}

#[test]
fn tau_matches_pair_counting() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..50 {
        let n = rng.random_range(2..=200);
        let a: Vec<String> = (0..n).map(|i| format!("c{i}")).collect();
        let mut b = a.clone();
        b.shuffle(&mut rng);
        assert_eq!(kendall_tau(&a, &b).unwrap(), kendall_pairs(&a, &b));
    }
}

#[test]
fn tau_b_matches_pair_counting_with_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let n = rng.random_range(10..=150);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(0..8) as f64).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(0..8) as f64).collect();
        let got = kendall_tau_b(&x, &y).unwrap();
        let want = kendall_tau_b_pairs(&x, &y);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}
