mod common;

use arcollect::domain::{Country, Invoice, Usd, GRACE_DAYS};
use arcollect::features::{compute_features, fit_imputation, impute, WindowSize};
use chrono::Duration;
use common::{brute_features, date, random_history};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn matches_brute_force_on_random_histories() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..200 {
        let n = rng.random_range(1..=50);
        let hist = random_history(&mut rng, &format!("C{case}"), n);
        let w = rng.random_range(3..=12);
        for inv in &hist {
            let got = compute_features(inv, &hist, WindowSize::new(w).unwrap(), GRACE_DAYS).unwrap();
            assert_eq!(got, brute_features(inv, &hist, w, GRACE_DAYS), "case {case}, invoice {}", inv.invoice_id);
        }
    }
}

#[test]
fn single_late_invoice_in_window() {
    let prior = Invoice::new("a", "C", Country::Brazil, Usd::from_cents(10_000), date(2019, 1, 1), date(2019, 1, 31), Some(date(2019, 2, 10))).unwrap();
    let inv = Invoice::new("b", "C", Country::Brazil, Usd::from_cents(500), date(2019, 3, 1), date(2019, 3, 31), None).unwrap();
    let fv = compute_features(&inv, &[prior.clone(), inv.clone()], WindowSize::new(4).unwrap(), GRACE_DAYS).unwrap();
    assert_eq!(fv.total_paid_invoices, 1);
    assert_eq!(fv.total_invoices_late, 1);
    assert_eq!(fv.sum_amount_late_invoices, Usd::from_cents(10_000));
    assert_eq!(fv.average_days_late, Some(10.0));
    assert_eq!(fv.std_dev_invoices_late, Some(0.0));
    assert_eq!(fv.paid_invoice_lag, [1, -1, -1]);

    // same invoice five months back falls outside a four month window
    let old = Invoice { creation_date: date(2018, 10, 1), due_date: date(2018, 10, 31), settled_date: Some(date(2018, 11, 10)), ..prior };
    let fv = compute_features(&inv, &[old], WindowSize::new(4).unwrap(), GRACE_DAYS).unwrap();
    let cold = compute_features(&inv, &[], WindowSize::new(4).unwrap(), GRACE_DAYS).unwrap();
    assert_eq!(fv, cold);
    assert_eq!(cold.paid_invoice_lag, [-1, -1, -1]);
    assert!(cold.has_missing());
}

#[test]
fn foreign_history_is_rejected() {
    let a = Invoice::new("a", "C1", Country::Chile, Usd::from_cents(1), date(2019, 1, 1), date(2019, 1, 31), None).unwrap();
    let b = Invoice { customer_id: "C2".into(), invoice_id: "b".into(), ..a.clone() };
    assert!(compute_features(&a, &[b], WindowSize::new(4).unwrap(), GRACE_DAYS).is_err());
}

#[test]
fn imputation_ignores_test_rows() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let hist = random_history(&mut rng, "C", 40);
    let w = WindowSize::new(6).unwrap();
    let rows: Vec<_> = hist.iter().map(|i| compute_features(i, &hist, w, GRACE_DAYS).unwrap()).collect();
    let (train, test) = rows.split_at(25);
    let stats = fit_imputation(train).unwrap();
    let mut mutated = test.to_vec();
    for r in &mut mutated {
        r.average_days_late = Some(1e6);
    }
    let mut all = train.to_vec();
    all.extend(mutated);
    assert_eq!(fit_imputation(&all[..25]).unwrap(), stats);
    for r in &rows {
        let once = impute(r, &stats);
        assert!(!once.has_missing());
        assert_eq!(impute(&once, &stats), once);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    /// Invoices created on or after the reference date, and settlements on or
    /// after it, are invisible.
    #[test]
    fn no_leakage(seed in any::<u64>(), shift in 0i64..200, pick in any::<prop::sample::Index>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hist = random_history(&mut rng, "C", 30);
        let inv = &hist[pick.index(hist.len())];
        let r = inv.creation_date;
        let w = WindowSize::new(rng.random_range(3..=12)).unwrap();
        let before = compute_features(inv, &hist, w, GRACE_DAYS).unwrap();
        let mutated: Vec<Invoice> = hist
            .iter()
            .map(|h| {
                let mut h = h.clone();
                if h.invoice_id == inv.invoice_id {
                    return h;
                }
                if h.creation_date >= r {
                    h.base_amount = Usd::from_cents(h.base_amount.cents() * 3 + 7);
                    h.due_date += Duration::days(shift);
                    h.settled_date = None;
                } else if matches!(h.settled_date, Some(s) if s >= r) {
                    h.settled_date = Some(r + Duration::days(shift));
                }
                h
            })
            .collect();
        prop_assert_eq!(compute_features(inv, &mutated, w, GRACE_DAYS).unwrap(), before);
    }

    #[test]
    fn wider_window_never_loses_history(seed in any::<u64>(), w in 3u32..12) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hist = random_history(&mut rng, "C", 30);
        for inv in &hist {
            let a = compute_features(inv, &hist, WindowSize::new(w).unwrap(), GRACE_DAYS).unwrap();
            let b = compute_features(inv, &hist, WindowSize::new(w + 1).unwrap(), GRACE_DAYS).unwrap();
            prop_assert!(b.total_paid_invoices >= a.total_paid_invoices);
            prop_assert!(b.total_invoices_late >= a.total_invoices_late);
            prop_assert!(a.total_outstanding_late <= a.total_outstanding_invoices);
            prop_assert!(a.sum_late_outstanding <= a.sum_total_outstanding);
        }
    }
}
