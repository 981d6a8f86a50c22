use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sqv_core::exec::Exec;
use sqv_core::ingest::{PricePoint, PriceSeries, MINUTE_MS};
use sqv_core::variation::*;

const T0: i64 = 1_504_224_000_000;

fn series(minutes: &BTreeSet<i64>, price: impl Fn(i64) -> f64) -> PriceSeries {
    let points = minutes
        .iter()
        .map(|&m| PricePoint {
            open_time: T0 + m * MINUTE_MS,
            close: price(m),
        })
        .collect();
    PriceSeries::new("X", points).unwrap()
}

fn random_subset(rng: &mut ChaCha8Rng, keep: f64) -> BTreeSet<i64> {
    (0..1000).filter(|_| rng.random_bool(keep)).collect()
}

#[test]
fn intersection_matches_brute_force_sets() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..200 {
        let keep = rng.random_range(0.3..1.0);
        let (a, b, c) = (
            random_subset(&mut rng, keep),
            random_subset(&mut rng, keep),
            random_subset(&mut rng, keep),
        );
        let brute: Vec<i64> = a
            .iter()
            .filter(|m| b.contains(m) && c.contains(m))
            .map(|m| T0 + m * MINUTE_MS)
            .collect();
        let sa = series(&a, |m| 0.07 + m as f64 * 1e-6);
        let sb = series(&b, |m| 2000.0 + m as f64);
        let sc = series(&c, |m| 30000.0 - m as f64);
        match align(&sa, &sb, &sc) {
            Ok(t) => {
                assert_eq!(t.timestamps, brute);
                assert_eq!(t.dropped.spot, a.len() - brute.len());
                assert_eq!(t.dropped.num, b.len() - brute.len());
                assert_eq!(t.dropped.den, c.len() - brute.len());
                for (i, ts) in t.timestamps.iter().enumerate() {
                    let m = (ts - T0) / MINUTE_MS;
                    assert_eq!(t.spot[i], 0.07 + m as f64 * 1e-6);
                    assert_eq!(t.num[i], 2000.0 + m as f64);
                    assert_eq!(t.den[i], 30000.0 - m as f64);
                }
            }
            Err(VariationError::EmptyIntersection) => assert!(brute.is_empty()),
            Err(e) => panic!("{e}"),
        }
    }
}

#[test]
fn spot_missing_middle_minute() {
    let full: BTreeSet<i64> = [0, 1, 2].into();
    let holed: BTreeSet<i64> = [0, 2].into();
    let t = align(
        &series(&holed, |_| 0.07),
        &series(&full, |_| 2100.0),
        &series(&full, |_| 30000.0),
    )
    .unwrap();
    assert_eq!(t.timestamps, vec![T0, T0 + 2 * MINUTE_MS]);
    assert_eq!(
        t.dropped,
        DropCounts {
            spot: 0,
            num: 1,
            den: 1
        }
    );
}

#[test]
fn disjoint_legs_have_empty_intersection() {
    let a: BTreeSet<i64> = (0..10).collect();
    let b: BTreeSet<i64> = (10..20).collect();
    let err = align(&series(&a, |_| 1.0), &series(&b, |_| 1.0), &series(&a, |_| 1.0)).unwrap_err();
    assert!(matches!(err, VariationError::EmptyIntersection));
}

fn triple(spot: Vec<f64>, num: Vec<f64>, den: Vec<f64>) -> AlignedTriple {
    let n = spot.len();
    AlignedTriple {
        timestamps: (0..n as i64).map(|i| T0 + i * MINUTE_MS).collect(),
        spot,
        num,
        den,
        dropped: DropCounts::default(),
    }
}

fn random_triple(seed: u64, n: usize) -> AlignedTriple {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let num: Vec<f64> = (0..n).map(|_| rng.random_range(80.0..5000.0)).collect();
    let den: Vec<f64> = (0..n).map(|_| rng.random_range(2000.0..70000.0)).collect();
    let spot = num
        .iter()
        .zip(&den)
        .map(|(a, b)| a / b * (1.0 + rng.random_range(-2e-3..2e-3)))
        .collect();
    triple(spot, num, den)
}

proptest! {
    #[test]
    fn common_rescaling_of_usdt_legs_is_invisible(seed in any::<u64>(), k in 1e-3f64..1e3) {
        let t = random_triple(seed, 500);
        let base = compute_variation(&t).unwrap();
        let mut scaled = t.clone();
        scaled.num.iter_mut().for_each(|x| *x *= k);
        scaled.den.iter_mut().for_each(|x| *x *= k);
        let other = compute_variation(&scaled).unwrap();
        for (a, b) in base.values().iter().zip(other.values()) {
            prop_assert!((a - b).abs() <= 1e-15, "{a} vs {b}");
        }
    }

    #[test]
    fn variation_plus_log_quotient_restores_log_spot(seed in any::<u64>()) {
        let t = random_triple(seed, 500);
        let v = compute_variation(&t).unwrap();
        for i in 0..t.len() {
            let back = v.values()[i] + (t.num[i] / t.den[i]).ln();
            prop_assert!((back - t.spot[i].ln()).abs() <= 1e-12);
        }
    }
}

#[test]
fn quotient_leg_equal_to_spot_gives_zeros() {
    let t = random_triple(5, 2000);
    let spot: Vec<f64> = t.num.iter().zip(&t.den).map(|(a, b)| a / b).collect();
    let v = compute_variation(&triple(spot, t.num.clone(), t.den.clone())).unwrap();
    assert!(v.values().iter().all(|&x| x == 0.0));
}

#[test]
fn log_difference_form_agrees_with_quotient_form() {
    let t = random_triple(9, 100_000);
    let v = compute_variation(&t).unwrap();
    let worst = (0..t.len())
        .map(|i| {
            let alt = t.spot[i].ln() - (t.num[i].ln() - t.den[i].ln());
            (alt - v.values()[i]).abs()
        })
        .fold(0.0, f64::max);
    assert!(worst < 1e-14, "{worst}");
}

#[test]
fn execution_mode_does_not_change_values() {
    let t = random_triple(3, 100_000);
    assert_eq!(
        compute_variation_with(&t, Exec::Sequential).unwrap(),
        compute_variation_with(&t, Exec::Parallel).unwrap()
    );
}

#[test]
fn non_positive_leg_is_reported_by_index() {
    let mut t = random_triple(1, 10);
    t.den[7] = 0.0;
    assert!(matches!(
        compute_variation(&t),
        Err(VariationError::NonPositivePrice(7))
    ));
}

#[test]
fn file_round_trip_is_exact() {
    let v = compute_variation(&random_triple(4, 3000)).unwrap();
    let mut buf = Vec::new();
    write_variation(&v, &mut buf).unwrap();
    assert!(buf.starts_with(b"open_time_ms,variation\n"));
    assert_eq!(read_variation(buf.as_slice()).unwrap(), v);
}
