use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sqv_core::ingest::MINUTE_MS;
use sqv_core::summary::*;
use sqv_core::testkit::oracle::brute_quantile;
use sqv_core::variation::VariationSeries;

fn random_values(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    // a few repeated values keep ties in play
    (0..n)
        .map(|_| {
            if rng.random_bool(0.1) {
                0.5
            } else {
                rng.random_range(-1e-2..1e-2)
            }
        })
        .collect()
}

#[test]
fn every_integer_rank_of_101_values_matches_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let values = random_values(&mut rng, 101);
    let probes: Vec<f64> = (0..=100).map(f64::from).collect();
    let t = percentiles_of(&values, &probes).unwrap();
    // with 101 points every integer rank is an order statistic
    for (p, v) in probes.iter().zip(&t.values) {
        assert_eq!(*v, brute_quantile(&values, *p), "rank {p}");
    }
    assert_eq!(t.values[0], values.iter().copied().fold(f64::INFINITY, f64::min));
    assert_eq!(t.values[100], values.iter().copied().fold(f64::NEG_INFINITY, f64::max));
}

#[test]
fn thousand_small_series_match_oracle_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let probes = [0.0, 5.0, 12.5, 25.0, 50.0, 75.0, 90.0, 95.0, 100.0];
    for _ in 0..1000 {
        let n = rng.random_range(1..60);
        let values = random_values(&mut rng, n);
        let t = percentiles_of(&values, &probes).unwrap();
        for (p, v) in probes.iter().zip(&t.values) {
            assert_eq!(*v, brute_quantile(&values, *p));
        }
        assert_eq!(
            iqr(&t).unwrap(),
            brute_quantile(&values, 75.0) - brute_quantile(&values, 25.0)
        );
    }
}

proptest! {
    #[test]
    fn shuffling_changes_nothing(seed in any::<u64>(), n in 1usize..300) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut values = random_values(&mut rng, n);
        let a = percentiles_of(&values, &STANDARD_PROBES).unwrap();
        values.shuffle(&mut rng);
        let b = percentiles_of(&values, &STANDARD_PROBES).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn year_tables_are_ordered_and_slices_partition(
        seed in any::<u64>(),
        n in 1usize..400,
        n_years in 1usize..6,
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // sparse timestamps spread across about five years, some before the epoch
        let mut minutes: Vec<i64> = (0..n).map(|_| rng.random_range(-20_000i64..2_700_000)).collect();
        minutes.sort_unstable();
        minutes.dedup();
        let ts: Vec<i64> = minutes.iter().map(|m| DEFAULT_EPOCH_START_MS + m * MINUTE_MS).collect();
        let values = random_values(&mut rng, ts.len());
        let s = VariationSeries::new(ts.clone(), values).unwrap();

        let slices = split_years(&s, DEFAULT_EPOCH_START_MS, n_years).unwrap();
        prop_assert_eq!(slices.len(), n_years);
        let total: usize = slices.iter().map(|y| y.series.len()).sum();
        prop_assert_eq!(total, s.len());
        for w in slices.windows(2) {
            prop_assert_eq!(w[0].end, w[1].start);
        }
        for t in &ts {
            prop_assert_eq!(slices.iter().filter(|y| y.start <= *t && *t < y.end).count(), 1);
        }

        let report = summarize(&s, DEFAULT_EPOCH_START_MS, n_years).unwrap();
        for y in &report.years {
            if let Some(t) = &y.table {
                prop_assert!(t.values.windows(2).all(|w| w[0] <= w[1]));
                prop_assert!(y.iqr.unwrap() >= 0.0);
            } else {
                prop_assert_eq!(y.count, 0);
            }
        }
    }
}

#[test]
fn year_boundaries_are_365_day_windows() {
    let day = DAY_MS / MINUTE_MS;
    let minutes = [0, 365 * day - 1, 365 * day, 730 * day, 1460 * day + 5];
    let ts = minutes
        .iter()
        .map(|m| DEFAULT_EPOCH_START_MS + m * MINUTE_MS)
        .collect();
    let s = VariationSeries::new(ts, vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
    let years = split_years(&s, DEFAULT_EPOCH_START_MS, 4).unwrap();
    let counts: Vec<usize> = years.iter().map(|y| y.series.len()).collect();
    // the leap-day overhang lands in year 4
    assert_eq!(counts, vec![2, 1, 1, 1]);
    assert_eq!(years[1].start, DEFAULT_EPOCH_START_MS + YEAR_MS);
    assert_eq!(years[3].end, DEFAULT_EPOCH_START_MS + 1460 * DAY_MS + 5 * MINUTE_MS + 1);
}

#[test]
fn errors() {
    assert_eq!(percentiles_of(&[], &STANDARD_PROBES), Err(SummaryError::EmptySeries));
    assert_eq!(
        percentiles_of(&[1.0], &[101.0]),
        Err(SummaryError::RankOutOfRange(101.0))
    );
    let t = percentiles_of(&[1.0, 2.0], &[50.0, 75.0]).unwrap();
    assert_eq!(iqr(&t), Err(SummaryError::MissingRank(25.0)));
    let s = VariationSeries::from_values(vec![1.0]).unwrap();
    assert_eq!(split_years(&s, 0, 0), Err(SummaryError::NoYears));
}
