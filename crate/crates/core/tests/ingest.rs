use std::collections::HashMap;
use std::sync::Mutex;
use std::time::Duration;

use proptest::prelude::*;
use sqv_core::ingest::*;
use sqv_core::testkit::fixtures::{kline_json, synthetic_klines, KlineServer};

const T0: i64 = 1_504_224_000_000;

fn quick() -> FetchConfig {
    FetchConfig {
        initial_backoff: Duration::from_millis(1),
        max_backoff: Duration::from_millis(4),
        pacing: Duration::ZERO,
        ..FetchConfig::default()
    }
}

#[test]
fn ten_row_fixture_matches_hand_transcription() {
    let raw = include_str!("fixtures/ethbtc_10rows.csv");
    let s = parse_klines(raw.as_bytes(), "ETHBTC").unwrap();
    // read off column 5 of the fixture by eye
    let expected = [
        0.081951, 0.081923, 0.08199, 0.08196, 0.081877, 0.081812, 0.081888, 0.081901, 0.081766,
        0.08183,
    ];
    assert_eq!(s.len(), 10);
    for (i, (p, e)) in s.points().iter().zip(expected).enumerate() {
        assert_eq!(p.open_time, T0 + i as i64 * MINUTE_MS);
        assert_eq!(p.close, e);
    }
    assert!(s.gaps().is_empty());
}

/// Serves canned pages keyed by request start and records every request.
struct Replay {
    pages: HashMap<i64, String>,
    seen: Mutex<Vec<PageRequest>>,
}

impl PageSource for Replay {
    fn fetch_page(&self, req: &PageRequest) -> Result<String, PageError> {
        self.seen.lock().unwrap().push(req.clone());
        Ok(self.pages.get(&req.start_ms).cloned().unwrap_or_else(|| "[]".into()))
    }
}

fn three_page_replay(skip: &[i64]) -> Replay {
    let rows = synthetic_klines(0.07, T0, 2500, skip);
    let mut pages = HashMap::new();
    let mut cursor = T0;
    for chunk in rows.chunks(1000) {
        pages.insert(cursor, kline_json(chunk));
        cursor = chunk.last().unwrap().open_time + MINUTE_MS;
    }
    Replay {
        pages,
        seen: Mutex::new(Vec::new()),
    }
}

#[test]
fn three_page_replay_concatenates() {
    let src = three_page_replay(&[]);
    let out = fetch_klines_from(&src, "ETHBTC", "1m", T0, T0 + 2500 * MINUTE_MS, &quick()).unwrap();
    assert_eq!(out.series.len(), 2500);
    assert!(out.gaps.is_empty());
    assert!(out
        .series
        .points()
        .windows(2)
        .all(|w| w[1].open_time - w[0].open_time == MINUTE_MS));
    let seen = src.seen.lock().unwrap();
    assert_eq!(seen.len(), 3);
    assert_eq!(
        seen.iter().map(|r| r.start_ms).collect::<Vec<_>>(),
        vec![T0, T0 + 1000 * MINUTE_MS, T0 + 2000 * MINUTE_MS]
    );
    assert!(seen.iter().all(|r| r.end_ms == T0 + 2500 * MINUTE_MS - 1 && r.limit == 1000));
}

#[test]
fn missing_minute_in_page_two_is_a_gap() {
    let src = three_page_replay(&[1500]);
    let out = fetch_klines_from(&src, "ETHBTC", "1m", T0, T0 + 2500 * MINUTE_MS, &quick()).unwrap();
    assert_eq!(out.series.len(), 2499);
    assert_eq!(
        out.gaps,
        vec![Gap {
            first_missing: T0 + 1500 * MINUTE_MS,
            missing: 1
        }]
    );
}

#[test]
fn empty_window_is_rejected() {
    let src = three_page_replay(&[]);
    let err = fetch_klines_from(&src, "ETHBTC", "1m", T0, T0, &quick()).unwrap_err();
    assert!(matches!(err, IngestError::EmptyRange { .. }));
    assert!(src.seen.lock().unwrap().is_empty());
}

struct Flaky {
    failures: Mutex<usize>,
    body: String,
}

impl PageSource for Flaky {
    fn fetch_page(&self, _: &PageRequest) -> Result<String, PageError> {
        let mut f = self.failures.lock().unwrap();
        if *f > 0 {
            *f -= 1;
            return Err(PageError::Transient("timeout".into()));
        }
        Ok(self.body.clone())
    }
}

#[test]
fn transient_failures_are_retried_within_budget() {
    let body = kline_json(&synthetic_klines(1.0, T0, 5, &[]));
    let src = Flaky {
        failures: Mutex::new(3),
        body: body.clone(),
    };
    let out = fetch_klines_from(&src, "X", "1m", T0, T0 + 5 * MINUTE_MS, &quick()).unwrap();
    assert_eq!(out.series.len(), 5);

    let src = Flaky {
        failures: Mutex::new(100),
        body,
    };
    let cfg = FetchConfig {
        max_retries: 2,
        ..quick()
    };
    match fetch_klines_from(&src, "X", "1m", T0, T0 + 5 * MINUTE_MS, &cfg) {
        Err(IngestError::Network { attempts, .. }) => assert_eq!(attempts, 3),
        other => panic!("{other:?}"),
    }
}

#[test]
fn http_fixture_server_round_trip() {
    let mut data = HashMap::new();
    data.insert("ETHBTC".to_string(), synthetic_klines(0.07, T0, 2500, &[1234]));
    let server = KlineServer::start(data, 2);
    let out = fetch_klines("ETHBTC", "1m", T0, T0 + 2500 * MINUTE_MS, &server.url, &quick()).unwrap();
    assert_eq!(out.series.len(), 2499);
    assert_eq!(out.gaps.len(), 1);
    assert_eq!(out.gaps[0].first_missing, T0 + 1234 * MINUTE_MS);
    // two refused attempts, then three pages
    assert_eq!(server.requests(), 5);
    assert!(server.log()[2].contains("startTime=1504224000000"));
}

#[test]
fn http_unknown_symbol_is_fatal() {
    let server = KlineServer::start(HashMap::new(), 0);
    let err = fetch_klines("NOPE", "1m", T0, T0 + MINUTE_MS, &server.url, &quick()).unwrap_err();
    assert!(matches!(err, IngestError::Network { attempts: 1, .. }), "{err:?}");
}

#[test]
fn http_unreachable_endpoint_exhausts_retries() {
    // bind then drop to obtain a port nobody listens on
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
    let cfg = FetchConfig {
        max_retries: 1,
        ..quick()
    };
    let url = format!("http://127.0.0.1:{port}/api/v3/klines");
    let err = fetch_klines("ETHBTC", "1m", T0, T0 + MINUTE_MS, &url, &cfg).unwrap_err();
    assert!(matches!(err, IngestError::Network { attempts: 2, .. }), "{err:?}");
}

fn arb_series() -> impl Strategy<Value = PriceSeries> {
    prop::collection::vec((1i64..5, 1e-8f64..1e6), 1..200).prop_map(|steps| {
        let mut t = T0;
        let points = steps
            .into_iter()
            .map(|(dm, close)| {
                t += dm * MINUTE_MS;
                PricePoint { open_time: t, close }
            })
            .collect();
        PriceSeries::new("P", points).unwrap()
    })
}

proptest! {
    #[test]
    fn serialize_then_parse_is_identity(s in arb_series()) {
        let mut buf = Vec::new();
        write_series(&s, &mut buf).unwrap();
        let back = read_series(buf.as_slice(), "P").unwrap();
        prop_assert_eq!(&back, &s);
        let auto = read_price_file(buf.as_slice(), "P").unwrap();
        prop_assert_eq!(auto, s);
    }

    #[test]
    fn parsed_series_sit_on_the_minute_grid(
        skips in prop::collection::btree_set(1i64..300, 0..40),
        shuffle_seed in any::<u64>(),
    ) {
        let skip: Vec<i64> = skips.into_iter().collect();
        let mut rows = synthetic_klines(2.5, T0, 300, &skip);
        // archives are not guaranteed sorted
        let n = rows.len();
        for i in (1..n).rev() {
            let j = (shuffle_seed.wrapping_mul(i as u64 + 7) % (i as u64 + 1)) as usize;
            rows.swap(i, j);
        }
        let csv = sqv_core::testkit::fixtures::kline_csv(&rows);
        let s = parse_klines(csv.as_bytes(), "P").unwrap();
        prop_assert_eq!(s.len(), 300 - skip.len());
        for w in s.points().windows(2) {
            let d = w[1].open_time - w[0].open_time;
            prop_assert!(d > 0 && d % MINUTE_MS == 0);
        }
        // trailing skipped minutes are outside the series, not gaps
        let last = (0..300).rev().find(|m| !skip.contains(m)).unwrap();
        let missing: i64 = s.gaps().iter().map(|g| g.missing).sum();
        prop_assert_eq!(missing as usize, skip.iter().filter(|&&m| m < last).count());
    }
}
