//! Kline ingestion: Binance CSV archives, the klines REST endpoint, and the
//! normalized `open_time_ms,close` series files the rest of the pipeline reads.
//!
//! All timestamps are UTC milliseconds since the Unix epoch. Only the close
//! price of each candle is carried forward.

use std::fmt;
use std::io::{BufRead, BufReader, Read, Write};
use std::thread;
use std::time::Duration;

use serde_json::Value;
use thiserror::Error;

/// One minute in milliseconds; the only supported kline interval.
pub const MINUTE_MS: i64 = 60_000;

/// Binance caps the klines endpoint at this many rows per request.
pub const DEFAULT_PAGE_LIMIT: usize = 1000;

/// Binance spot archives switched to microsecond timestamps in 2025. Anything
/// at or above this is treated as microseconds.
const MICROS_THRESHOLD: i64 = 100_000_000_000_000;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("malformed kline row at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error("duplicate or non-increasing timestamp {timestamp}")]
    NonMonotonicTimestamp { timestamp: i64 },
    #[error("timestamp {timestamp} is not on the 1-minute grid of the preceding point")]
    OffGrid { timestamp: i64 },
    #[error("non-positive close {close} at {timestamp}")]
    NonPositivePrice { timestamp: i64, close: f64 },
    #[error("no kline rows in input")]
    EmptyInput,
    #[error("empty time range [{start}, {end})")]
    EmptyRange { start: i64, end: i64 },
    #[error("unsupported kline interval {0:?} (only \"1m\")")]
    UnsupportedInterval(String),
    #[error("network error after {attempts} attempt(s): {message}")]
    Network { attempts: u32, message: String },
    #[error("malformed endpoint response: {0}")]
    BadResponse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = IngestError> = std::result::Result<T, E>;

/// One exchange candle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kline {
    pub open_time: i64,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
    pub close_time: i64,
}

impl Kline {
    /// Checks the OHLC envelope, price positivity and time ordering.
    pub fn validate(&self) -> std::result::Result<(), String> {
        for (name, v) in [
            ("open", self.open),
            ("high", self.high),
            ("low", self.low),
            ("close", self.close),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(format!("{name} price {v} is not strictly positive"));
            }
        }
        if !(self.volume.is_finite() && self.volume >= 0.0) {
            return Err(format!("volume {} is negative", self.volume));
        }
        if self.low > self.open.min(self.close) || self.high < self.open.max(self.close) {
            return Err(format!(
                "OHLC envelope violated (o={}, h={}, l={}, c={})",
                self.open, self.high, self.low, self.close
            ));
        }
        if self.close_time <= self.open_time {
            return Err(format!(
                "close_time {} not after open_time {}",
                self.close_time, self.open_time
            ));
        }
        Ok(())
    }

    /// Builds a kline from the first seven fields of a Binance row.
    pub fn from_fields<S: AsRef<str>>(fields: &[S]) -> std::result::Result<Kline, String> {
        if fields.len() < 7 {
            return Err(format!("expected at least 7 fields, found {}", fields.len()));
        }
        let int = |i: usize| -> std::result::Result<i64, String> {
            let s = fields[i].as_ref().trim();
            s.parse::<i64>()
                .map_err(|_| format!("field {i} ({s:?}) is not an integer timestamp"))
        };
        let dec = |i: usize| -> std::result::Result<f64, String> {
            let s = fields[i].as_ref().trim();
            s.parse::<f64>()
                .map_err(|_| format!("field {i} ({s:?}) is not a decimal"))
        };
        let mut k = Kline {
            open_time: int(0)?,
            open: dec(1)?,
            high: dec(2)?,
            low: dec(3)?,
            close: dec(4)?,
            volume: dec(5)?,
            close_time: int(6)?,
        };
        if k.open_time >= MICROS_THRESHOLD {
            k.open_time /= 1000;
            k.close_time /= 1000;
        }
        k.validate()?;
        Ok(k)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PricePoint {
    pub open_time: i64,
    pub close: f64,
}

/// A run of missing minutes between two consecutive points.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Gap {
    /// Open time of the first missing minute.
    pub first_missing: i64,
    /// Number of consecutive missing minutes.
    pub missing: i64,
}

impl fmt::Display for Gap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "gap of {} minute(s) starting at {}",
            self.missing, self.first_missing
        )
    }
}

/// Close prices of one instrument, strictly increasing in time.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    symbol: String,
    points: Vec<PricePoint>,
}

impl PriceSeries {
    /// Validates ordering, minute grid and positivity. `points` must already
    /// be sorted.
    pub fn new(symbol: impl Into<String>, points: Vec<PricePoint>) -> Result<Self> {
        if points.is_empty() {
            return Err(IngestError::EmptyInput);
        }
        for p in &points {
            if !(p.close.is_finite() && p.close > 0.0) {
                return Err(IngestError::NonPositivePrice {
                    timestamp: p.open_time,
                    close: p.close,
                });
            }
        }
        for w in points.windows(2) {
            let delta = w[1].open_time - w[0].open_time;
            if delta <= 0 {
                return Err(IngestError::NonMonotonicTimestamp {
                    timestamp: w[1].open_time,
                });
            }
            if delta % MINUTE_MS != 0 {
                return Err(IngestError::OffGrid {
                    timestamp: w[1].open_time,
                });
            }
        }
        Ok(Self {
            symbol: symbol.into(),
            points,
        })
    }

    /// Sorts `points` by time first; equal timestamps are rejected.
    pub fn from_unsorted(symbol: impl Into<String>, mut points: Vec<PricePoint>) -> Result<Self> {
        points.sort_by_key(|p| p.open_time);
        Self::new(symbol, points)
    }

    pub fn symbol(&self) -> &str {
        &self.symbol
    }

    pub fn points(&self) -> &[PricePoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Missing minutes, in time order. Never interpolated.
    pub fn gaps(&self) -> Vec<Gap> {
        self.points
            .windows(2)
            .filter_map(|w| {
                let missing = (w[1].open_time - w[0].open_time) / MINUTE_MS - 1;
                (missing > 0).then(|| Gap {
                    first_missing: w[0].open_time + MINUTE_MS,
                    missing,
                })
            })
            .collect()
    }
}

/// Parses a Binance kline CSV (no header; a header line is skipped if present).
pub fn parse_klines<R: Read>(raw: R, symbol: &str) -> Result<PriceSeries> {
    let reader = BufReader::new(raw);
    let mut points = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if lineno == 1 && trimmed.starts_with(|c: char| c.is_ascii_alphabetic()) {
            continue;
        }
        let fields: Vec<&str> = trimmed.split(',').collect();
        let k = Kline::from_fields(&fields).map_err(|reason| IngestError::MalformedRow {
            line: lineno,
            reason,
        })?;
        points.push(PricePoint {
            open_time: k.open_time,
            close: k.close,
        });
    }
    if points.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    PriceSeries::from_unsorted(symbol, points)
}

/// Header of the normalized series file.
pub const SERIES_HEADER: &str = "open_time_ms,close";

/// Writes the normalized `open_time_ms,close` file. Closes are printed in
/// shortest round-trip form, so [`read_series`] restores them exactly.
pub fn write_series<W: Write>(series: &PriceSeries, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{SERIES_HEADER}")?;
    for p in &series.points {
        writeln!(out, "{},{}", p.open_time, p.close)?;
    }
    Ok(())
}

/// Reads a normalized series file written by [`write_series`].
pub fn read_series<R: Read>(raw: R, symbol: &str) -> Result<PriceSeries> {
    let reader = BufReader::new(raw);
    let mut points = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || (lineno == 1 && trimmed == SERIES_HEADER) {
            continue;
        }
        let malformed = |reason: String| IngestError::MalformedRow {
            line: lineno,
            reason,
        };
        let (t, c) = trimmed
            .split_once(',')
            .ok_or_else(|| malformed("expected two fields".into()))?;
        let open_time = t
            .trim()
            .parse::<i64>()
            .map_err(|_| malformed(format!("bad timestamp {t:?}")))?;
        let close = c
            .trim()
            .parse::<f64>()
            .map_err(|_| malformed(format!("bad close {c:?}")))?;
        if !(close.is_finite() && close > 0.0) {
            return Err(malformed(format!("close {close} is not strictly positive")));
        }
        points.push(PricePoint { open_time, close });
    }
    if points.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    PriceSeries::from_unsorted(symbol, points)
}

/// Reads either layout, deciding by the first line.
pub fn read_price_file<R: Read>(raw: R, symbol: &str) -> Result<PriceSeries> {
    let mut buf = String::new();
    BufReader::new(raw).read_to_string(&mut buf)?;
    if buf.trim_start().starts_with(SERIES_HEADER) {
        read_series(buf.as_bytes(), symbol)
    } else {
        parse_klines(buf.as_bytes(), symbol)
    }
}

/// Parses one page of the klines REST endpoint (JSON array of arrays, prices
/// as strings).
pub fn parse_kline_page(body: &str) -> Result<Vec<Kline>> {
    let json: Value =
        serde_json::from_str(body).map_err(|e| IngestError::BadResponse(e.to_string()))?;
    let rows = json
        .as_array()
        .ok_or_else(|| IngestError::BadResponse("expected a JSON array".into()))?;
    rows.iter()
        .enumerate()
        .map(|(i, row)| {
            let arr = row
                .as_array()
                .ok_or_else(|| IngestError::BadResponse(format!("row {i} is not an array")))?;
            let fields: Vec<String> = arr
                .iter()
                .map(|v| match v {
                    Value::String(s) => s.clone(),
                    other => other.to_string(),
                })
                .collect();
            Kline::from_fields(&fields).map_err(|reason| IngestError::MalformedRow {
                line: i + 1,
                reason,
            })
        })
        .collect()
}

fn interval_ms(interval: &str) -> Result<i64> {
    match interval {
        "1m" => Ok(MINUTE_MS),
        other => Err(IngestError::UnsupportedInterval(other.to_string())),
    }
}

/// Parameters of one klines request. `end_ms` is inclusive, as on the wire.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PageRequest {
    pub symbol: String,
    pub interval: String,
    pub start_ms: i64,
    pub end_ms: i64,
    pub limit: usize,
}

/// Failure of a single page request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PageError {
    /// Worth retrying (connection failure, timeout, HTTP 429 or 5xx).
    Transient(String),
    /// Retrying will not help.
    Fatal(String),
}

/// Something that answers klines page requests with a raw JSON body.
pub trait PageSource: Sync {
    fn fetch_page(&self, req: &PageRequest) -> std::result::Result<String, PageError>;
}

#[derive(Debug, Clone)]
pub struct FetchConfig {
    pub page_limit: usize,
    /// Retries after the first attempt of each page.
    pub max_retries: u32,
    pub initial_backoff: Duration,
    pub max_backoff: Duration,
    /// Pause between successive page requests.
    pub pacing: Duration,
}

impl Default for FetchConfig {
    fn default() -> Self {
        Self {
            page_limit: DEFAULT_PAGE_LIMIT,
            max_retries: 5,
            initial_backoff: Duration::from_millis(500),
            max_backoff: Duration::from_secs(16),
            pacing: Duration::from_millis(100),
        }
    }
}

/// A fetched series together with the gaps found in it.
#[derive(Debug, Clone)]
pub struct FetchOutcome {
    pub series: PriceSeries,
    pub gaps: Vec<Gap>,
}

fn fetch_with_retries(
    source: &dyn PageSource,
    req: &PageRequest,
    cfg: &FetchConfig,
) -> Result<String> {
    let mut backoff = cfg.initial_backoff;
    let mut attempt = 0u32;
    loop {
        attempt += 1;
        match source.fetch_page(req) {
            Ok(body) => return Ok(body),
            Err(PageError::Fatal(message)) => {
                return Err(IngestError::Network {
                    attempts: attempt,
                    message,
                })
            }
            Err(PageError::Transient(message)) => {
                if attempt > cfg.max_retries {
                    return Err(IngestError::Network {
                        attempts: attempt,
                        message,
                    });
                }
                thread::sleep(backoff);
                backoff = (backoff * 2).min(cfg.max_backoff);
            }
        }
    }
}

/// Downloads `[start, end)` page by page from `source`.
///
/// Missing minutes are reported in [`FetchOutcome::gaps`], not treated as
/// failures.
pub fn fetch_klines_from(
    source: &dyn PageSource,
    symbol: &str,
    interval: &str,
    start: i64,
    end: i64,
    cfg: &FetchConfig,
) -> Result<FetchOutcome> {
    let step = interval_ms(interval)?;
    if start >= end {
        return Err(IngestError::EmptyRange { start, end });
    }
    let mut points: Vec<PricePoint> = Vec::new();
    let mut cursor = start;
    let mut first = true;
    while cursor < end {
        if !first && !cfg.pacing.is_zero() {
            thread::sleep(cfg.pacing);
        }
        first = false;
        let req = PageRequest {
            symbol: symbol.to_string(),
            interval: interval.to_string(),
            start_ms: cursor,
            end_ms: end - 1,
            limit: cfg.page_limit,
        };
        let body = fetch_with_retries(source, &req, cfg)?;
        let rows = parse_kline_page(&body)?;
        let Some(last) = rows.last().map(|k| k.open_time) else {
            break;
        };
        let full_page = rows.len() >= cfg.page_limit;
        points.extend(
            rows.into_iter()
                .filter(|k| k.open_time >= start && k.open_time < end)
                .map(|k| PricePoint {
                    open_time: k.open_time,
                    close: k.close,
                }),
        );
        if !full_page || last + step <= cursor {
            break;
        }
        cursor = last + step;
    }
    if points.is_empty() {
        return Err(IngestError::EmptyInput);
    }
    let series = PriceSeries::from_unsorted(symbol, points)?;
    let gaps = series.gaps();
    Ok(FetchOutcome { series, gaps })
}

/// Downloads `[start, end)` from a klines REST endpoint such as
/// `https://api.binance.com/api/v3/klines`.
#[cfg(feature = "http")]
pub fn fetch_klines(
    symbol: &str,
    interval: &str,
    start: i64,
    end: i64,
    endpoint: &str,
    cfg: &FetchConfig,
) -> Result<FetchOutcome> {
    let source = HttpSource::new(endpoint);
    fetch_klines_from(&source, symbol, interval, start, end, cfg)
}

pub const DEFAULT_ENDPOINT: &str = "https://api.binance.com/api/v3/klines";

/// Blocking HTTP client for the klines endpoint.
#[cfg(feature = "http")]
pub struct HttpSource {
    agent: ureq::Agent,
    endpoint: String,
}

#[cfg(feature = "http")]
impl HttpSource {
    pub fn new(endpoint: &str) -> Self {
        let config = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(30)))
            .http_status_as_error(false)
            .build();
        Self {
            agent: config.into(),
            endpoint: endpoint.to_string(),
        }
    }
}

#[cfg(feature = "http")]
impl PageSource for HttpSource {
    fn fetch_page(&self, req: &PageRequest) -> std::result::Result<String, PageError> {
        let mut resp = self
            .agent
            .get(&self.endpoint)
            .query("symbol", &req.symbol)
            .query("interval", &req.interval)
            .query("startTime", req.start_ms.to_string())
            .query("endTime", req.end_ms.to_string())
            .query("limit", req.limit.to_string())
            .call()
            .map_err(|e| PageError::Transient(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| PageError::Transient(e.to_string()))?;
        match status {
            200..=299 => Ok(body),
            429 | 418 | 500..=599 => Err(PageError::Transient(format!("HTTP {status}: {body}"))),
            _ => Err(PageError::Fatal(format!("HTTP {status}: {body}"))),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const ROW: &str = "1504224000000,4689.89,4689.89,4689.89,4689.89,0.5,1504224059999,2345.0,3,0.1,469.0,0";

    #[test]
    fn single_row() {
        let s = parse_klines(ROW.as_bytes(), "BTCUSDT").unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.points()[0].open_time, 1_504_224_000_000);
        assert_eq!(s.points()[0].close, 4689.89);
        assert_eq!(s.symbol(), "BTCUSDT");
    }

    #[test]
    fn duplicate_open_time_rejected() {
        let raw = format!("{ROW}\n{ROW}\n");
        assert!(matches!(
            parse_klines(raw.as_bytes(), "X"),
            Err(IngestError::NonMonotonicTimestamp {
                timestamp: 1_504_224_000_000
            })
        ));
    }

    #[test]
    fn empty_input() {
        assert!(matches!(
            parse_klines("".as_bytes(), "X"),
            Err(IngestError::EmptyInput)
        ));
        assert!(matches!(
            parse_klines("\n\n".as_bytes(), "X"),
            Err(IngestError::EmptyInput)
        ));
    }

    #[test]
    fn malformed_rows_report_line() {
        let raw = format!("{ROW}\n1504224060000,1,1,1,abc,0.5,1504224119999\n");
        match parse_klines(raw.as_bytes(), "X") {
            Err(IngestError::MalformedRow { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let short = "1504224000000,1,1,1,1,1\n";
        assert!(matches!(
            parse_klines(short.as_bytes(), "X"),
            Err(IngestError::MalformedRow { line: 1, .. })
        ));
        let negative = "1504224000000,1,1,-1,1,1,1504224059999\n";
        assert!(matches!(
            parse_klines(negative.as_bytes(), "X"),
            Err(IngestError::MalformedRow { line: 1, .. })
        ));
        let envelope = "1504224000000,1,1.5,1.2,1.1,1,1504224059999\n";
        assert!(matches!(
            parse_klines(envelope.as_bytes(), "X"),
            Err(IngestError::MalformedRow { line: 1, .. })
        ));
        let backwards = "1504224000000,1,1,1,1,1,1504224000000\n";
        assert!(matches!(
            parse_klines(backwards.as_bytes(), "X"),
            Err(IngestError::MalformedRow { line: 1, .. })
        ));
    }

    #[test]
    fn unsorted_rows_are_sorted() {
        let raw = "1504224060000,2,2,2,2,1,1504224119999\n1504224000000,1,1,1,1,1,1504224059999\n";
        let s = parse_klines(raw.as_bytes(), "X").unwrap();
        assert_eq!(s.points()[0].close, 1.0);
        assert_eq!(s.points()[1].close, 2.0);
    }

    #[test]
    fn microsecond_archives_are_normalized() {
        let raw = "1735689600000000,1,1,1,1,1,1735689659999999\n";
        let s = parse_klines(raw.as_bytes(), "X").unwrap();
        assert_eq!(s.points()[0].open_time, 1_735_689_600_000);
    }

    #[test]
    fn header_line_skipped() {
        let raw = format!("open_time,open,high,low,close,volume,close_time\n{ROW}\n");
        assert_eq!(parse_klines(raw.as_bytes(), "X").unwrap().len(), 1);
    }

    #[test]
    fn off_grid_timestamp_rejected() {
        let pts = vec![
            PricePoint {
                open_time: 0,
                close: 1.0,
            },
            PricePoint {
                open_time: 90_000,
                close: 1.0,
            },
        ];
        assert!(matches!(
            PriceSeries::new("X", pts),
            Err(IngestError::OffGrid { timestamp: 90_000 })
        ));
    }

    #[test]
    fn gaps_are_reported() {
        let pts = [0, 1, 2, 5, 6, 8]
            .iter()
            .map(|&m| PricePoint {
                open_time: m * MINUTE_MS,
                close: 1.0,
            })
            .collect();
        let s = PriceSeries::new("X", pts).unwrap();
        assert_eq!(
            s.gaps(),
            vec![
                Gap {
                    first_missing: 3 * MINUTE_MS,
                    missing: 2
                },
                Gap {
                    first_missing: 7 * MINUTE_MS,
                    missing: 1
                }
            ]
        );
    }

    #[test]
    fn normalized_file_layout() {
        let s = parse_klines(ROW.as_bytes(), "BTCUSDT").unwrap();
        let mut buf = Vec::new();
        write_series(&s, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "open_time_ms,close\n1504224000000,4689.89\n"
        );
        assert_eq!(read_price_file(buf.as_slice(), "BTCUSDT").unwrap(), s);
        assert_eq!(read_price_file(ROW.as_bytes(), "BTCUSDT").unwrap(), s);
    }

    #[test]
    fn page_parsing_accepts_binance_json() {
        let body = r#"[[1504224000000,"4689.89","4689.89","4689.89","4689.89","0.5",1504224059999,"2345.0",3,"0.1","469.0","0"]]"#;
        let rows = parse_kline_page(body).unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].close, 4689.89);
        assert!(matches!(
            parse_kline_page(r#"{"code":-1121}"#),
            Err(IngestError::BadResponse(_))
        ));
    }

    struct Unreachable;
    impl PageSource for Unreachable {
        fn fetch_page(&self, _: &PageRequest) -> std::result::Result<String, PageError> {
            Err(PageError::Transient("connection refused".into()))
        }
    }

    #[test]
    fn empty_range_and_bad_interval() {
        let cfg = FetchConfig::default();
        assert!(matches!(
            fetch_klines_from(&Unreachable, "X", "1m", 5, 5, &cfg),
            Err(IngestError::EmptyRange { start: 5, end: 5 })
        ));
        assert!(matches!(
            fetch_klines_from(&Unreachable, "X", "1h", 0, 5, &cfg),
            Err(IngestError::UnsupportedInterval(_))
        ));
    }

    #[test]
    fn retry_budget_is_bounded() {
        let cfg = FetchConfig {
            max_retries: 3,
            initial_backoff: Duration::from_millis(1),
            max_backoff: Duration::from_millis(2),
            pacing: Duration::ZERO,
            ..FetchConfig::default()
        };
        match fetch_klines_from(&Unreachable, "X", "1m", 0, MINUTE_MS, &cfg) {
            Err(IngestError::Network { attempts, .. }) => assert_eq!(attempts, 4),
            other => panic!("unexpected {other:?}"),
        }
    }
}
