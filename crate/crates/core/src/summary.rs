//! Percentile tables, 365-day year slices and interquartile ranges.
//!
//! Quantiles use linear interpolation between the closest order statistics:
//! for rank `p` in `[0, 100]` over `n` sorted values, `h = (n - 1) * p / 100`
//! and the result is `x[floor(h)] + (h - floor(h)) * (x[floor(h) + 1] - x[floor(h)])`.

use serde::Serialize;
use thiserror::Error;

use crate::variation::VariationSeries;

#[derive(Debug, Error, PartialEq)]
pub enum SummaryError {
    #[error("cannot take percentiles of an empty series")]
    EmptySeries,
    #[error("percentile rank {0} outside [0, 100]")]
    RankOutOfRange(f64),
    #[error("percentile table has no rank {0}")]
    MissingRank(f64),
    #[error("need at least one year slice")]
    NoYears,
}

pub type Result<T, E = SummaryError> = std::result::Result<T, E>;

/// 2017-09-01T00:00:00Z.
pub const DEFAULT_EPOCH_START_MS: i64 = 1_504_224_000_000;
pub const DAY_MS: i64 = 86_400_000;
pub const YEAR_MS: i64 = 365 * DAY_MS;
/// Ranks shown in the percentile tables.
pub const STANDARD_PROBES: [f64; 5] = [0.0, 25.0, 50.0, 75.0, 100.0];

/// Quantile of already-sorted data at percentile rank `rank` (0..=100).
///
/// # Panics
/// If `sorted` is empty.
pub fn quantile_sorted(sorted: &[f64], rank: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of empty data");
    let n = sorted.len();
    let h = (n - 1) as f64 * rank / 100.0;
    let lo = (h.floor() as usize).min(n - 1);
    let hi = (lo + 1).min(n - 1);
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// Sorted copy of `values`.
pub fn sorted_copy(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    v
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PercentileTable {
    pub probes: Vec<f64>,
    pub values: Vec<f64>,
}

impl PercentileTable {
    /// Value at `rank`, if that rank was probed.
    pub fn value(&self, rank: f64) -> Option<f64> {
        self.probes
            .iter()
            .position(|&p| p == rank)
            .map(|i| self.values[i])
    }
}

pub fn percentiles(series: &VariationSeries, probes: &[f64]) -> Result<PercentileTable> {
    percentiles_of(series.values(), probes)
}

/// Same as [`percentiles`] on a bare slice.
pub fn percentiles_of(values: &[f64], probes: &[f64]) -> Result<PercentileTable> {
    if values.is_empty() {
        return Err(SummaryError::EmptySeries);
    }
    if let Some(&p) = probes.iter().find(|p| !(0.0..=100.0).contains(*p)) {
        return Err(SummaryError::RankOutOfRange(p));
    }
    let sorted = sorted_copy(values);
    Ok(PercentileTable {
        probes: probes.to_vec(),
        values: probes.iter().map(|&p| quantile_sorted(&sorted, p)).collect(),
    })
}

/// `value(75) - value(25)`.
pub fn iqr(table: &PercentileTable) -> Result<f64> {
    let q75 = table.value(75.0).ok_or(SummaryError::MissingRank(75.0))?;
    let q25 = table.value(25.0).ok_or(SummaryError::MissingRank(25.0))?;
    Ok(q75 - q25)
}

#[derive(Debug, Clone, PartialEq)]
pub struct YearSlice {
    /// 1-based year number.
    pub label: usize,
    /// Inclusive start, ms.
    pub start: i64,
    /// Exclusive end, ms.
    pub end: i64,
    pub series: VariationSeries,
}

/// Cuts the series into `n_years` consecutive 365-day windows starting at
/// `epoch_start`. The first window is stretched back to the first sample and
/// the last one forward to the final sample, so every point lands in exactly
/// one slice. Slices may be empty.
pub fn split_years(
    series: &VariationSeries,
    epoch_start: i64,
    n_years: usize,
) -> Result<Vec<YearSlice>> {
    if n_years == 0 {
        return Err(SummaryError::NoYears);
    }
    let ts = series.timestamps();
    let first = ts.first().copied().unwrap_or(epoch_start);
    let last = ts.last().copied().unwrap_or(epoch_start);
    Ok((1..=n_years)
        .map(|k| {
            let mut start = epoch_start + (k as i64 - 1) * YEAR_MS;
            let mut end = epoch_start + k as i64 * YEAR_MS;
            if k == 1 {
                start = start.min(first);
            }
            if k == n_years {
                end = end.max(last + 1);
            }
            YearSlice {
                label: k,
                start,
                end,
                series: series.restrict(start, end),
            }
        })
        .collect())
}

/// Percentile table and IQR of one year slice.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YearSummary {
    pub label: usize,
    pub start_ms: i64,
    pub end_ms: i64,
    pub count: usize,
    /// `None` for an empty slice.
    pub table: Option<PercentileTable>,
    pub iqr: Option<f64>,
}

/// Everything needed for the three preliminary tables.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SummaryReport {
    pub count: usize,
    pub overall: PercentileTable,
    pub years: Vec<YearSummary>,
}

pub fn summarize(
    series: &VariationSeries,
    epoch_start: i64,
    n_years: usize,
) -> Result<SummaryReport> {
    let overall = percentiles(series, &STANDARD_PROBES)?;
    let years = split_years(series, epoch_start, n_years)?
        .into_iter()
        .map(|slice| {
            let table = percentiles(&slice.series, &STANDARD_PROBES).ok();
            let iqr = table.as_ref().map(iqr).transpose()?;
            Ok(YearSummary {
                label: slice.label,
                start_ms: slice.start,
                end_ms: slice.end,
                count: slice.series.len(),
                table,
                iqr,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SummaryReport {
        count: series.len(),
        overall,
        years,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series() {
        let s = VariationSeries::from_values(vec![0.25; 17]).unwrap();
        let t = percentiles(&s, &[0.0, 10.0, 33.3, 50.0, 99.9, 100.0]).unwrap();
        assert!(t.values.iter().all(|&v| v == 0.25));
        assert_eq!(iqr(&percentiles(&s, &STANDARD_PROBES).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn endpoints_are_extremes() {
        let t = percentiles_of(&[3.0, -1.0, 7.0, 2.0], &[0.0, 100.0]).unwrap();
        assert_eq!(t.values, vec![-1.0, 7.0]);
    }

    #[test]
    fn interpolates_between_order_statistics() {
        // sorted: 1 2 3 4 ; rank 50 -> h = 1.5
        let t = percentiles_of(&[4.0, 1.0, 3.0, 2.0], &[50.0, 25.0]).unwrap();
        assert_eq!(t.values, vec![2.5, 1.75]);
    }

    #[test]
    fn errors() {
        assert_eq!(
            percentiles_of(&[], &[50.0]),
            Err(SummaryError::EmptySeries)
        );
        assert_eq!(
            percentiles_of(&[1.0], &[101.0]),
            Err(SummaryError::RankOutOfRange(101.0))
        );
        let t = percentiles_of(&[1.0, 2.0], &[0.0, 75.0]).unwrap();
        assert_eq!(iqr(&t), Err(SummaryError::MissingRank(25.0)));
    }

    #[test]
    fn iqr_cross_check_year_two() {
        let t = PercentileTable {
            probes: STANDARD_PROBES.to_vec(),
            values: vec![-0.025374, -0.000207, 3.573059e-06, 0.000214, 0.011835],
        };
        assert!((iqr(&t).unwrap() - 0.000421).abs() < 1e-15);
    }

    const MIN: i64 = 60_000;

    #[test]
    fn year_boundaries_are_half_open() {
        let e = DEFAULT_EPOCH_START_MS;
        let ts = vec![e, e + YEAR_MS - MIN, e + YEAR_MS, e + YEAR_MS + MIN, e + 2 * YEAR_MS];
        let s = VariationSeries::new(ts, vec![1.0, 2.0, 3.0, 4.0, 5.0]).unwrap();
        let years = split_years(&s, e, 3).unwrap();
        assert_eq!(years[0].series.values(), &[1.0, 2.0]);
        assert_eq!(years[1].series.values(), &[3.0, 4.0]);
        assert_eq!(years[2].series.values(), &[5.0]);
    }

    #[test]
    fn single_year_containment() {
        let e = DEFAULT_EPOCH_START_MS;
        let s = VariationSeries::new(vec![e, e + MIN, e + 2 * MIN], vec![0.0; 3]).unwrap();
        let years = split_years(&s, e, 4).unwrap();
        assert_eq!(years[0].series.len(), 3);
        assert!(years[1..].iter().all(|y| y.series.is_empty()));
    }

    #[test]
    fn final_slice_absorbs_leap_day_drift() {
        let e = DEFAULT_EPOCH_START_MS;
        // one day past the nominal end of year 2
        let ts = vec![e, e + 2 * YEAR_MS + DAY_MS - MIN];
        let s = VariationSeries::new(ts, vec![0.0, 1.0]).unwrap();
        let years = split_years(&s, e, 2).unwrap();
        assert_eq!(years[1].series.values(), &[1.0]);
        assert_eq!(years[1].end, e + 2 * YEAR_MS + DAY_MS - MIN + 1);
    }

    #[test]
    fn no_years() {
        let s = VariationSeries::from_values(vec![0.0]).unwrap();
        assert_eq!(split_years(&s, 0, 0), Err(SummaryError::NoYears));
    }

    #[test]
    fn summary_marks_empty_years() {
        let e = DEFAULT_EPOCH_START_MS;
        let s = VariationSeries::new(vec![e, e + MIN], vec![1.0, 2.0]).unwrap();
        let r = summarize(&s, e, 2).unwrap();
        assert_eq!(r.count, 2);
        assert_eq!(r.years[0].count, 2);
        assert_eq!(r.years[0].iqr, Some(0.5));
        assert_eq!(r.years[1].table, None);
        assert_eq!(r.years[1].iqr, None);
    }
}
