//! Alignment of the three legs and the spot-quotient variation
//! `ln(spot) - ln(num / den)`.

use std::io::{BufRead, BufReader, Read, Write};

use thiserror::Error;

use crate::exec::Exec;
use crate::ingest::PriceSeries;

#[derive(Debug, Error)]
pub enum VariationError {
    #[error("the three price series share no timestamp")]
    EmptyIntersection,
    #[error("non-positive price at aligned index {0}")]
    NonPositivePrice(usize),
    #[error("variation series is invalid: {0}")]
    Invalid(String),
    #[error("malformed variation file at line {line}: {reason}")]
    MalformedRow { line: usize, reason: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = VariationError> = std::result::Result<T, E>;

/// Timestamps dropped from each input by the intersection.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct DropCounts {
    pub spot: usize,
    pub num: usize,
    pub den: usize,
}

/// Closes of the three legs on their common timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedTriple {
    pub timestamps: Vec<i64>,
    pub spot: Vec<f64>,
    pub num: Vec<f64>,
    pub den: Vec<f64>,
    pub dropped: DropCounts,
}

impl AlignedTriple {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }
}

/// Strict intersection of the three timestamp sets. No interpolation.
pub fn align(spot: &PriceSeries, num: &PriceSeries, den: &PriceSeries) -> Result<AlignedTriple> {
    let (a, b, c) = (spot.points(), num.points(), den.points());
    let cap = a.len().min(b.len()).min(c.len());
    let mut out = AlignedTriple {
        timestamps: Vec::with_capacity(cap),
        spot: Vec::with_capacity(cap),
        num: Vec::with_capacity(cap),
        den: Vec::with_capacity(cap),
        dropped: DropCounts::default(),
    };
    let (mut i, mut j, mut k) = (0, 0, 0);
    while i < a.len() && j < b.len() && k < c.len() {
        let (ta, tb, tc) = (a[i].open_time, b[j].open_time, c[k].open_time);
        if ta == tb && tb == tc {
            out.timestamps.push(ta);
            out.spot.push(a[i].close);
            out.num.push(b[j].close);
            out.den.push(c[k].close);
            i += 1;
            j += 1;
            k += 1;
        } else {
            let hi = ta.max(tb).max(tc);
            if ta < hi {
                i += 1;
            }
            if tb < hi {
                j += 1;
            }
            if tc < hi {
                k += 1;
            }
        }
    }
    if out.is_empty() {
        return Err(VariationError::EmptyIntersection);
    }
    out.dropped = DropCounts {
        spot: a.len() - out.len(),
        num: b.len() - out.len(),
        den: c.len() - out.len(),
    };
    Ok(out)
}

/// Timestamped values of the variation. Every value is finite.
#[derive(Debug, Clone, PartialEq)]
pub struct VariationSeries {
    timestamps: Vec<i64>,
    values: Vec<f64>,
}

impl VariationSeries {
    pub fn new(timestamps: Vec<i64>, values: Vec<f64>) -> Result<Self> {
        if timestamps.len() != values.len() {
            return Err(VariationError::Invalid(format!(
                "{} timestamps but {} values",
                timestamps.len(),
                values.len()
            )));
        }
        if let Some(w) = timestamps.windows(2).find(|w| w[1] <= w[0]) {
            return Err(VariationError::Invalid(format!(
                "timestamp {} does not increase",
                w[1]
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(VariationError::Invalid(format!("value at index {i} is not finite")));
        }
        Ok(Self { timestamps, values })
    }

    /// Values on a synthetic 1-minute grid starting at zero.
    pub fn from_values(values: Vec<f64>) -> Result<Self> {
        let timestamps = (0..values.len() as i64).map(|i| i * 60_000).collect();
        Self::new(timestamps, values)
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Points with `start <= t < end`.
    pub fn restrict(&self, start: i64, end: i64) -> VariationSeries {
        let lo = self.timestamps.partition_point(|&t| t < start);
        let hi = self.timestamps.partition_point(|&t| t < end).max(lo);
        VariationSeries {
            timestamps: self.timestamps[lo..hi].to_vec(),
            values: self.values[lo..hi].to_vec(),
        }
    }
}

pub fn compute_variation(triple: &AlignedTriple) -> Result<VariationSeries> {
    compute_variation_with(triple, Exec::default())
}

const CHUNK: usize = 1 << 15;

/// `ln(spot) - ln(num / den)` per aligned timestamp. When the quotient rounds
/// to the spot price the result is exactly zero.
pub fn compute_variation_with(triple: &AlignedTriple, exec: Exec) -> Result<VariationSeries> {
    let n = triple.len();
    if triple.spot.len() != n || triple.num.len() != n || triple.den.len() != n {
        return Err(VariationError::Invalid("legs differ in length".into()));
    }
    if let Some(i) = (0..n).find(|&i| {
        !(triple.spot[i] > 0.0 && triple.num[i] > 0.0 && triple.den[i] > 0.0)
    }) {
        return Err(VariationError::NonPositivePrice(i));
    }
    let parts = exec.map_chunks(&triple.spot, CHUNK, |ci, spot| {
        let base = ci * CHUNK;
        spot.iter()
            .enumerate()
            .map(|(k, s)| {
                let i = base + k;
                s.ln() - (triple.num[i] / triple.den[i]).ln()
            })
            .collect::<Vec<f64>>()
    });
    let values = parts.concat();
    VariationSeries::new(triple.timestamps.clone(), values)
}

pub const VARIATION_HEADER: &str = "open_time_ms,variation";

/// Writes `open_time_ms,variation` with 17 significant digits.
pub fn write_variation<W: Write>(series: &VariationSeries, mut out: W) -> std::io::Result<()> {
    writeln!(out, "{VARIATION_HEADER}")?;
    for (t, v) in series.timestamps.iter().zip(&series.values) {
        writeln!(out, "{t},{v:.16e}")?;
    }
    Ok(())
}

pub fn read_variation<R: Read>(raw: R) -> Result<VariationSeries> {
    let mut timestamps = Vec::new();
    let mut values = Vec::new();
    for (idx, line) in BufReader::new(raw).lines().enumerate() {
        let line = line?;
        let lineno = idx + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || (lineno == 1 && trimmed == VARIATION_HEADER) {
            continue;
        }
        let malformed = |reason: &str| VariationError::MalformedRow {
            line: lineno,
            reason: reason.to_string(),
        };
        let (t, v) = trimmed
            .split_once(',')
            .ok_or_else(|| malformed("expected two fields"))?;
        timestamps.push(t.trim().parse::<i64>().map_err(|_| malformed("bad timestamp"))?);
        values.push(v.trim().parse::<f64>().map_err(|_| malformed("bad value"))?);
    }
    VariationSeries::new(timestamps, values)
}
