//! Dickey-Fuller unit-root regressions without augmentation lags.
//!
//! The three variants regress the first difference on the lagged level plus
//! optional deterministic terms:
//!
//! * (a) `dY_t = delta * Y_{t-1} + e_t`
//! * (b) `dY_t = mu + delta * Y_{t-1} + e_t`
//! * (c) `dY_t = mu + beta * t + delta * Y_{t-1} + e_t`
//!
//! The unit-root null `delta = 0` is rejected when `tau = delta / se(delta)`
//! falls below the tabulated left-tail critical value.

use serde::Serialize;
use thiserror::Error;

use crate::exec::Exec;
use crate::ksum::NeumaierSum;
use crate::variation::VariationSeries;

#[derive(Debug, Error, PartialEq)]
pub enum UnitRootError {
    #[error("regressor matrix is rank deficient (column {0})")]
    RankDeficient(usize),
    #[error("need more rows than regressors ({rows} rows, {cols} regressors)")]
    InsufficientData { rows: usize, cols: usize },
    #[error("regressor column {0} has the wrong length")]
    ShapeMismatch(usize),
    #[error("series too short for the Dickey-Fuller test ({0} points, need 25)")]
    SeriesTooShort(usize),
    #[error("unsupported significance level {0} (only 0.01 is tabulated)")]
    UnsupportedLevel(f64),
}

pub type Result<T, E = UnitRootError> = std::result::Result<T, E>;

/// Least-squares fit with classical standard errors.
#[derive(Debug, Clone, PartialEq)]
pub struct OlsFit {
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    /// Unbiased residual variance, `RSS / (rows - cols)`.
    pub residual_variance: f64,
}

/// Relative tolerance on the diagonal of R after columns are scaled to unit norm.
const RANK_TOL: f64 = 1e-10;

/// Ordinary least squares of `response` on the given regressor columns.
///
/// Solved by Householder QR on unit-norm-scaled columns, which keeps regressors
/// of wildly different magnitude (a time trend next to 1e-4 level values)
/// well conditioned.
pub fn ols_fit(regressors: &[&[f64]], response: &[f64]) -> Result<OlsFit> {
    let n = response.len();
    let k = regressors.len();
    if k == 0 || n < k + 1 {
        return Err(UnitRootError::InsufficientData { rows: n, cols: k });
    }
    if let Some(j) = regressors.iter().position(|c| c.len() != n) {
        return Err(UnitRootError::ShapeMismatch(j));
    }

    let mut scale = vec![0.0; k];
    let mut a: Vec<Vec<f64>> = Vec::with_capacity(k);
    for (j, col) in regressors.iter().enumerate() {
        let norm = col.iter().map(|x| x * x).sum::<NeumaierSum>().value().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return Err(UnitRootError::RankDeficient(j));
        }
        scale[j] = norm;
        a.push(col.iter().map(|x| x / norm).collect());
    }
    let mut b = response.to_vec();

    let mut r = vec![vec![0.0; k]; k];
    for j in 0..k {
        let norm = a[j][j..]
            .iter()
            .map(|x| x * x)
            .sum::<NeumaierSum>()
            .value()
            .sqrt();
        if norm <= RANK_TOL {
            return Err(UnitRootError::RankDeficient(j));
        }
        let alpha = if a[j][j] > 0.0 { -norm } else { norm };
        let mut v = a[j][j..].to_vec();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|x| x * x).sum();
        let reflect = |col: &mut [f64]| {
            let dot: f64 = v.iter().zip(col.iter()).map(|(p, q)| p * q).sum();
            let f = 2.0 * dot / vnorm2;
            for (c, p) in col.iter_mut().zip(&v) {
                *c -= f * p;
            }
        };
        for col in a.iter_mut().skip(j + 1) {
            reflect(&mut col[j..]);
        }
        reflect(&mut b[j..]);
        r[j][j] = alpha;
        for c in j + 1..k {
            r[j][c] = a[c][j];
        }
    }

    // back substitution in scaled coordinates
    let mut beta = vec![0.0; k];
    for j in (0..k).rev() {
        let mut s = b[j];
        for c in j + 1..k {
            s -= r[j][c] * beta[c];
        }
        beta[j] = s / r[j][j];
    }

    let rss = b[k..].iter().map(|x| x * x).sum::<NeumaierSum>().value();
    let residual_variance = rss / (n - k) as f64;

    // diag((R^T R)^{-1}) = squared row norms of R^{-1}
    let mut rinv = vec![vec![0.0; k]; k];
    for j in 0..k {
        rinv[j][j] = 1.0 / r[j][j];
        for i in (0..j).rev() {
            let mut s = 0.0;
            for m in i + 1..=j {
                s += r[i][m] * rinv[m][j];
            }
            rinv[i][j] = -s / r[i][i];
        }
    }
    let std_errors = (0..k)
        .map(|i| {
            let d: f64 = rinv[i][i..].iter().map(|x| x * x).sum();
            (residual_variance * d).sqrt() / scale[i]
        })
        .collect();
    let coefficients = beta.iter().zip(&scale).map(|(b, s)| b / s).collect();
    Ok(OlsFit {
        coefficients,
        std_errors,
        residual_variance,
    })
}

/// Deterministic terms of the test regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DFModel {
    /// Model (a): lag only.
    NoConst,
    /// Model (b): intercept.
    Const,
    /// Model (c): intercept and linear trend.
    ConstTrend,
}

impl DFModel {
    pub const ALL: [DFModel; 3] = [DFModel::NoConst, DFModel::Const, DFModel::ConstTrend];

    /// Short label used in reports: `(a)`, `(b)`, `(c)`.
    pub fn label(self) -> &'static str {
        match self {
            DFModel::NoConst => "(a)",
            DFModel::Const => "(b)",
            DFModel::ConstTrend => "(c)",
        }
    }
}

pub const MIN_DF_LEN: usize = 25;

/// Sample-size buckets of the 1% critical value table. The last bucket carries
/// the asymptotic values.
const CV_BUCKETS: [usize; 6] = [25, 50, 100, 250, 500, 10_000];

/// 1% tau critical values, rows follow [`CV_BUCKETS`]. Transcribed from the
/// Dickey-Fuller tables in Fuller, "Introduction to Statistical Time Series"
/// (1976), Table 8.5.2.
const CV_1PCT: [[f64; 6]; 3] = [
    [-2.66, -2.62, -2.60, -2.58, -2.58, -2.58],
    [-3.75, -3.58, -3.51, -3.46, -3.44, -3.43],
    [-4.38, -4.15, -4.04, -3.99, -3.98, -3.96],
];

/// Critical value for the largest tabulated sample size not above `n`.
pub fn critical_value(variant: DFModel, n: usize, level: f64) -> Result<f64> {
    if (level - 0.01).abs() > 1e-12 {
        return Err(UnitRootError::UnsupportedLevel(level));
    }
    if n < CV_BUCKETS[0] {
        return Err(UnitRootError::SeriesTooShort(n));
    }
    let bucket = CV_BUCKETS.iter().rposition(|&b| b <= n).unwrap_or(0);
    let row = match variant {
        DFModel::NoConst => 0,
        DFModel::Const => 1,
        DFModel::ConstTrend => 2,
    };
    Ok(CV_1PCT[row][bucket])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DFResult {
    pub variant: DFModel,
    pub delta_hat: f64,
    pub se_delta: f64,
    pub tau: f64,
    pub critical_value_1pct: f64,
    pub reject_null: bool,
    /// Regression rows (`len - 1`).
    pub n_used: usize,
}

pub fn df_test(series: &VariationSeries, variant: DFModel, alpha_level: f64) -> Result<DFResult> {
    df_test_values(series.values(), variant, alpha_level)
}

pub fn df_test_values(y: &[f64], variant: DFModel, alpha_level: f64) -> Result<DFResult> {
    if y.len() < MIN_DF_LEN {
        return Err(UnitRootError::SeriesTooShort(y.len()));
    }
    let critical = critical_value(variant, y.len(), alpha_level)?;
    let lag = &y[..y.len() - 1];
    let diff: Vec<f64> = y.windows(2).map(|w| w[1] - w[0]).collect();
    let m = diff.len();
    let ones = vec![1.0; m];
    let trend: Vec<f64> = (1..=m).map(|t| t as f64).collect();
    let cols: Vec<&[f64]> = match variant {
        DFModel::NoConst => vec![lag],
        DFModel::Const => vec![lag, &ones],
        DFModel::ConstTrend => vec![lag, &ones, &trend],
    };
    let fit = ols_fit(&cols, &diff)?;
    let delta_hat = fit.coefficients[0];
    let se_delta = fit.std_errors[0];
    let tau = delta_hat / se_delta;
    Ok(DFResult {
        variant,
        delta_hat,
        se_delta,
        tau,
        critical_value_1pct: critical,
        reject_null: tau < critical,
        n_used: m,
    })
}

/// All three variants, in (a), (b), (c) order.
pub fn df_test_all(series: &VariationSeries, alpha_level: f64, exec: Exec) -> Result<Vec<DFResult>> {
    exec.map_indexed(3, |i| df_test(series, DFModel::ALL[i], alpha_level))
        .into_iter()
        .collect()
}
