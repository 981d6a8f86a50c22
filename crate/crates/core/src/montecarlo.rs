//! Parametric Monte Carlo sampling distribution of the OU estimates and
//! percentile confidence intervals.
//!
//! Replication `k` simulates a path from the fitted parameters on RNG stream
//! `k` of the master seed and refits it. Replications run independently and
//! are gathered in index order, so the output depends only on the config.

use serde::Serialize;
use thiserror::Error;

use crate::exec::Exec;
use crate::ou::{self, OUParams, OuError, OuStepper, StatsAccumulator, TransitionParams};
use crate::summary::{quantile_sorted, sorted_copy};

#[derive(Debug, Error, PartialEq)]
pub enum McError {
    #[error("invalid Monte Carlo configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Ou(#[from] OuError),
    #[error("{failed} of {replications} replications failed to fit (limit 1%)")]
    TooManyFailures { failed: usize, replications: usize },
    #[error("need at least 2 estimates per parameter, got {0}")]
    InsufficientReplications(usize),
}

pub type Result<T, E = McError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McConfig {
    pub replications: usize,
    /// Number of values per simulated path.
    pub path_length: usize,
    pub dt: f64,
    /// Two-sided confidence level in (0, 1).
    pub confidence: f64,
    pub master_seed: u64,
    /// Start of every simulated path; the fitted long-term mean when `None`.
    pub initial_value: Option<f64>,
}

impl McConfig {
    pub fn validate(&self) -> Result<()> {
        if self.replications < 2 {
            return Err(McError::InvalidConfig("replications must be >= 2".into()));
        }
        if self.path_length < ou::MIN_FIT_LEN {
            return Err(McError::InvalidConfig("path_length must be >= 3".into()));
        }
        if !(self.confidence > 0.0 && self.confidence < 1.0) {
            return Err(McError::InvalidConfig(format!(
                "confidence {} outside (0, 1)",
                self.confidence
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(McError::InvalidConfig(format!("dt {} must be > 0", self.dt)));
        }
        if matches!(self.initial_value, Some(v) if !v.is_finite()) {
            return Err(McError::InvalidConfig("initial value must be finite".into()));
        }
        Ok(())
    }
}

/// One simulated-and-refitted replication.
pub fn replicate(
    fitted: &OUParams,
    cfg: &McConfig,
    index: usize,
) -> std::result::Result<(OUParams, TransitionParams), OuError> {
    let stepper = OuStepper::new(fitted, cfg.dt)?;
    let mut rng = ou::path_rng(cfg.master_seed, index as u64);
    let v0 = cfg.initial_value.unwrap_or(fitted.mu);
    // same sums as mle_fit on the materialized path, without storing it
    let mut acc = StatsAccumulator::new(v0);
    let mut v = v0;
    acc.push(v);
    for _ in 1..cfg.path_length {
        v = stepper.step(v, &mut rng);
        acc.push(v);
    }
    ou::mle_from_stats(&acc.finish(), cfg.dt)
}

/// Replication estimates, one entry per successful replication in index order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SamplingDistribution {
    pub alpha: Vec<f64>,
    pub mu: Vec<f64>,
    /// Diffusion sigma.
    pub sigma: Vec<f64>,
    /// One-step conditional standard deviation.
    pub sigma_cond: Vec<f64>,
    /// Indices of replications whose fit failed.
    pub failed: Vec<usize>,
    pub replications: usize,
    pub master_seed: u64,
    pub path_length: usize,
    pub dt: f64,
}

pub fn sampling_distribution(fitted: &OUParams, cfg: &McConfig) -> Result<SamplingDistribution> {
    sampling_distribution_with(fitted, cfg, Exec::default())
}

pub fn sampling_distribution_with(
    fitted: &OUParams,
    cfg: &McConfig,
    exec: Exec,
) -> Result<SamplingDistribution> {
    cfg.validate()?;
    fitted.validate()?;
    let results = exec.map_indexed(cfg.replications, |k| replicate(fitted, cfg, k));
    let mut dist = SamplingDistribution {
        alpha: Vec::with_capacity(cfg.replications),
        mu: Vec::with_capacity(cfg.replications),
        sigma: Vec::with_capacity(cfg.replications),
        sigma_cond: Vec::with_capacity(cfg.replications),
        failed: Vec::new(),
        replications: cfg.replications,
        master_seed: cfg.master_seed,
        path_length: cfg.path_length,
        dt: cfg.dt,
    };
    for (k, r) in results.into_iter().enumerate() {
        match r {
            Ok((p, tp)) => {
                dist.alpha.push(p.alpha);
                dist.mu.push(p.mu);
                dist.sigma.push(p.sigma);
                dist.sigma_cond.push(tp.cond_sd);
            }
            Err(_) => dist.failed.push(k),
        }
    }
    if dist.failed.len() * 100 > cfg.replications {
        return Err(McError::TooManyFailures {
            failed: dist.failed.len(),
            replications: cfg.replications,
        });
    }
    Ok(dist)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamInterval {
    pub point: f64,
    pub lower: f64,
    pub upper: f64,
}

impl ParamInterval {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Percentile intervals for each parameter.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CIReport {
    pub alpha: ParamInterval,
    pub mu: ParamInterval,
    pub sigma: ParamInterval,
    pub sigma_cond: ParamInterval,
    pub confidence: f64,
    pub replications: usize,
    pub failures: usize,
    pub master_seed: u64,
    pub path_length: usize,
}

/// Empirical `(1 - c) / 2` and `(1 + c) / 2` quantiles, using the same
/// interpolation as the percentile tables.
pub fn percentile_interval(values: &[f64], confidence: f64) -> Result<(f64, f64)> {
    if values.len() < 2 {
        return Err(McError::InsufficientReplications(values.len()));
    }
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(McError::InvalidConfig(format!(
            "confidence {confidence} outside (0, 1)"
        )));
    }
    let sorted = sorted_copy(values);
    // 50 -/+ 50c rather than 100 (1 -/+ c) / 2: exact for levels like 0.9
    let lo_rank = 50.0 - 50.0 * confidence;
    let hi_rank = 50.0 + 50.0 * confidence;
    Ok((quantile_sorted(&sorted, lo_rank), quantile_sorted(&sorted, hi_rank)))
}

pub fn confidence_intervals(
    dist: &SamplingDistribution,
    confidence: f64,
    point: &OUParams,
) -> Result<CIReport> {
    let point_tp = TransitionParams::from_params(point, dist.dt)?;
    let interval = |values: &[f64], point: f64| -> Result<ParamInterval> {
        let (lower, upper) = percentile_interval(values, confidence)?;
        Ok(ParamInterval {
            point,
            lower,
            upper,
        })
    };
    Ok(CIReport {
        alpha: interval(&dist.alpha, point.alpha)?,
        mu: interval(&dist.mu, point.mu)?,
        sigma: interval(&dist.sigma, point.sigma)?,
        sigma_cond: interval(&dist.sigma_cond, point_tp.cond_sd)?,
        confidence,
        replications: dist.replications,
        failures: dist.failed.len(),
        master_seed: dist.master_seed,
        path_length: dist.path_length,
    })
}
