//! Ornstein-Uhlenbeck process `dv = alpha (mu - v) dt + sigma dW`.
//!
//! Over a step `dt` the transition is exactly Gaussian:
//!
//! ```text
//! v_{t+dt} | v_t ~ N(mu + (v_t - mu) * omega, cond_sd^2)
//! omega     = exp(-alpha dt)
//! cond_sd^2 = sigma^2 (1 - omega^2) / (2 alpha)
//! ```
//!
//! The log-likelihood of a sampled path is therefore a Gaussian AR(1)
//! likelihood in `(mu, omega, cond_sd)`, and its maximizer has a closed form in
//! five pairwise sums of consecutive observations ([`SufficientStats`]).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::Serialize;
use thiserror::Error;

use crate::exec::Exec;
use crate::ksum::NeumaierSum;

#[derive(Debug, Error, PartialEq)]
pub enum OuError {
    #[error("invalid OU parameters: {0}")]
    InvalidParams(String),
    #[error("series too short ({0} points, need at least {1})")]
    SeriesTooShort(usize, usize),
    #[error("series is degenerate (constant or exactly linear); no OU fit exists")]
    DegenerateSeries,
    #[error("data is not mean reverting: autoregressive coefficient {0} >= 1")]
    NonMeanReverting(f64),
    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),
}

pub type Result<T, E = OuError> = std::result::Result<T, E>;

/// Drift and diffusion parameters, in units of the sampling step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OUParams {
    /// Elasticity (speed of reversion), per unit time.
    pub alpha: f64,
    /// Long-term mean.
    pub mu: f64,
    /// Diffusion scale, per square-root unit time.
    pub sigma: f64,
}

impl OUParams {
    pub fn new(alpha: f64, mu: f64, sigma: f64) -> Result<Self> {
        let p = Self { alpha, mu, sigma };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return Err(OuError::InvalidParams(format!("alpha = {} must be > 0", self.alpha)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(OuError::InvalidParams(format!("sigma = {} must be > 0", self.sigma)));
        }
        if !self.mu.is_finite() {
            return Err(OuError::InvalidParams(format!("mu = {} must be finite", self.mu)));
        }
        Ok(())
    }

    /// Variance of the stationary law, `sigma^2 / (2 alpha)`.
    pub fn stationary_variance(&self) -> f64 {
        self.sigma * self.sigma / (2.0 * self.alpha)
    }
}

fn check_dt(dt: f64) -> Result<()> {
    if dt > 0.0 && dt.is_finite() {
        Ok(())
    } else {
        Err(OuError::InvalidParams(format!("step dt = {dt} must be > 0")))
    }
}

/// One-step transition of the exact discretization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TransitionParams {
    /// `exp(-alpha dt)`.
    pub omega: f64,
    /// Conditional standard deviation of one step.
    pub cond_sd: f64,
}

impl TransitionParams {
    pub fn from_params(params: &OUParams, dt: f64) -> Result<Self> {
        params.validate()?;
        check_dt(dt)?;
        let omega = (-params.alpha * dt).exp();
        // 1 - omega^2 via expm1 stays accurate when alpha * dt is small
        let one_minus_omega2 = -(-2.0 * params.alpha * dt).exp_m1();
        let cond_sd = params.sigma * (one_minus_omega2 / (2.0 * params.alpha)).sqrt();
        Ok(Self { omega, cond_sd })
    }

    /// Diffusion sigma implied by this transition for a given `alpha`:
    /// `sigma^2 = cond_sd^2 * 2 alpha / (1 - omega^2)`.
    pub fn diffusion_sigma(&self, alpha: f64) -> f64 {
        let one_minus_omega2 = 1.0 - self.omega * self.omega;
        (self.cond_sd * self.cond_sd * 2.0 * alpha / one_minus_omega2).sqrt()
    }
}

/// Conditional mean and variance of `v_{t+h}` given `v_t`.
pub fn conditional_moments(params: &OUParams, v_t: f64, horizon: f64) -> Result<(f64, f64)> {
    params.validate()?;
    if !(horizon >= 0.0 && horizon.is_finite()) {
        return Err(OuError::InvalidParams(format!("horizon {horizon} must be >= 0")));
    }
    let decay = (-params.alpha * horizon).exp();
    let mean = params.mu + (v_t - params.mu) * decay;
    let variance = params.stationary_variance() * -(-2.0 * params.alpha * horizon).exp_m1();
    Ok((mean, variance))
}

/// The five pairwise sums over transitions `(v_{i-1}, v_i)`, `i = 1..=n`,
/// taken about `pivot` (that is, of `v - pivot`). Plain sums have `pivot = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SufficientStats {
    pub n: usize,
    pub pivot: f64,
    pub s0: f64,
    pub s1: f64,
    pub s00: f64,
    pub s01: f64,
    pub s11: f64,
}

impl SufficientStats {
    /// Non-negativity and Cauchy-Schwarz, with a relative slack for rounding.
    pub fn is_consistent(&self) -> bool {
        let slack = 1e-12 * (self.s00 * self.s11).abs();
        self.s00 >= 0.0 && self.s11 >= 0.0 && self.s01 * self.s01 <= self.s00 * self.s11 + slack
    }
}

/// Transitions per compensated partial sum. Partial sums are merged in chunk
/// order, so the result does not depend on how chunks are scheduled.
pub const STATS_CHUNK: usize = 1 << 14;

#[derive(Debug, Clone, Copy, Default)]
struct PairSums {
    s0: NeumaierSum,
    s1: NeumaierSum,
    s00: NeumaierSum,
    s01: NeumaierSum,
    s11: NeumaierSum,
}

impl PairSums {
    #[inline]
    fn push(&mut self, prev: f64, cur: f64) {
        self.s0.add(prev);
        self.s1.add(cur);
        self.s00.add(prev * prev);
        self.s01.add(prev * cur);
        self.s11.add(cur * cur);
    }

    fn merge(&mut self, other: &PairSums) {
        self.s0.merge(&other.s0);
        self.s1.merge(&other.s1);
        self.s00.merge(&other.s00);
        self.s01.merge(&other.s01);
        self.s11.merge(&other.s11);
    }
}

/// Streaming accumulator of [`SufficientStats`]. Feeding a series value by
/// value gives bit-for-bit the same result as [`sufficient_stats_about`].
#[derive(Debug, Clone)]
pub struct StatsAccumulator {
    pivot: f64,
    total: PairSums,
    chunk: PairSums,
    in_chunk: usize,
    n: usize,
    prev: Option<f64>,
}

impl StatsAccumulator {
    pub fn new(pivot: f64) -> Self {
        Self {
            pivot,
            total: PairSums::default(),
            chunk: PairSums::default(),
            in_chunk: 0,
            n: 0,
            prev: None,
        }
    }

    #[inline]
    pub fn push(&mut self, v: f64) {
        let cur = v - self.pivot;
        if let Some(prev) = self.prev {
            self.chunk.push(prev, cur);
            self.in_chunk += 1;
            self.n += 1;
            if self.in_chunk == STATS_CHUNK {
                self.total.merge(&self.chunk);
                self.chunk = PairSums::default();
                self.in_chunk = 0;
            }
        }
        self.prev = Some(cur);
    }

    pub fn finish(mut self) -> SufficientStats {
        if self.in_chunk > 0 {
            self.total.merge(&self.chunk);
        }
        SufficientStats {
            n: self.n,
            pivot: self.pivot,
            s0: self.total.s0.value(),
            s1: self.total.s1.value(),
            s00: self.total.s00.value(),
            s01: self.total.s01.value(),
            s11: self.total.s11.value(),
        }
    }
}

pub const MIN_FIT_LEN: usize = 3;

/// Plain (`pivot = 0`) sufficient statistics.
pub fn sufficient_stats(series: &[f64]) -> Result<SufficientStats> {
    sufficient_stats_about(series, 0.0, Exec::default())
}

pub fn sufficient_stats_about(series: &[f64], pivot: f64, exec: Exec) -> Result<SufficientStats> {
    if series.len() < MIN_FIT_LEN {
        return Err(OuError::SeriesTooShort(series.len(), MIN_FIT_LEN));
    }
    let n = series.len() - 1;
    let prevs = &series[..n];
    let parts = exec.map_chunks(prevs, STATS_CHUNK, |ci, chunk| {
        let base = ci * STATS_CHUNK;
        let mut sums = PairSums::default();
        for (k, &p) in chunk.iter().enumerate() {
            sums.push(p - pivot, series[base + k + 1] - pivot);
        }
        sums
    });
    let mut total = PairSums::default();
    for part in &parts {
        total.merge(part);
    }
    Ok(SufficientStats {
        n,
        pivot,
        s0: total.s0.value(),
        s1: total.s1.value(),
        s00: total.s00.value(),
        s01: total.s01.value(),
        s11: total.s11.value(),
    })
}

const LN_2PI: f64 = 1.837_877_066_409_345_5;

pub fn log_likelihood(params: &OUParams, series: &[f64], dt: f64) -> Result<f64> {
    log_likelihood_with(params, series, dt, Exec::default())
}

/// Exact Gaussian transition log-likelihood of `series`.
pub fn log_likelihood_with(params: &OUParams, series: &[f64], dt: f64, exec: Exec) -> Result<f64> {
    if series.len() < 2 {
        return Err(OuError::SeriesTooShort(series.len(), 2));
    }
    let tp = TransitionParams::from_params(params, dt)?;
    let n = series.len() - 1;
    let (mu, omega) = (params.mu, tp.omega);
    let parts = exec.map_chunks(&series[..n], STATS_CHUNK, |ci, chunk| {
        let base = ci * STATS_CHUNK;
        let mut s = NeumaierSum::new();
        for (k, &prev) in chunk.iter().enumerate() {
            let r = series[base + k + 1] - mu - (prev - mu) * omega;
            s.add(r * r);
        }
        s
    });
    let mut rss = NeumaierSum::new();
    for p in &parts {
        rss.merge(p);
    }
    let nf = n as f64;
    let var = tp.cond_sd * tp.cond_sd;
    Ok(-0.5 * nf * LN_2PI - nf * tp.cond_sd.ln() - rss.value() / (2.0 * var))
}

/// Closed-form maximizer of the likelihood from sufficient statistics.
///
/// The long-term mean solves the joint score equations in `mu` and `omega`:
///
/// ```text
/// mu = (S1 S00 - S0 S01) / (n (S00 - S01) - (S0^2 - S0 S1))
/// ```
///
/// then `omega = (S01 - mu (S0 + S1) + n mu^2) / (S00 - 2 mu S0 + n mu^2)`,
/// `alpha = -ln(omega) / dt`, and the conditional variance is the mean squared
/// one-step residual.
#[allow(clippy::neg_cmp_op_on_partial_ord)]
pub fn mle_from_stats(stats: &SufficientStats, dt: f64) -> Result<(OUParams, TransitionParams)> {
    check_dt(dt)?;
    if stats.n < 2 {
        return Err(OuError::SeriesTooShort(stats.n + 1, MIN_FIT_LEN));
    }
    let n = stats.n as f64;
    let SufficientStats {
        s0, s1, s00, s01, s11, ..
    } = *stats;

    let den = n * (s00 - s01) - (s0 * s0 - s0 * s1);
    let num = s1 * s00 - s0 * s01;
    let scale = n * s00;
    if !(scale > 0.0) || den.abs() <= 1e-13 * scale {
        return Err(OuError::DegenerateSeries);
    }
    let mu_c = num / den;

    let lag_ss = s00 - 2.0 * mu_c * s0 + n * mu_c * mu_c;
    if !(lag_ss > 0.0) {
        return Err(OuError::NumericalBreakdown(format!(
            "lagged sum of squares {lag_ss} is not positive"
        )));
    }
    let omega = (s01 - mu_c * s0 - mu_c * s1 + n * mu_c * mu_c) / lag_ss;
    if !omega.is_finite() {
        return Err(OuError::NumericalBreakdown("non-finite autoregressive coefficient".into()));
    }
    if omega >= 1.0 {
        return Err(OuError::NonMeanReverting(omega));
    }
    if omega <= 0.0 {
        return Err(OuError::NumericalBreakdown(format!(
            "autoregressive coefficient {omega} has no logarithm"
        )));
    }
    let alpha = -omega.ln() / dt;

    let one_m = 1.0 - omega;
    let cond_var = (s11 - 2.0 * omega * s01 + omega * omega * s00
        - 2.0 * mu_c * one_m * (s1 - omega * s0)
        + n * mu_c * mu_c * one_m * one_m)
        / n;
    if !(cond_var > 0.0 && cond_var.is_finite()) {
        return Err(OuError::NumericalBreakdown(format!(
            "conditional variance {cond_var} is not positive"
        )));
    }
    let transition = TransitionParams {
        omega,
        cond_sd: cond_var.sqrt(),
    };
    let sigma = transition.diffusion_sigma(alpha);
    let params = OUParams::new(alpha, stats.pivot + mu_c, sigma)
        .map_err(|e| OuError::NumericalBreakdown(e.to_string()))?;
    Ok((params, transition))
}

/// Result of [`mle_fit`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OuFit {
    pub params: OUParams,
    pub transition: TransitionParams,
    /// Plain (`pivot = 0`) sums of the input series.
    pub stats: SufficientStats,
    pub log_likelihood: f64,
    pub dt: f64,
}

pub fn mle_fit(series: &[f64], dt: f64) -> Result<OuFit> {
    mle_fit_with(series, dt, Exec::default())
}

/// Closed-form maximum likelihood fit.
///
/// The estimate is computed from sums taken about the first observation,
/// which keeps the formulas free of cancellation when the series sits far
/// from zero.
pub fn mle_fit_with(series: &[f64], dt: f64, exec: Exec) -> Result<OuFit> {
    check_dt(dt)?;
    if series.len() < MIN_FIT_LEN {
        return Err(OuError::SeriesTooShort(series.len(), MIN_FIT_LEN));
    }
    if series.iter().all(|&v| v == series[0]) {
        return Err(OuError::DegenerateSeries);
    }
    let centered = sufficient_stats_about(series, series[0], exec)?;
    let (params, transition) = mle_from_stats(&centered, dt)?;
    let stats = sufficient_stats_about(series, 0.0, exec)?;
    let log_likelihood = log_likelihood_with(&params, series, dt, exec)?;
    Ok(OuFit {
        params,
        transition,
        stats,
        log_likelihood,
        dt,
    })
}

/// RNG for simulation stream `stream` under `seed`. Streams are independent
/// and each can be regenerated on its own.
pub fn path_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Exact-transition stepper.
#[derive(Debug, Clone, Copy)]
pub struct OuStepper {
    mu: f64,
    omega: f64,
    cond_sd: f64,
}

impl OuStepper {
    pub fn new(params: &OUParams, dt: f64) -> Result<Self> {
        let tp = TransitionParams::from_params(params, dt)?;
        Ok(Self {
            mu: params.mu,
            omega: tp.omega,
            cond_sd: tp.cond_sd,
        })
    }

    #[inline]
    pub fn step<R: Rng + ?Sized>(&self, v: f64, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.mu + (v - self.mu) * self.omega + self.cond_sd * z
    }
}

/// Path of `n_steps + 1` values starting at `v0`, drawn from stream 0 of `seed`.
pub fn simulate_path(
    params: &OUParams,
    v0: f64,
    n_steps: usize,
    dt: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    simulate_path_with_rng(params, v0, n_steps, dt, &mut path_rng(seed, 0))
}

pub fn simulate_path_with_rng<R: Rng + ?Sized>(
    params: &OUParams,
    v0: f64,
    n_steps: usize,
    dt: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if n_steps == 0 {
        return Err(OuError::InvalidParams("n_steps must be >= 1".into()));
    }
    if !v0.is_finite() {
        return Err(OuError::InvalidParams(format!("initial value {v0} must be finite")));
    }
    let stepper = OuStepper::new(params, dt)?;
    let mut path = Vec::with_capacity(n_steps + 1);
    let mut v = v0;
    path.push(v);
    for _ in 0..n_steps {
        v = stepper.step(v, rng);
        path.push(v);
    }
    Ok(path)
}
