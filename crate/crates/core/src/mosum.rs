//! MOSUM monitoring process, boundary, critical value and break decisions.
//!
//! Indices: `history` is the history length `n`, the series has `N`
//! observations, and the monitor period covers `t = n+1 ..= N` (1-based).
//! The window for `t` holds the `h` residuals `r_{t-h+1} ..= r_t`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{self, TimeAxis};

/// `log+ x`: 1 for `x <= e`, `ln x` otherwise.
#[inline]
pub fn log_plus(x: f64) -> f64 {
    if x <= std::f64::consts::E {
        1.0
    } else {
        x.ln()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MosumSeries {
    /// History length `n`; monitor value `j` (0-based) belongs to `t = n + j + 1`.
    pub history: usize,
    pub mo: Vec<f64>,
    pub bound: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct BreakResult {
    pub detected: bool,
    /// 1-based observation index of the first boundary crossing.
    pub first_break: Option<usize>,
    pub max_abs_mo: f64,
}

fn check_mosum_dims(len: usize, history: usize, bandwidth: usize) -> Result<()> {
    if bandwidth < 1 || bandwidth > history {
        return Err(Error::InvalidArgument(format!(
            "bandwidth h = {bandwidth} must satisfy 1 <= h <= n = {history}"
        )));
    }
    if history >= len {
        return Err(Error::InvalidArgument(format!(
            "history length n = {history} must be below series length {len}"
        )));
    }
    Ok(())
}

/// MOSUM values for `t = n+1 ..= N`: one initial window sum followed by
/// drop-one/add-one updates, each divided by `sigma * sqrt(n)`.
pub fn mosum_process(residuals: &[f64], sigma: f64, history: usize, bandwidth: usize) -> Result<Vec<f64>> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(if sigma == 0.0 {
            Error::ZeroSigma { pixel: None }
        } else {
            Error::InvalidArgument(format!("sigma must be positive and finite, got {sigma}"))
        });
    }
    check_mosum_dims(residuals.len(), history, bandwidth)?;
    let scale = sigma * (history as f64).sqrt();
    let monitor = residuals.len() - history;
    let mut out = Vec::with_capacity(monitor);
    // window for t = n+1 covers 0-based indices n+1-h ..= n
    let mut sum = 0.0;
    for r in &residuals[history + 1 - bandwidth..=history] {
        sum += r;
    }
    out.push(sum / scale);
    for j in 1..monitor {
        sum = sum - residuals[history + j - bandwidth] + residuals[history + j];
        out.push(sum / scale);
    }
    Ok(out)
}

/// `b_t = lambda * sqrt(log+(t/n))` for `t = n+1 ..= N`.
pub fn boundary_values(history: usize, n_obs: usize, lambda: f64) -> Result<Vec<f64>> {
    if history < 1 || history >= n_obs {
        return Err(Error::InvalidArgument(format!(
            "history length n = {history} must satisfy 1 <= n < N = {n_obs}"
        )));
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::InvalidArgument(format!("critical value must be positive, got {lambda}")));
    }
    let n = history as f64;
    Ok((history + 1..=n_obs)
        .map(|t| lambda * log_plus(t as f64 / n).sqrt())
        .collect())
}

/// First strict exceedance `|MO_t| > b_t` and the largest `|MO_t|`.
pub fn detect(series: &MosumSeries) -> Result<BreakResult> {
    if series.mo.len() != series.bound.len() || series.mo.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "MOSUM length {} and boundary length {} must match and be non-zero",
            series.mo.len(),
            series.bound.len()
        )));
    }
    Ok(detect_slices(&series.mo, &series.bound, series.history))
}

#[inline]
pub(crate) fn detect_slices(mo: &[f64], bound: &[f64], history: usize) -> BreakResult {
    let mut first_break = None;
    let mut max_abs_mo = 0.0f64;
    for (j, (m, b)) in mo.iter().zip(bound).enumerate() {
        let a = m.abs();
        if first_break.is_none() && a > *b {
            first_break = Some(history + j + 1);
        }
        max_abs_mo = max_abs_mo.max(a);
    }
    BreakResult { detected: first_break.is_some(), first_break, max_abs_mo }
}

pub const DEFAULT_CALIBRATION_REPS: usize = 100_000;
pub const DEFAULT_CALIBRATION_SEED: u64 = 0x5EED_B0A7;

/// Parameters of the Monte Carlo critical-value simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticalValueRequest {
    pub alpha: f64,
    /// Bandwidth as a fraction of the history length.
    pub h_frac: f64,
    /// Monitoring horizon `N/n`.
    pub horizon: f64,
    /// History length used by the simulated series.
    pub n_sim: usize,
    pub reps: usize,
    pub seed: u64,
    pub harmonics: usize,
    pub freq: f64,
}

impl Default for CriticalValueRequest {
    fn default() -> Self {
        CriticalValueRequest {
            alpha: 0.05,
            h_frac: 0.5,
            horizon: 2.0,
            n_sim: 100,
            reps: DEFAULT_CALIBRATION_REPS,
            seed: DEFAULT_CALIBRATION_SEED,
            harmonics: 3,
            freq: 23.0,
        }
    }
}

impl CriticalValueRequest {
    /// `(n, N, h)` of the simulated series.
    pub fn dims(&self) -> (usize, usize, usize) {
        let n = self.n_sim;
        let n_obs = (self.horizon * n as f64).round() as usize;
        let h = (self.h_frac * n as f64).round() as usize;
        (n, n_obs, h)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(self.h_frac > 0.0 && self.h_frac <= 1.0) {
            return bad(format!("h-frac must lie in (0, 1], got {}", self.h_frac));
        }
        if !(self.horizon > 1.0) || !self.horizon.is_finite() {
            return bad(format!("horizon must exceed 1, got {}", self.horizon));
        }
        if self.reps < 1000 {
            return bad(format!("at least 1000 replications required, got {}", self.reps));
        }
        let (n, n_obs, h) = self.dims();
        if n <= model::param_count(self.harmonics) {
            return bad(format!(
                "n-sim = {n} must exceed the {} model parameters",
                model::param_count(self.harmonics)
            ));
        }
        if n_obs <= n {
            return bad(format!("horizon {} leaves no monitor period for n-sim = {n}", self.horizon));
        }
        if h < 1 || h > n {
            return bad(format!("h-frac {} gives bandwidth {h} outside 1..={n}", self.h_frac));
        }
        Ok(())
    }
}

/// Empirical `(1 - alpha)` quantile of the simulated
/// `sup_t |MO_t| / sqrt(log+(t/n))` under i.i.d. standard normal noise.
pub fn critical_value(req: &CriticalValueRequest) -> Result<f64> {
    let stats = simulate_sup_statistics(req)?;
    Ok(upper_quantile(stats, req.alpha))
}

/// Critical values for several significance levels from one shared sample.
pub fn critical_values(req: &CriticalValueRequest, alphas: &[f64]) -> Result<Vec<f64>> {
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(Error::InvalidArgument(format!("alpha must lie in (0, 1), got {a}")));
    }
    let stats = simulate_sup_statistics(req)?;
    Ok(alphas.iter().map(|&a| upper_quantile(stats.clone(), a)).collect())
}

/// Order statistic `ceil((1 - alpha) * reps)` of the sample.
fn upper_quantile(mut stats: Vec<f64>, alpha: f64) -> f64 {
    stats.sort_unstable_by(f64::total_cmp);
    let reps = stats.len();
    let rank = ((1.0 - alpha) * reps as f64).ceil() as usize;
    stats[rank.clamp(1, reps) - 1]
}

/// Random stream for replication `rep`: the seed picks the key, the
/// replication index picks the ChaCha stream.
pub(crate) fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// One sup statistic per replication, in replication order.
pub fn simulate_sup_statistics(req: &CriticalValueRequest) -> Result<Vec<f64>> {
    req.validate()?;
    let (n, n_obs, h) = req.dims();
    let design = model::build_design_matrix(&TimeAxis::regular(n_obs)?, req.freq, req.harmonics)?;
    let mapping = model::fit_mapping(&design, n)?;
    let weights: Vec<f64> = (n + 1..=n_obs)
        .map(|t| 1.0 / log_plus(t as f64 / n as f64).sqrt())
        .collect();

    const CHUNK: usize = 1024;
    let mut stats = vec![0.0; req.reps];
    stats
        .par_chunks_mut(CHUNK)
        .enumerate()
        .try_for_each(|(c, out)| -> Result<()> {
            let mut y = vec![0.0; n_obs];
            for (i, slot) in out.iter_mut().enumerate() {
                let rep = (c * CHUNK + i) as u64;
                let mut rng = substream(req.seed, rep);
                for v in y.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                }
                let fit = model::fit_with_mapping(&design, &mapping, &y)?;
                let fitted = model::predict(&design, &fit.beta)?;
                let resid: Vec<f64> = y.iter().zip(&fitted).map(|(a, b)| a - b).collect();
                let mo = mosum_process(&resid, fit.sigma, n, h)?;
                *slot = mo
                    .iter()
                    .zip(&weights)
                    .map(|(m, w)| m.abs() * w)
                    .fold(0.0, f64::max);
            }
            Ok(())
        })?;
    Ok(stats)
}
