//! Batched monitoring of a whole stack of pixel time series.
//!
//! The fused backend builds the design matrix and the mapping matrix once,
//! fits every pixel with one matrix product `B = M Y_hist`, and then runs
//! predictions, residuals, MOSUM and detection as separate passes over
//! contiguous pixel blocks. The naive backend runs the single-series
//! procedure independently for every pixel and serves as the reference.
//!
//! Both backends perform the same floating-point operations in the same
//! order for each pixel, so their outputs agree bit for bit.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::model::{self, DesignMatrix, MappingMatrix, TimeAxis};
use crate::mosum::{self, BreakResult, CriticalValueRequest, MosumSeries};

/// `N x m` single-precision observations in time-major order: row `t`
/// holds timestamp `t` for every pixel. Missing values are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesStack {
    axis: TimeAxis,
    n_pixels: usize,
    data: Vec<f32>,
}

impl SeriesStack {
    pub fn new(axis: TimeAxis, n_pixels: usize, data: Vec<f32>) -> Result<Self> {
        if n_pixels < 1 {
            return Err(Error::InvalidArgument("stack needs at least one pixel".into()));
        }
        let expected = axis
            .len()
            .checked_mul(n_pixels)
            .ok_or_else(|| Error::Capacity(format!("{} x {n_pixels} values overflow", axis.len())))?;
        if data.len() != expected {
            return Err(Error::InvalidArgument(format!(
                "stack data has {} values, expected {} x {} = {expected}",
                data.len(),
                axis.len(),
                n_pixels
            )));
        }
        Ok(SeriesStack { axis, n_pixels, data })
    }

    pub fn n_obs(&self) -> usize {
        self.axis.len()
    }

    pub fn n_pixels(&self) -> usize {
        self.n_pixels
    }

    pub fn axis(&self) -> &TimeAxis {
        &self.axis
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn value(&self, t: usize, pixel: usize) -> f32 {
        self.data[t * self.n_pixels + pixel]
    }

    /// The series of one pixel (strided gather).
    pub fn pixel_series(&self, pixel: usize) -> Vec<f32> {
        self.data.iter().skip(pixel).step_by(self.n_pixels).copied().collect()
    }

    /// Bitwise equality, treating NaN payloads as values.
    pub fn bit_eq(&self, other: &SeriesStack) -> bool {
        self.axis == other.axis
            && self.n_pixels == other.n_pixels
            && self.data.len() == other.data.len()
            && self.data.iter().zip(&other.data).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Backend {
    #[default]
    Fused,
    Naive,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorConfig {
    /// History length `n`.
    pub history: usize,
    /// MOSUM bandwidth `h`.
    pub bandwidth: usize,
    /// Harmonic terms `k`.
    pub harmonics: usize,
    /// Observations per seasonal cycle, in time-axis units.
    pub freq: f64,
    pub alpha: f64,
    /// Explicit critical value; simulated from `alpha` when absent.
    pub lambda: Option<f64>,
    pub backend: Backend,
    /// Pixels per work block.
    pub block_size: usize,
    pub calibration_reps: usize,
    pub calibration_seed: u64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            history: 100,
            bandwidth: 50,
            harmonics: 3,
            freq: 23.0,
            alpha: 0.05,
            lambda: None,
            backend: Backend::Fused,
            block_size: 4096,
            calibration_reps: mosum::DEFAULT_CALIBRATION_REPS,
            calibration_seed: mosum::DEFAULT_CALIBRATION_SEED,
        }
    }
}

impl MonitorConfig {
    /// Checks that need no data.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        let params = model::param_count(self.harmonics);
        if self.harmonics < 1 {
            return bad("k must be at least 1".into());
        }
        if !(self.freq > 0.0) || !self.freq.is_finite() {
            return bad(format!("freq must be positive, got {}", self.freq));
        }
        if self.history <= params {
            return bad(format!("n = {} must exceed 2+2k = {params}", self.history));
        }
        if self.bandwidth < 1 || self.bandwidth > self.history {
            return bad(format!(
                "h = {} must satisfy 1 <= h <= n = {}",
                self.bandwidth, self.history
            ));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha must lie in (0, 1), got {}", self.alpha));
        }
        if let Some(l) = self.lambda {
            if !(l > 0.0) || !l.is_finite() {
                return bad(format!("lambda must be positive, got {l}"));
            }
        }
        if self.block_size < 1 {
            return bad("block size must be at least 1".into());
        }
        Ok(())
    }

    pub fn validate_for(&self, n_obs: usize) -> Result<()> {
        self.validate()?;
        if self.history >= n_obs {
            return Err(Error::InvalidArgument(format!(
                "n = {} must be below the series length N = {n_obs}",
                self.history
            )));
        }
        Ok(())
    }

    /// The simulation request matching this configuration for series of
    /// length `n_obs`.
    pub fn calibration_request(&self, n_obs: usize) -> CriticalValueRequest {
        CriticalValueRequest {
            alpha: self.alpha,
            h_frac: self.bandwidth as f64 / self.history as f64,
            horizon: n_obs as f64 / self.history as f64,
            n_sim: self.history,
            reps: self.calibration_reps,
            seed: self.calibration_seed,
            harmonics: self.harmonics,
            freq: self.freq,
        }
    }

    pub fn resolve_lambda(&self, n_obs: usize) -> Result<f64> {
        match self.lambda {
            Some(l) => Ok(l),
            None => mosum::critical_value(&self.calibration_request(n_obs)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BreakMap {
    pub results: Vec<BreakResult>,
    /// False for pixels without a single finite observation.
    pub valid: Vec<bool>,
    pub config: MonitorConfig,
    pub lambda: f64,
}

impl BreakMap {
    pub fn len(&self) -> usize {
        self.results.len()
    }

    pub fn is_empty(&self) -> bool {
        self.results.is_empty()
    }

    pub fn detected_count(&self) -> usize {
        self.results.iter().filter(|r| r.detected).count()
    }
}

/// MOSUM values of a whole batch, `(N - n) x m` time-major.
#[derive(Debug, Clone, PartialEq)]
pub struct MosumMatrix {
    pub monitor_len: usize,
    pub n_pixels: usize,
    pub values: Vec<f64>,
}

impl MosumMatrix {
    pub fn get(&self, j: usize, pixel: usize) -> f64 {
        self.values[j * self.n_pixels + pixel]
    }

    pub fn pixel(&self, pixel: usize) -> Vec<f64> {
        self.values.iter().skip(pixel).step_by(self.n_pixels).copied().collect()
    }
}

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PhaseTimings {
    pub ingest: f64,
    pub model: f64,
    pub predictions: f64,
    pub residuals: f64,
    pub mosum: f64,
    pub breaks: f64,
    pub total: f64,
}

impl PhaseTimings {
    pub fn phase_sum(&self) -> f64 {
        self.ingest + self.model + self.predictions + self.residuals + self.mosum + self.breaks
    }

    fn phases_mut(&mut self) -> [&mut f64; 6] {
        [
            &mut self.ingest,
            &mut self.model,
            &mut self.predictions,
            &mut self.residuals,
            &mut self.mosum,
            &mut self.breaks,
        ]
    }
}

/// Forward fill from the first finite value, then backward fill the
/// leading gap. Fails with [`Error::InvalidSeries`] for an all-NaN series.
pub fn fill_gaps(series: &[f32]) -> Result<Vec<f32>> {
    let mut out = series.to_vec();
    fill_gaps_in_place(&mut out)?;
    Ok(out)
}

fn fill_gaps_in_place(series: &mut [f32]) -> Result<()> {
    let first = series.iter().position(|v| !v.is_nan()).ok_or(Error::InvalidSeries)?;
    let lead = series[first];
    series[..first].fill(lead);
    let mut last = lead;
    for v in &mut series[first..] {
        if v.is_nan() {
            *v = last;
        } else {
            last = *v;
        }
    }
    Ok(())
}

/// Gap-filled series of one pixel, `None` when the pixel has no data.
/// Infinite values are rejected.
fn prepare_series(series: &mut [f32], pixel: usize) -> Result<bool> {
    if series.iter().any(|v| v.is_infinite()) {
        return Err(Error::InvalidInput(format!("pixel {pixel} contains an infinite value")));
    }
    if series.iter().any(|v| v.is_nan()) {
        match fill_gaps_in_place(series) {
            Ok(()) => Ok(true),
            Err(Error::InvalidSeries) => {
                series.fill(0.0);
                Ok(false)
            }
            Err(e) => Err(e),
        }
    } else {
        Ok(true)
    }
}

pub fn monitor_batch(stack: &SeriesStack, config: &MonitorConfig) -> Result<BreakMap> {
    run(stack, config, false).map(|out| out.map)
}

/// Like [`monitor_batch`], additionally recording wall-clock time per phase.
pub fn profile_run(stack: &SeriesStack, config: &MonitorConfig) -> Result<(BreakMap, PhaseTimings)> {
    run(stack, config, false).map(|out| (out.map, out.timings))
}

/// Like [`monitor_batch`], additionally returning every MOSUM value.
pub fn monitor_with_mosum(stack: &SeriesStack, config: &MonitorConfig) -> Result<(BreakMap, MosumMatrix)> {
    run(stack, config, true).map(|out| (out.map, out.mosum.expect("requested")))
}

struct RunOutput {
    map: BreakMap,
    timings: PhaseTimings,
    mosum: Option<MosumMatrix>,
}

fn run(stack: &SeriesStack, config: &MonitorConfig, keep_mosum: bool) -> Result<RunOutput> {
    match config.backend {
        Backend::Fused => run_fused(stack, config, keep_mosum),
        Backend::Naive => run_naive(stack, config, keep_mosum),
    }
}

/// Immutable state shared by every block of the fused backend.
struct Shared {
    design: DesignMatrix,
    mapping: MappingMatrix,
    history: usize,
    bandwidth: usize,
    n_obs: usize,
}

/// Working buffers of one contiguous pixel block, all time-major within
/// the block.
struct Block {
    start: usize,
    len: usize,
    y: Vec<f32>,
    valid: Vec<bool>,
    beta: Vec<f64>,
    /// Predictions, overwritten in place by residuals.
    fit: Vec<f64>,
    sigma: Vec<f64>,
    mo: Vec<f64>,
    results: Vec<BreakResult>,
}

impl Block {
    fn new(start: usize, len: usize) -> Self {
        Block {
            start,
            len,
            y: Vec::new(),
            valid: Vec::new(),
            beta: Vec::new(),
            fit: Vec::new(),
            sigma: Vec::new(),
            mo: Vec::new(),
            results: Vec::new(),
        }
    }

    fn ingest(&mut self, stack: &SeriesStack) -> Result<()> {
        let (n_obs, m, len) = (stack.n_obs(), stack.n_pixels(), self.len);
        let mut y = Vec::with_capacity(n_obs * len);
        for row in stack.data().chunks_exact(m) {
            y.extend_from_slice(&row[self.start..self.start + len]);
        }
        let mut valid = vec![true; len];
        let mut column = vec![0.0f32; n_obs];
        for (px, ok) in valid.iter_mut().enumerate() {
            if !(0..n_obs).any(|t| !y[t * len + px].is_finite()) {
                continue;
            }
            for (t, c) in column.iter_mut().enumerate() {
                *c = y[t * len + px];
            }
            *ok = prepare_series(&mut column, self.start + px)?;
            for (t, c) in column.iter().enumerate() {
                y[t * len + px] = *c;
            }
        }
        self.y = y;
        self.valid = valid;
        Ok(())
    }

    /// `B = M Y_hist` for this block.
    fn fit_models(&mut self, shared: &Shared) {
        let (len, params, history) = (self.len, shared.mapping.params(), shared.history);
        let mut m_t = vec![0.0f64; history * params];
        for j in 0..params {
            for (i, &v) in shared.mapping.row(j).iter().enumerate() {
                m_t[i * params + j] = v;
            }
        }
        let mut beta = vec![0.0f64; params * len];
        kernels::fit_models(&m_t, params, &self.y[..history * len], len, &mut beta);
        self.beta = beta;
    }

    /// `Y_hat = X^T B` for this block.
    fn predict(&mut self, shared: &Shared) {
        let (len, params, n_obs) = (self.len, shared.mapping.params(), shared.n_obs);
        let mut x_t = vec![0.0f64; n_obs * params];
        for t in 0..n_obs {
            for j in 0..params {
                x_t[t * params + j] = shared.design.get(j, t);
            }
        }
        let mut fit = vec![0.0f64; n_obs * len];
        kernels::predict(&x_t, params, &self.beta, len, &mut fit);
        self.fit = fit;
    }

    /// `R = Y - Y_hat` in place plus the per-pixel history scale.
    fn residuals(&mut self, shared: &Shared) -> Result<()> {
        let len = self.len;
        for (out, yrow) in self.fit.chunks_exact_mut(len).zip(self.y.chunks_exact(len)) {
            for (f, &y) in out.iter_mut().zip(yrow) {
                *f = y as f64 - *f;
            }
        }
        let mut ss = vec![0.0f64; len];
        for row in self.fit.chunks_exact(len).take(shared.history) {
            for (s, &r) in ss.iter_mut().zip(row) {
                *s += r * r;
            }
        }
        let dof = (shared.history - shared.mapping.params()) as f64;
        self.sigma = ss.iter().map(|s| (s / dof).sqrt()).collect();
        if let Some(px) = (0..len).find(|&px| self.valid[px] && self.sigma[px] == 0.0) {
            return Err(Error::ZeroSigma { pixel: Some(self.start + px) });
        }
        Ok(())
    }

    fn mosum(&mut self, shared: &Shared) {
        let (len, n, h) = (self.len, shared.history, shared.bandwidth);
        let monitor = shared.n_obs - n;
        let root_n = (n as f64).sqrt();
        let scale: Vec<f64> = self
            .sigma
            .iter()
            .zip(&self.valid)
            .map(|(&s, &ok)| if ok { s * root_n } else { 1.0 })
            .collect();
        let resid = |t: usize| &self.fit[t * len..(t + 1) * len];

        let mut sum = vec![0.0f64; len];
        for t in n + 1 - h..=n {
            for (s, &r) in sum.iter_mut().zip(resid(t)) {
                *s += r;
            }
        }
        let mut mo = vec![0.0f64; monitor * len];
        for (j, out) in mo.chunks_exact_mut(len).enumerate() {
            if j > 0 {
                let (drop, add) = (resid(n + j - h), resid(n + j));
                for ((s, &a), &b) in sum.iter_mut().zip(drop).zip(add) {
                    *s = *s - a + b;
                }
            }
            for ((o, &s), &c) in out.iter_mut().zip(&sum).zip(&scale) {
                *o = s / c;
            }
        }
        self.mo = mo;
    }

    fn detect(&mut self, shared: &Shared, bound: &[f64]) {
        let len = self.len;
        let mut results = vec![BreakResult::default(); len];
        for (j, (row, &b)) in self.mo.chunks_exact(len).zip(bound).enumerate() {
            for (res, &m) in results.iter_mut().zip(row) {
                let a = m.abs();
                if res.first_break.is_none() && a > b {
                    res.first_break = Some(shared.history + j + 1);
                    res.detected = true;
                }
                res.max_abs_mo = res.max_abs_mo.max(a);
            }
        }
        for (res, &ok) in results.iter_mut().zip(&self.valid) {
            if !ok {
                *res = BreakResult::default();
            }
        }
        self.results = results;
    }
}

/// Runs `f` over every block in parallel; the first error in block order wins.
fn for_each_block<F>(blocks: &mut [Block], f: F) -> Result<()>
where
    F: Fn(&mut Block) -> Result<()> + Sync + Send,
{
    blocks
        .par_iter_mut()
        .map(f)
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<()>>()
}

fn run_fused(stack: &SeriesStack, config: &MonitorConfig, keep_mosum: bool) -> Result<RunOutput> {
    let start = Instant::now();
    let mut timings = PhaseTimings::default();
    let mut clock = Instant::now();
    let mut lap = |slot: &mut f64| {
        let now = Instant::now();
        *slot = (now - clock).as_secs_f64();
        clock = now;
    };

    let n_obs = stack.n_obs();
    let m = stack.n_pixels();
    config.validate_for(n_obs)?;
    let mut blocks: Vec<Block> = (0..m)
        .step_by(config.block_size)
        .map(|s| Block::new(s, config.block_size.min(m - s)))
        .collect();
    for_each_block(&mut blocks, |b| b.ingest(stack))?;
    lap(&mut timings.ingest);

    let design = model::build_design_matrix(stack.axis(), config.freq, config.harmonics)?;
    let mapping = model::fit_mapping(&design, config.history)?;
    let shared = Shared {
        design,
        mapping,
        history: config.history,
        bandwidth: config.bandwidth,
        n_obs,
    };
    blocks.par_iter_mut().for_each(|b| b.fit_models(&shared));
    lap(&mut timings.model);

    blocks.par_iter_mut().for_each(|b| b.predict(&shared));
    lap(&mut timings.predictions);

    for_each_block(&mut blocks, |b| b.residuals(&shared))?;
    lap(&mut timings.residuals);

    blocks.par_iter_mut().for_each(|b| {
        b.mosum(&shared);
        b.y = Vec::new();
        b.fit = Vec::new();
    });
    lap(&mut timings.mosum);

    let lambda = config.resolve_lambda(n_obs)?;
    let bound = mosum::boundary_values(config.history, n_obs, lambda)?;
    blocks.par_iter_mut().for_each(|b| b.detect(&shared, &bound));

    let mosum_matrix = keep_mosum.then(|| {
        let monitor = n_obs - config.history;
        let mut values = vec![0.0; monitor * m];
        for b in &blocks {
            for (j, row) in b.mo.chunks_exact(b.len).enumerate() {
                values[j * m + b.start..j * m + b.start + b.len].copy_from_slice(row);
            }
        }
        MosumMatrix { monitor_len: monitor, n_pixels: m, values }
    });
    let mut results = Vec::with_capacity(m);
    let mut valid = Vec::with_capacity(m);
    for b in &blocks {
        results.extend_from_slice(&b.results);
        valid.extend_from_slice(&b.valid);
    }
    lap(&mut timings.breaks);
    drop(blocks);
    timings.total = start.elapsed().as_secs_f64();

    Ok(RunOutput {
        map: BreakMap { results, valid, config: config.clone(), lambda },
        timings,
        mosum: mosum_matrix,
    })
}

/// Outcome of the single-series procedure on one pixel.
struct PixelOutcome {
    valid: bool,
    result: BreakResult,
    mo: Vec<f64>,
    /// Seconds spent in ingest, model, predictions, residuals, mosum, breaks.
    phases: [f64; 6],
}

/// The single-series procedure for one pixel; everything, including the
/// design matrix, is rebuilt from scratch.
fn naive_pixel(stack: &SeriesStack, config: &MonitorConfig, lambda: f64, pixel: usize) -> Result<PixelOutcome> {
    let mut phases = [0.0; 6];
    let mut clock = Instant::now();
    let mut lap = |i: usize| {
        let now = Instant::now();
        phases[i] += (now - clock).as_secs_f64();
        clock = now;
    };
    let (n, n_obs) = (config.history, stack.n_obs());
    let mut column = stack.pixel_series(pixel);
    let valid = prepare_series(&mut column, pixel)?;
    lap(0);
    if !valid {
        return Ok(PixelOutcome {
            valid,
            result: BreakResult::default(),
            mo: vec![0.0; n_obs - n],
            phases,
        });
    }
    let y: Vec<f64> = column.iter().map(|&v| v as f64).collect();

    let design = model::build_design_matrix(stack.axis(), config.freq, config.harmonics)?;
    let fit = model::fit_history(&design, &y, n)?;
    if fit.sigma == 0.0 {
        return Err(Error::ZeroSigma { pixel: Some(pixel) });
    }
    lap(1);
    let fitted = model::predict(&design, &fit.beta)?;
    lap(2);
    let resid: Vec<f64> = y.iter().zip(&fitted).map(|(y, f)| y - f).collect();
    lap(3);
    let mo = mosum::mosum_process(&resid, fit.sigma, n, config.bandwidth)?;
    lap(4);
    let bound = mosum::boundary_values(n, n_obs, lambda)?;
    let series = MosumSeries { history: n, mo, bound };
    let result = mosum::detect(&series)?;
    lap(5);
    Ok(PixelOutcome { valid, result, mo: series.mo, phases })
}

/// Per-pixel phase durations are summed over all pixels and then scaled so
/// that the phases account for the wall-clock time of the pixel loop.
fn run_naive(stack: &SeriesStack, config: &MonitorConfig, keep_mosum: bool) -> Result<RunOutput> {
    let start = Instant::now();
    let n_obs = stack.n_obs();
    let m = stack.n_pixels();
    config.validate_for(n_obs)?;
    let lambda_clock = Instant::now();
    let lambda = config.resolve_lambda(n_obs)?;
    let lambda_secs = lambda_clock.elapsed().as_secs_f64();

    let loop_clock = Instant::now();
    let outcomes = (0..m)
        .into_par_iter()
        .map(|p| naive_pixel(stack, config, lambda, p))
        .collect::<Result<Vec<_>>>()?;
    let loop_secs = loop_clock.elapsed().as_secs_f64();

    let mut acc = [0.0f64; 6];
    for o in &outcomes {
        for (a, p) in acc.iter_mut().zip(&o.phases) {
            *a += p;
        }
    }
    let acc_total: f64 = acc.iter().sum();
    let mut timings = PhaseTimings::default();
    for (slot, a) in timings.phases_mut().into_iter().zip(acc) {
        *slot = if acc_total > 0.0 { a / acc_total * loop_secs } else { 0.0 };
    }
    timings.breaks += lambda_secs;

    let monitor = n_obs - config.history;
    let mosum_matrix = keep_mosum.then(|| {
        let mut values = vec![0.0; monitor * m];
        for (p, o) in outcomes.iter().enumerate() {
            for (j, &v) in o.mo.iter().enumerate() {
                values[j * m + p] = v;
            }
        }
        MosumMatrix { monitor_len: monitor, n_pixels: m, values }
    });
    let results = outcomes.iter().map(|o| o.result).collect();
    let valid = outcomes.iter().map(|o| o.valid).collect();
    timings.total = start.elapsed().as_secs_f64();
    Ok(RunOutput {
        map: BreakMap { results, valid, config: config.clone(), lambda },
        timings,
        mosum: mosum_matrix,
    })
}

/// Dense block kernels. Every output element is a sum taken in a fixed
/// order starting from 0.0, the same order as the single-series routines,
/// so results match them bit for bit whichever instruction set runs.
mod kernels {
    const PIXEL_TILE: usize = 256;
    const LANES: usize = 8;

    /// `beta[j, px] = sum_i m_t[i, j] * y[i, px]`, `m_t` is history x params.
    pub fn fit_models(m_t: &[f64], params: usize, y: &[f32], len: usize, beta: &mut [f64]) {
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx512f") {
            // SAFETY: the feature was detected at runtime
            return unsafe { fit_models_avx512(m_t, params, y, len, beta) };
        }
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the feature was detected at runtime
            return unsafe { fit_models_avx2(m_t, params, y, len, beta) };
        }
        fit_models_body(m_t, params, y, len, beta)
    }

    /// `fit[t, px] = sum_j x_t[t, j] * beta[j, px]`, `x_t` is n_obs x params.
    pub fn predict(x_t: &[f64], params: usize, beta: &[f64], len: usize, fit: &mut [f64]) {
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx512f") {
            // SAFETY: the feature was detected at runtime
            return unsafe { predict_avx512(x_t, params, beta, len, fit) };
        }
        #[cfg(target_arch = "x86_64")]
        if std::arch::is_x86_feature_detected!("avx2") {
            // SAFETY: the feature was detected at runtime
            return unsafe { predict_avx2(x_t, params, beta, len, fit) };
        }
        predict_body(x_t, params, beta, len, fit)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx512f")]
    unsafe fn fit_models_avx512(m_t: &[f64], params: usize, y: &[f32], len: usize, beta: &mut [f64]) {
        fit_models_body(m_t, params, y, len, beta)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn fit_models_avx2(m_t: &[f64], params: usize, y: &[f32], len: usize, beta: &mut [f64]) {
        fit_models_body(m_t, params, y, len, beta)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx512f")]
    unsafe fn predict_avx512(x_t: &[f64], params: usize, beta: &[f64], len: usize, fit: &mut [f64]) {
        predict_body(x_t, params, beta, len, fit)
    }

    #[cfg(target_arch = "x86_64")]
    #[target_feature(enable = "avx2")]
    unsafe fn predict_avx2(x_t: &[f64], params: usize, beta: &[f64], len: usize, fit: &mut [f64]) {
        predict_body(x_t, params, beta, len, fit)
    }

    #[inline(always)]
    fn fit_models_body(m_t: &[f64], params: usize, y: &[f32], len: usize, beta: &mut [f64]) {
        let history = m_t.len() / params;
        // one lane chunk of Y_hist, history x LANES, contiguous
        let mut ys = vec![0.0f64; history * LANES];
        let mut c = 0;
        while c + LANES <= len {
            for (i, dst) in ys.chunks_exact_mut(LANES).enumerate() {
                for (d, &v) in dst.iter_mut().zip(&y[i * len + c..i * len + c + LANES]) {
                    *d = v as f64;
                }
            }
            let mut j = 0;
            while j + 4 <= params {
                store(beta, len, c, j, &param_group::<4>(&ys, m_t, params, j));
                j += 4;
            }
            match params - j {
                3 => store(beta, len, c, j, &param_group::<3>(&ys, m_t, params, j)),
                2 => store(beta, len, c, j, &param_group::<2>(&ys, m_t, params, j)),
                1 => store(beta, len, c, j, &param_group::<1>(&ys, m_t, params, j)),
                _ => {}
            }
            c += LANES;
        }
        for px in c..len {
            for j in 0..params {
                let mut acc = 0.0f64;
                for i in 0..history {
                    acc += m_t[i * params + j] * y[i * len + px] as f64;
                }
                beta[j * len + px] = acc;
            }
        }
    }

    #[inline(always)]
    fn param_group<const J: usize>(ys: &[f64], m_t: &[f64], params: usize, j0: usize) -> [[f64; LANES]; J] {
        let mut acc = [[0.0f64; LANES]; J];
        for (yv, m) in ys.chunks_exact(LANES).zip(m_t.chunks_exact(params)) {
            for (a, &mj) in acc.iter_mut().zip(&m[j0..j0 + J]) {
                for (s, &v) in a.iter_mut().zip(yv) {
                    *s += mj * v;
                }
            }
        }
        acc
    }

    #[inline(always)]
    fn store<const J: usize>(beta: &mut [f64], len: usize, c: usize, j0: usize, acc: &[[f64; LANES]; J]) {
        for (g, a) in acc.iter().enumerate() {
            let row = (j0 + g) * len + c;
            beta[row..row + LANES].copy_from_slice(a);
        }
    }

    #[inline(always)]
    fn predict_body(x_t: &[f64], params: usize, beta: &[f64], len: usize, fit: &mut [f64]) {
        // compact copy of one tile of B; rows of the block are a power of
        // two apart and would share L1 sets
        let mut tile = vec![0.0f64; params * PIXEL_TILE];
        for lo in (0..len).step_by(PIXEL_TILE) {
            let hi = (lo + PIXEL_TILE).min(len);
            let w = hi - lo;
            for j in 0..params {
                tile[j * w..(j + 1) * w].copy_from_slice(&beta[j * len + lo..j * len + hi]);
            }
            let tile = &tile[..params * w];
            for (out, x) in fit.chunks_exact_mut(len).zip(x_t.chunks_exact(params)) {
                let out = &mut out[lo..hi];
                let mut c = 0;
                while c + LANES <= w {
                    let mut acc = [0.0f64; LANES];
                    for (j, &xj) in x.iter().enumerate() {
                        for (a, &b) in acc.iter_mut().zip(&tile[j * w + c..j * w + c + LANES]) {
                            *a += xj * b;
                        }
                    }
                    out[c..c + LANES].copy_from_slice(&acc);
                    c += LANES;
                }
                for px in c..w {
                    let mut acc = 0.0f64;
                    for (j, &xj) in x.iter().enumerate() {
                        acc += xj * tile[j * w + px];
                    }
                    out[px] = acc;
                }
            }
        }
    }
}
