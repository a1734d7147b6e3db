//! Season-trend design matrix and ordinary least-squares history models.
//!
//! The regressor for observation `t` is
//! `(1, t, sin(2πt/f), cos(2πt/f), ..., sin(2πkt/f), cos(2πkt/f))`, so a
//! model with `k` harmonic terms has `2 + 2k` coefficients. The design
//! matrix stores one regressor per column (`(2+2k) x N`, row-major).

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg;

/// Condition number of the Gram matrix above which the Cholesky route is
/// abandoned for the SVD pseudo-inverse.
pub const GRAM_CONDITION_LIMIT: f64 = 1e12;
/// Relative singular-value cutoff of the pseudo-inverse fallback.
pub const PINV_RELATIVE_CUTOFF: f64 = 1e-10;

/// Number of regression coefficients for `k` harmonic terms.
#[inline]
pub fn param_count(harmonics: usize) -> usize {
    2 + 2 * harmonics
}

/// Strictly increasing observation times.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeAxis(Vec<f64>);

impl TimeAxis {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "time axis needs at least 2 values, got {}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("time axis value {bad} is not finite")));
        }
        if let Some(i) = values.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidArgument(format!(
                "time axis is not strictly increasing at index {}",
                i + 1
            )));
        }
        Ok(TimeAxis(values))
    }

    /// Regular sampling `1, 2, ..., len`.
    pub fn regular(len: usize) -> Result<Self> {
        TimeAxis::new((1..=len).map(|i| i as f64).collect())
    }

    /// True when the axis is exactly `1, 2, ..., len`.
    pub fn is_regular(&self) -> bool {
        self.0.iter().enumerate().all(|(i, &v)| v == (i + 1) as f64)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    data: Vec<f64>,
    n_obs: usize,
    freq: f64,
    harmonics: usize,
}

impl DesignMatrix {
    pub fn rows(&self) -> usize {
        param_count(self.harmonics)
    }

    pub fn n_obs(&self) -> usize {
        self.n_obs
    }

    pub fn freq(&self) -> f64 {
        self.freq
    }

    pub fn harmonics(&self) -> usize {
        self.harmonics
    }

    /// Regressor row `r` over all observations.
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.n_obs..(r + 1) * self.n_obs]
    }

    pub fn get(&self, r: usize, t: usize) -> f64 {
        self.data[r * self.n_obs + t]
    }

    /// Row-major `(2+2k) x N` storage.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

pub fn build_design_matrix(axis: &TimeAxis, freq: f64, harmonics: usize) -> Result<DesignMatrix> {
    if harmonics < 1 {
        return Err(Error::InvalidArgument("number of harmonic terms must be at least 1".into()));
    }
    if !(freq > 0.0) || !freq.is_finite() {
        return Err(Error::InvalidArgument(format!("frequency must be positive, got {freq}")));
    }
    let n_obs = axis.len();
    let rows = param_count(harmonics);
    let mut data = vec![0.0; rows * n_obs];
    data[..n_obs].fill(1.0);
    data[n_obs..2 * n_obs].copy_from_slice(axis.values());
    for j in 1..=harmonics {
        let (sin_row, rest) = data[2 * j * n_obs..].split_at_mut(n_obs);
        let cos_row = &mut rest[..n_obs];
        for (i, &t) in axis.values().iter().enumerate() {
            let (s, c) = (2.0 * PI * j as f64 * t / freq).sin_cos();
            sin_row[i] = s;
            cos_row[i] = c;
        }
    }
    Ok(DesignMatrix { data, n_obs, freq, harmonics })
}

/// `M = (X_h X_h^T)^{-1} X_h` for the first `history` columns `X_h`.
#[derive(Debug, Clone, PartialEq)]
pub struct MappingMatrix {
    data: Vec<f64>,
    params: usize,
    history: usize,
}

impl MappingMatrix {
    pub fn params(&self) -> usize {
        self.params
    }

    pub fn history(&self) -> usize {
        self.history
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.history..(r + 1) * self.history]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Coefficients for one history series. Each coefficient accumulates
    /// over the history in index order starting from zero; the batched
    /// kernels rely on reproducing exactly this order.
    pub fn apply(&self, y_hist: &[f64]) -> Vec<f64> {
        debug_assert_eq!(y_hist.len(), self.history);
        (0..self.params)
            .map(|r| {
                let mut acc = 0.0;
                for (m, y) in self.row(r).iter().zip(y_hist) {
                    acc += m * y;
                }
                acc
            })
            .collect()
    }
}

pub fn fit_mapping(design: &DesignMatrix, history: usize) -> Result<MappingMatrix> {
    let params = design.rows();
    if history <= params {
        return Err(Error::DegreesOfFreedom { history, params });
    }
    if history > design.n_obs() {
        return Err(Error::InvalidArgument(format!(
            "history length {history} exceeds series length {}",
            design.n_obs()
        )));
    }

    let mut gram = vec![0.0; params * params];
    for a in 0..params {
        let ra = &design.row(a)[..history];
        for b in 0..=a {
            let rb = &design.row(b)[..history];
            let dot: f64 = ra.iter().zip(rb).map(|(x, y)| x * y).sum();
            gram[a * params + b] = dot;
            gram[b * params + a] = dot;
        }
    }

    let mut condition = f64::INFINITY;
    if let Some(l) = linalg::cholesky(&gram, params) {
        let inv = linalg::cholesky_inverse(&l, params);
        condition = linalg::norm_one(&gram, params) * linalg::norm_one(&inv, params);
        if condition.is_finite() && condition <= GRAM_CONDITION_LIMIT {
            let mut data = vec![0.0; params * history];
            for r in 0..params {
                let out = &mut data[r * history..(r + 1) * history];
                for c in 0..params {
                    let g = inv[r * params + c];
                    for (o, x) in out.iter_mut().zip(&design.row(c)[..history]) {
                        *o += g * x;
                    }
                }
            }
            return Ok(MappingMatrix { data, params, history });
        }
    }

    // SVD pseudo-inverse of X_h^T (history x params)
    let mut xt = vec![0.0; history * params];
    for r in 0..params {
        for (i, &x) in design.row(r)[..history].iter().enumerate() {
            xt[i * params + r] = x;
        }
    }
    match linalg::jacobi_pinv(&xt, history, params, PINV_RELATIVE_CUTOFF) {
        Some((data, _)) => Ok(MappingMatrix { data, params, history }),
        None => Err(Error::RankDeficient { condition }),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HistoryModel {
    pub beta: Vec<f64>,
    pub sigma: f64,
}

/// `X^T beta` over all observations; each prediction accumulates the
/// coefficients in order starting from zero.
pub fn predict(design: &DesignMatrix, beta: &[f64]) -> Result<Vec<f64>> {
    if beta.len() != design.rows() {
        return Err(Error::InvalidArgument(format!(
            "coefficient vector has length {}, design expects {}",
            beta.len(),
            design.rows()
        )));
    }
    let mut out = vec![0.0; design.n_obs()];
    for (r, &b) in beta.iter().enumerate() {
        for (o, x) in out.iter_mut().zip(design.row(r)) {
            *o += x * b;
        }
    }
    Ok(out)
}

/// Residual standard deviation over the history with `n - (2+2k)`
/// degrees of freedom, from residuals in any sign convention.
pub fn residual_sigma(residuals_hist: &[f64], params: usize) -> f64 {
    let mut ss = 0.0;
    for r in residuals_hist {
        ss += r * r;
    }
    (ss / (residuals_hist.len() - params) as f64).sqrt()
}

pub fn fit_history(design: &DesignMatrix, y: &[f64], history: usize) -> Result<HistoryModel> {
    if y.len() != design.n_obs() {
        return Err(Error::InvalidArgument(format!(
            "series has length {}, design has {} observations",
            y.len(),
            design.n_obs()
        )));
    }
    let mapping = fit_mapping(design, history)?;
    fit_with_mapping(design, &mapping, y)
}

/// History fit given a precomputed mapping matrix.
pub fn fit_with_mapping(design: &DesignMatrix, mapping: &MappingMatrix, y: &[f64]) -> Result<HistoryModel> {
    let history = mapping.history();
    if let Some(i) = y[..history].iter().position(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("history value at index {i} is not finite")));
    }
    let beta = mapping.apply(&y[..history]);
    let fitted = predict(design, &beta)?;
    let resid: Vec<f64> = y[..history].iter().zip(&fitted).map(|(y, f)| y - f).collect();
    let sigma = residual_sigma(&resid, mapping.params());
    Ok(HistoryModel { beta, sigma })
}

/// `(amplitude, phase)` per harmonic term, using the pairing
/// `(γ cos δ, γ sin δ)` for the sine/cosine coefficients.
pub fn amplitude_phase(beta: &[f64], harmonics: usize) -> Result<Vec<(f64, f64)>> {
    if beta.len() != param_count(harmonics) {
        return Err(Error::InvalidArgument(format!(
            "coefficient vector has length {}, expected {}",
            beta.len(),
            param_count(harmonics)
        )));
    }
    Ok((1..=harmonics)
        .map(|j| {
            let (a, b) = (beta[2 * j], beta[2 * j + 1]);
            (a.hypot(b), b.atan2(a))
        })
        .collect())
}
