//! Synthetic evaluation stacks and the scaling benchmark.
//!
//! Every series follows `y_t = 0.05 sin(2πt/f) + ε_t (+ c)` on the regular
//! axis `t = 1..=N`, with `ε_t ~ Normal(0, noise_std)`. The first
//! `floor(break_ratio * m)` pixels receive the constant `c` over the last
//! `round(break_frac * N)` observations.

use std::f64::consts::PI;
use std::io::Write;

use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

use crate::engine::{self, MonitorConfig, PhaseTimings, SeriesStack};
use crate::error::{Error, Result};
use crate::model::TimeAxis;
use crate::mosum;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub n_pixels: usize,
    pub n_obs: usize,
    pub freq: f64,
    pub noise_std: f64,
    /// The constant added to break-bearing series.
    pub break_mag: f64,
    pub break_frac: f64,
    pub break_ratio: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_pixels: 1000,
            n_obs: 200,
            freq: 23.0,
            noise_std: 0.01,
            break_mag: 0.1,
            break_frac: 0.4,
            break_ratio: 0.5,
            seed: 1,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidArgument(msg));
        if self.n_pixels < 1 {
            return bad("m must be at least 1".into());
        }
        if self.n_obs < 2 {
            return bad(format!("N must be at least 2, got {}", self.n_obs));
        }
        if !(self.freq > 0.0) || !self.freq.is_finite() {
            return bad(format!("freq must be positive, got {}", self.freq));
        }
        if !(self.noise_std >= 0.0) || !self.noise_std.is_finite() {
            return bad(format!("noise std must be non-negative, got {}", self.noise_std));
        }
        if !self.break_mag.is_finite() {
            return bad(format!("break magnitude must be finite, got {}", self.break_mag));
        }
        if !(0.0..=1.0).contains(&self.break_frac) {
            return bad(format!("break fraction must lie in [0, 1], got {}", self.break_frac));
        }
        if !(0.0..=1.0).contains(&self.break_ratio) {
            return bad(format!("break ratio must lie in [0, 1], got {}", self.break_ratio));
        }
        Ok(())
    }

    pub fn break_pixels(&self) -> usize {
        (self.break_ratio * self.n_pixels as f64).floor() as usize
    }

    /// 0-based index of the first shifted observation.
    pub fn break_start(&self) -> usize {
        self.n_obs - (self.break_frac * self.n_obs as f64).round() as usize
    }
}

const PIXEL_BLOCK: usize = 1024;

/// Generates the stack and the per-pixel ground truth. Pixel `p` draws its
/// noise from ChaCha stream `p` of the seed.
pub fn generate(spec: &SynthSpec) -> Result<(SeriesStack, Vec<bool>)> {
    spec.validate()?;
    let (n_obs, m) = (spec.n_obs, spec.n_pixels);
    let season: Vec<f64> = (1..=n_obs)
        .map(|t| 0.05 * (2.0 * t as f64 * PI / spec.freq).sin())
        .collect();
    let noise = Normal::new(0.0, spec.noise_std).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let n_breaks = spec.break_pixels();
    let break_start = spec.break_start();

    // each block is generated pixel-major, then transposed into place
    let blocks: Vec<Vec<f32>> = (0..m)
        .step_by(PIXEL_BLOCK)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|start| {
            let len = PIXEL_BLOCK.min(m - start);
            let mut out = Vec::with_capacity(len * n_obs);
            for p in start..start + len {
                let mut rng = mosum::substream(spec.seed, p as u64);
                let shift = p < n_breaks;
                for (t, s) in season.iter().enumerate() {
                    let mut v = s + if spec.noise_std > 0.0 { noise.sample(&mut rng) } else { 0.0 };
                    if shift && t >= break_start {
                        v += spec.break_mag;
                    }
                    out.push(v as f32);
                }
            }
            out
        })
        .collect();

    let mut data = vec![0.0f32; n_obs * m];
    for (b, block) in blocks.iter().enumerate() {
        let start = b * PIXEL_BLOCK;
        for (k, series) in block.chunks_exact(n_obs).enumerate() {
            for (t, &v) in series.iter().enumerate() {
                data[t * m + start + k] = v;
            }
        }
    }
    let truth = (0..m).map(|p| p < n_breaks).collect();
    Ok((SeriesStack::new(TimeAxis::regular(n_obs)?, m, data)?, truth))
}

pub const BENCH_HEADER: &str = "m,ingest,model,predictions,residuals,mosum,breaks,total";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchRow {
    pub n_pixels: usize,
    pub timings: PhaseTimings,
}

/// One profiled run per pixel count on freshly generated data. The
/// critical value is resolved once up front and shared by every run.
pub fn bench_scaling(m_list: &[usize], config: &MonitorConfig, template: &SynthSpec) -> Result<Vec<BenchRow>> {
    if m_list.is_empty() {
        return Err(Error::InvalidArgument("pixel-count list is empty".into()));
    }
    config.validate_for(template.n_obs)?;
    let lambda = config.resolve_lambda(template.n_obs)?;
    let config = MonitorConfig { lambda: Some(lambda), ..config.clone() };
    let mut rows = Vec::with_capacity(m_list.len());
    for &m in m_list {
        let spec = SynthSpec { n_pixels: m, ..template.clone() };
        let (stack, _) = generate(&spec)?;
        let (_, timings) = engine::profile_run(&stack, &config)?;
        rows.push(BenchRow { n_pixels: m, timings });
    }
    Ok(rows)
}

pub fn write_bench_csv<W: Write>(rows: &[BenchRow], mut sink: W) -> Result<usize> {
    writeln!(sink, "{BENCH_HEADER}")?;
    for r in rows {
        let t = &r.timings;
        writeln!(
            sink,
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            r.n_pixels, t.ingest, t.model, t.predictions, t.residuals, t.mosum, t.breaks, t.total
        )?;
    }
    sink.flush()?;
    Ok(rows.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noiseless_series_is_pure_season() {
        let spec = SynthSpec { n_pixels: 3, n_obs: 50, noise_std: 0.0, break_mag: 0.0, ..Default::default() };
        let (stack, _) = generate(&spec).unwrap();
        for p in 0..3 {
            for (t, v) in stack.pixel_series(p).iter().enumerate() {
                let want = 0.05 * (2.0 * (t + 1) as f64 * PI / 23.0).sin();
                assert_eq!(*v, want as f32);
            }
        }
    }

    #[test]
    fn truth_counts_and_prefix() {
        let spec = SynthSpec { n_pixels: 10, n_obs: 20, ..Default::default() };
        let (_, truth) = generate(&spec).unwrap();
        assert_eq!(truth.iter().filter(|&&b| b).count(), 5);
        assert!(truth[..5].iter().all(|&b| b));
    }

    #[test]
    fn break_covers_last_fraction() {
        let spec = SynthSpec {
            n_pixels: 2,
            n_obs: 200,
            noise_std: 0.0,
            break_mag: 1.0,
            ..Default::default()
        };
        let (stack, _) = generate(&spec).unwrap();
        let shifted = stack.pixel_series(0);
        let clean = stack.pixel_series(1);
        let diffs: Vec<usize> = (0..200).filter(|&t| shifted[t] != clean[t]).collect();
        assert_eq!(diffs.len(), 80);
        assert_eq!(diffs[0], 120);
    }

    #[test]
    fn seeded_determinism() {
        let spec = SynthSpec { n_pixels: 2500, n_obs: 30, ..Default::default() };
        let (a, ta) = generate(&spec).unwrap();
        let (b, tb) = generate(&spec).unwrap();
        assert!(a.bit_eq(&b));
        assert_eq!(ta, tb);
        let (c, _) = generate(&SynthSpec { seed: 2, ..spec }).unwrap();
        assert!(!a.bit_eq(&c));
    }

    #[test]
    fn spec_validation() {
        let ok = SynthSpec::default();
        assert!(generate(&SynthSpec { break_frac: 1.5, ..ok.clone() }).is_err());
        assert!(generate(&SynthSpec { break_ratio: -0.1, ..ok.clone() }).is_err());
        assert!(generate(&SynthSpec { noise_std: -1.0, ..ok.clone() }).is_err());
        assert!(generate(&SynthSpec { n_pixels: 0, ..ok }).is_err());
    }

    #[test]
    fn bench_csv_schema() {
        let cfg = MonitorConfig { lambda: Some(1.5), ..Default::default() };
        let rows = bench_scaling(&[50, 100, 150, 200], &cfg, &SynthSpec::default()).unwrap();
        assert_eq!(rows.len(), 4);
        let mut out = Vec::new();
        write_bench_csv(&rows, &mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], BENCH_HEADER);
        assert_eq!(lines.len(), 5);
        assert!(lines[1..].iter().all(|l| l.split(',').count() == 8));
        assert!(bench_scaling(&[], &cfg, &SynthSpec::default()).is_err());
    }
}
