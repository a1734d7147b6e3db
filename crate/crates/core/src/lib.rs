//! Break detection for stacks of satellite pixel time series.
//!
//! A harmonic season-trend model is fitted by least squares on a stable
//! history window of every series; the monitor period is then tested with
//! a MOSUM process of the prediction residuals against a boundary scaled
//! by a simulated critical value.
//!
//! - [`model`]: design matrix and history fits
//! - [`mosum`]: MOSUM process, boundary, critical value, detection
//! - [`engine`]: batched monitoring with fused and per-series backends
//! - [`dataio`]: `BTS1` stack files and CSV input/output
//! - [`synth`]: synthetic stacks and scaling benchmarks
//! - [`cli`]: the `breakwatch` command line

pub mod cli;
pub mod dataio;
pub mod engine;
pub mod error;
pub mod linalg;
pub mod model;
pub mod mosum;
pub mod synth;

pub use engine::{
    fill_gaps, monitor_batch, monitor_with_mosum, profile_run, Backend, BreakMap, MonitorConfig, MosumMatrix,
    PhaseTimings, SeriesStack,
};
pub use error::{Error, Result};
pub use model::{DesignMatrix, HistoryModel, MappingMatrix, TimeAxis};
pub use mosum::{BreakResult, CriticalValueRequest, MosumSeries};
