//! Hybrid block bootstrap for the sampling distribution of sample quantiles
//! of weakly dependent series.
//!
//! The bootstrap pastes `b` randomly chosen blocks of `ell` consecutive
//! observations, covering the range from subsampling (`b = 1`) to the moving
//! block bootstrap (`b = floor(n / ell)`). The crate provides the resampler,
//! exact enumeration for small instances, estimators and confidence limits,
//! data-driven selection of `(b, ell)`, seeded test processes and an experiment
//! harness used by the `hbb` binary.

pub mod empirical;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod models;
pub mod resample;
pub mod seed;
pub mod tuning;

pub use empirical::{BlockPlan, QuantileSpec};
pub use error::{Error, Result};
pub use models::{ModelSpec, Process, TimeSeries};
pub use resample::{EmpiricalDistribution, ResamplePlan};
