//! Experiment harness: grids, Monte Carlo studies, configuration and output.

pub mod config;
pub mod experiments;
pub mod grid;
pub mod run;

pub use config::{Command, ExperimentConfig};
pub use experiments::{Experiment, Reference, StatKind};
pub use grid::{Grid, GridResult, GridRow, Region};
pub use run::{run, RunReport};
