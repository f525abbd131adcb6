//! Experiment layer for the branching Brownian motion toolkit: config-driven
//! reproducible runs wiring the engine, wave solver, CSBP sampler, and
//! coalescent machinery into plot-ready CSV/JSON tables.

pub mod config;
pub mod error;
pub mod experiments;
pub mod table;

pub use config::{ExperimentConfig, ExperimentKind};
pub use error::{CliError, Result};
pub use experiments::{emit_all, run, ExperimentOutput};
pub use table::{Cell, OutputFormat, Provenance, ResultTable};
