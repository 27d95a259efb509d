//! Simulation scenarios built on `dbf-core`: benchmark target tracking with
//! nonlinear and linear sensors, and range-only formation control.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod benchmark;
pub mod formation;
pub mod layout;
pub mod metrics;
pub mod models;
pub mod multiloop;
pub mod pf;
pub mod rng;

pub use benchmark::{
    run_benchmark_scenario1, run_benchmark_scenario2, BenchmarkConfig, SensorKind,
};
pub use formation::{run_formation, FormationConfig, FormationResult};
pub use metrics::{AgentLabel, MetricRow, RunMetrics};
pub use multiloop::{run_multiloop, MultiloopConfig};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error(transparent)]
    Core(#[from] dbf_core::DbfError),
}
