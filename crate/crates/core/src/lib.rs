//! Distributed Bayesian filtering over time-varying networks: grid densities,
//! opinion pools, consensus weights, convergence bounds, the consensus filter
//! itself and its linear-Gaussian information-filter form.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod density;
pub mod engine;
pub mod error;
pub mod info_filter;
pub mod pool;
pub mod topology;

pub use density::{
    find_psi, kl_divergence, l1_distance, log_ratio, normalize, normalize_log, tv_distance, Axis,
    DensityGrid, LogRatioField, ParticleSet, StateGrid, POSITIVITY_FLOOR,
};
pub use error::{DbfError, Result};
pub use pool::{bayes_update, joint_likelihood, kl_pool, linop, logop, PoolWeights};
pub use topology::{
    check_assumption1, local_degree_weights, second_singular_value, sigma_m, sigma_m_bound,
    window_product, AdjacencyMatrix, AdjacencySchedule, Assumption1Report, Digraph,
};
pub use engine::{
    inject_channel_noise, multiloop_fuse, normalized_likelihood, power_estimate, predict, update,
    AgentState, CentralizedBayesFilter, ChannelNoise, DbfNetwork, SensorModel, StepDiagnostics,
    TargetModel, TransitionKernel,
};
pub use info_filter::{
    info_fuse, info_measurement, info_predict, info_update, CentralizedInfoFilter,
    DistributedInfoFilter, GaussianInfo, InfoState, LinearModel, LinearSensor,
};
