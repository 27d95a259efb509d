//! Repeated consensus within a single time instant on a static graph.

use dbf_core::bounds::multiloop_bound;
use dbf_core::{
    check_assumption1, local_degree_weights, multiloop_fuse, second_singular_value,
    AdjacencySchedule, DensityGrid, Digraph, StateGrid,
};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::metrics::{AgentLabel, RunMetrics};
use crate::rng::sub_stream;
use crate::SimError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MultiloopConfig {
    pub agents: usize,
    pub n_loop: usize,
    /// Points of the 1-D grid on `[-10, 10]`.
    pub grid_points: usize,
    /// Probability of each extra edge beyond a random spanning tree.
    pub extra_edges: f64,
    pub seed: u64,
}

impl Default for MultiloopConfig {
    fn default() -> Self {
        Self {
            agents: 5,
            n_loop: 10,
            grid_points: 64,
            extra_edges: 0.3,
            seed: 42,
        }
    }
}

impl MultiloopConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |f: &str, m: &str| Err(SimError::ConfigInvalid(format!("{f}: {m}")));
        if self.agents < 2 {
            return bad("agents", "needs at least 2 agents");
        }
        if self.n_loop < 1 {
            return bad("n_loop", "must be at least 1");
        }
        if self.grid_points < 2 {
            return bad("grid_points", "must be at least 2");
        }
        if !(0.0..=1.0).contains(&self.extra_edges) {
            return bad("extra_edges", "must lie in [0, 1]");
        }
        Ok(())
    }
}

/// Random connected graph passing every connectivity clause with
/// local-degree weights, and Gaussian likelihoods with random centers and widths.
pub fn run_multiloop(cfg: &MultiloopConfig) -> Result<RunMetrics, SimError> {
    cfg.validate()?;
    let n = cfg.agents;
    let mut rng = sub_stream(cfg.seed, "multiloop", 0);
    let a = loop {
        let g = Digraph::random_connected(n, cfg.extra_edges, &mut rng);
        let a = local_degree_weights(&g)?;
        if check_assumption1(&AdjacencySchedule::constant(a.clone())).ok {
            break a;
        }
    };
    let sigma = second_singular_value(&a);
    let grid = StateGrid::line(-10.0, 10.0, cfg.grid_points)?.into_shared();
    let likelihoods = (0..n)
        .map(|_| {
            let mean = rng.random_range(-3.0..3.0);
            let std = rng.random_range(1.0..3.0);
            DensityGrid::gaussian(&grid, &[mean], &[std])
        })
        .collect::<dbf_core::Result<Vec<_>>>()?;
    let res = multiloop_fuse(&likelihoods, &a, cfg.n_loop)?;

    let mut out = RunMetrics::default();
    let mut worst_ratio = 0.0f64;
    for (nu, e) in res.errors.iter().enumerate() {
        let bound = multiloop_bound(n, sigma, nu + 1)?;
        out.push(nu + 1, AgentLabel::Network, "error", *e);
        out.push(nu + 1, AgentLabel::Network, "bound", bound);
        worst_ratio = worst_ratio.max(e / bound);
    }
    let s = &mut out.summary;
    s.insert("sigma".into(), sigma);
    s.insert("n_loop".into(), cfg.n_loop as f64);
    s.insert(
        "final_error".into(),
        *res.errors.last().expect("n_loop >= 1"),
    );
    s.insert("final_bound".into(), multiloop_bound(n, sigma, cfg.n_loop)?);
    s.insert("max_error_to_bound".into(), worst_ratio);
    Ok(out)
}
