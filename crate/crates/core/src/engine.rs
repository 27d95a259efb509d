//! The consensus filter: per-agent predict, likelihood, fuse, power and update
//! on a shared grid, plus the multi-loop variant and bounded error injection.

use std::sync::Arc;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::density::{l1_distance, normalize_log, DensityGrid, StateGrid};
use crate::error::{DbfError, Result};
use crate::pool::{bayes_update, joint_likelihood, weighted_log_sum};
use crate::topology::{AdjacencyMatrix, AdjacencySchedule};

const KERNEL_TOLERANCE: f64 = 1e-6;
const ROW_TOLERANCE: f64 = 1e-12;

/// State evolution model: a sampler and a transition density.
pub trait TargetModel {
    /// Draws the next state from `x` over a step of length `dt`.
    fn sample(&self, x: &[f64], dt: f64, rng: &mut dyn RngCore) -> Vec<f64>;
    /// Log transition density `log p(to | from)` up to a constant.
    fn log_transition(&self, to: &[f64], from: &[f64], dt: f64) -> f64;
}

/// Measurement model: a sampler and a log-likelihood evaluator.
pub trait SensorModel {
    fn sample(&self, x: &[f64], rng: &mut dyn RngCore) -> Vec<f64>;
    /// `log p(y | x)` up to a constant; must be finite or `-inf`.
    fn log_likelihood(&self, y: &[f64], x: &[f64]) -> f64;
}

/// Independent Gaussian increments with standard deviation `std·√dt` per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianRandomWalk {
    pub std: Vec<f64>,
}

impl TargetModel for GaussianRandomWalk {
    fn sample(&self, x: &[f64], dt: f64, rng: &mut dyn RngCore) -> Vec<f64> {
        x.iter()
            .zip(&self.std)
            .map(|(xi, s)| {
                let z: f64 = StandardNormal.sample(rng);
                xi + s * dt.sqrt() * z
            })
            .collect()
    }

    fn log_transition(&self, to: &[f64], from: &[f64], dt: f64) -> f64 {
        to.iter()
            .zip(from)
            .zip(&self.std)
            .map(|((a, b), s)| -0.5 * ((a - b) / (s * dt.sqrt())).powi(2))
            .sum()
    }
}

/// Gaussian measurement of selected state components.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSensor {
    pub components: Vec<usize>,
    pub std: f64,
}

impl SensorModel for GaussianSensor {
    fn sample(&self, x: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        self.components
            .iter()
            .map(|&c| {
                let z: f64 = StandardNormal.sample(rng);
                x[c] + self.std * z
            })
            .collect()
    }

    fn log_likelihood(&self, y: &[f64], x: &[f64]) -> f64 {
        self.components
            .iter()
            .zip(y)
            .map(|(&c, yi)| -0.5 * ((yi - x[c]) / self.std).powi(2))
            .sum()
    }
}

/// Grid transition matrix `K[to, from]`; every column integrates to 1.
#[derive(Debug, Clone, PartialEq)]
pub enum TransitionKernel {
    Identity,
    Dense { len: usize, values: Vec<f64> },
}

impl TransitionKernel {
    /// Discretizes `model` on `grid`, normalizing each column.
    pub fn from_model(grid: &StateGrid, model: &dyn TargetModel, dt: f64) -> Result<Self> {
        let centers: Vec<Vec<f64>> = grid.centers().collect();
        let len = grid.len();
        let vol = grid.cell_volume();
        let mut values = vec![0.0; len * len];
        for (from, xf) in centers.iter().enumerate() {
            let logs: Vec<f64> = centers.iter().map(|xt| model.log_transition(xt, xf, dt)).collect();
            let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            if !max.is_finite() {
                return Err(DbfError::KernelInvalid(format!("column {from} has no finite mass")));
            }
            let total: f64 = logs.iter().map(|l| (l - max).exp()).sum::<f64>() * vol;
            for (to, l) in logs.iter().enumerate() {
                values[to * len + from] = (l - max).exp() / total;
            }
        }
        Self::dense(len, values, vol)
    }

    /// Validates a dense kernel given in row-major `[to][from]` order.
    pub fn dense(len: usize, values: Vec<f64>, cell_volume: f64) -> Result<Self> {
        if values.len() != len * len {
            return Err(DbfError::KernelInvalid(format!(
                "expected {} entries, got {}",
                len * len,
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(DbfError::KernelInvalid("entries must be finite and nonnegative".into()));
        }
        for from in 0..len {
            let mass: f64 = (0..len).map(|to| values[to * len + from]).sum::<f64>() * cell_volume;
            if (mass - 1.0).abs() > KERNEL_TOLERANCE {
                return Err(DbfError::KernelInvalid(format!(
                    "column {from} integrates to {mass}"
                )));
            }
        }
        Ok(Self::Dense { len, values })
    }
}

/// Chapman–Kolmogorov prediction of the prior from the previous posterior.
pub fn predict(w_prev: &DensityGrid, kernel: &TransitionKernel) -> Result<DensityGrid> {
    match kernel {
        TransitionKernel::Identity => Ok(w_prev.clone()),
        TransitionKernel::Dense { len, values } => {
            if *len != w_prev.len() {
                return Err(DbfError::KernelInvalid(format!(
                    "kernel has {len} cells, density has {}",
                    w_prev.len()
                )));
            }
            let vol = w_prev.grid().cell_volume();
            let w = w_prev.values();
            let raw: Vec<f64> = values
                .chunks_exact(*len)
                .map(|row| row.iter().zip(&w).map(|(k, p)| k * p).sum::<f64>() * vol)
                .collect();
            normalize_log(w_prev.grid(), raw.into_iter().map(f64::ln).collect())
        }
    }
}

/// Normalized likelihood of `y`; uniform when the agent has no measurement.
pub fn normalized_likelihood(
    grid: &Arc<StateGrid>,
    sensor: Option<&dyn SensorModel>,
    y: Option<&[f64]>,
) -> Result<DensityGrid> {
    match (sensor, y) {
        (Some(s), Some(y)) => DensityGrid::from_log_fn(grid, |x| s.log_likelihood(y, x)),
        _ => Ok(DensityGrid::uniform(grid)),
    }
}

/// `normalize(u^n)`.
pub fn power_estimate(u: &DensityGrid, n: usize) -> Result<DensityGrid> {
    if n == 1 {
        return Ok(u.clone());
    }
    u.powf(n as f64)
}

/// Posterior from prior `s` and fused likelihood estimate `t`.
pub fn update(s: &DensityGrid, t: &DensityGrid) -> Result<DensityGrid> {
    bayes_update(s, t)
}

fn check_row(row: usize, weights: impl Iterator<Item = f64>) -> Result<()> {
    let mut sum = 0.0;
    for w in weights {
        if !w.is_finite() || w < 0.0 {
            return Err(DbfError::WeightRowInvalid {
                row,
                reason: format!("weight {w} is negative or non-finite"),
            });
        }
        sum += w;
    }
    if (sum - 1.0).abs() > ROW_TOLERANCE {
        return Err(DbfError::WeightRowInvalid {
            row,
            reason: format!("weights sum to {sum}"),
        });
    }
    Ok(())
}

/// Bounded multiplicative perturbation of densities in transit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelNoise {
    /// Bound on the log error of received consensus densities.
    pub eps_u: f64,
    /// Bound on the log error of each agent's own likelihood.
    pub eps_l: f64,
    pub seed: u64,
}

/// Multiplies every cell by `e^ξ`, `ξ ~ U[−eps, eps]`, then renormalizes.
pub fn inject_channel_noise<R: Rng + ?Sized>(
    u: &DensityGrid,
    eps: f64,
    rng: &mut R,
) -> Result<DensityGrid> {
    if eps == 0.0 {
        return Ok(u.clone());
    }
    if !(eps > 0.0 && eps.is_finite()) {
        return Err(DbfError::Domain(format!("noise bound must be nonnegative, got {eps}")));
    }
    let logs = u
        .log_values()
        .iter()
        .map(|v| v + rng.random_range(-eps..=eps))
        .collect();
    normalize_log(u.grid(), logs)
}

/// One agent's filter memory.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: usize,
    /// Prior of the latest step.
    pub s: DensityGrid,
    /// Posterior of the latest step.
    pub w: DensityGrid,
    /// Likelihood at the current step.
    pub l: DensityGrid,
    /// Likelihood at the previous step.
    pub l_prev: DensityGrid,
    /// Consensus density.
    pub u: DensityGrid,
    /// Estimate of the joint likelihood.
    pub t: DensityGrid,
}

impl AgentState {
    pub fn new(id: usize, prior: DensityGrid) -> Self {
        let uniform = DensityGrid::uniform(prior.grid());
        Self {
            id,
            s: prior.clone(),
            w: prior,
            l: uniform.clone(),
            l_prev: uniform.clone(),
            u: uniform.clone(),
            t: uniform,
        }
    }

    /// Stores the likelihood of step `k`, shifting the current one to `l_prev`.
    pub fn set_likelihood(&mut self, l: DensityGrid) {
        self.l_prev = std::mem::replace(&mut self.l, l);
    }

    /// Consensus density of step `k` from neighbors' step `k−1` messages.
    /// `received` holds `(U_{k−1}^j, A_k[i,j])` for every `j` in the
    /// neighborhood, the agent itself included.
    pub fn fuse(&self, received: &[(&DensityGrid, f64)], k: usize) -> Result<DensityGrid> {
        if k <= 1 {
            return Ok(self.l.clone());
        }
        check_row(self.id, received.iter().map(|(_, w)| *w))?;
        let mut acc = vec![0.0; self.l.len()];
        for (u, w) in received {
            self.l.check_same_grid(u)?;
            if *w == 0.0 {
                continue;
            }
            for (a, v) in acc.iter_mut().zip(u.log_values()) {
                *a += w * v;
            }
        }
        let logs = self
            .l
            .log_values()
            .iter()
            .zip(self.l_prev.log_values())
            .zip(&acc)
            .map(|((cur, prev), a)| cur + (a - prev))
            .collect();
        normalize_log(self.l.grid(), logs)
    }
}

/// Per-step network diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct StepDiagnostics {
    pub k: usize,
    /// `D_L1(T_k^i, ℒ_k^C)` for every agent, against the noise-free joint likelihood.
    pub l1_to_joint: Vec<f64>,
    pub joint: DensityGrid,
}

impl StepDiagnostics {
    pub fn max_l1(&self) -> f64 {
        self.l1_to_joint.iter().copied().fold(0.0, f64::max)
    }
}

/// All agents of one consensus filter, advanced in lock step.
#[derive(Debug, Clone)]
pub struct DbfNetwork {
    agents: Vec<AgentState>,
    schedule: AdjacencySchedule,
    k: usize,
    noise: Option<(ChannelNoise, ChaCha8Rng)>,
}

impl DbfNetwork {
    pub fn new(priors: Vec<DensityGrid>, schedule: AdjacencySchedule) -> Result<Self> {
        if priors.is_empty() {
            return Err(DbfError::Empty("agent list"));
        }
        if schedule.agent_count() != priors.len() {
            return Err(DbfError::Dimension(format!(
                "schedule is for {} agents, got {} priors",
                schedule.agent_count(),
                priors.len()
            )));
        }
        for p in &priors[1..] {
            priors[0].check_same_grid(p)?;
        }
        let agents = priors
            .into_iter()
            .enumerate()
            .map(|(i, p)| AgentState::new(i, p))
            .collect();
        Ok(Self {
            agents,
            schedule,
            k: 0,
            noise: None,
        })
    }

    /// Same prior for every agent.
    pub fn with_common_prior(prior: DensityGrid, schedule: AdjacencySchedule) -> Result<Self> {
        let n = schedule.agent_count();
        Self::new(vec![prior; n], schedule)
    }

    pub fn with_noise(mut self, noise: ChannelNoise) -> Self {
        self.noise = Some((noise, ChaCha8Rng::seed_from_u64(noise.seed)));
        self
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    /// Number of completed steps.
    pub fn step_index(&self) -> usize {
        self.k
    }

    pub fn schedule(&self) -> &AdjacencySchedule {
        &self.schedule
    }

    /// Likelihood, fuse and power stages for step `k+1`; leaves priors and
    /// posteriors untouched.
    pub fn consensus_step(&mut self, likelihoods: &[DensityGrid]) -> Result<StepDiagnostics> {
        let a = self.schedule.at(self.k + 1).clone();
        self.consensus_step_with(likelihoods, &a)
    }

    /// [`consensus_step`](Self::consensus_step) with an explicit weight
    /// matrix for this step, for graphs that depend on the agents' state.
    pub fn consensus_step_with(
        &mut self,
        likelihoods: &[DensityGrid],
        a: &AdjacencyMatrix,
    ) -> Result<StepDiagnostics> {
        let n = self.agents.len();
        if a.size() != n {
            return Err(DbfError::Dimension(format!(
                "adjacency is {}x{} for {n} agents",
                a.size(),
                a.size()
            )));
        }
        if likelihoods.len() != n {
            return Err(DbfError::LengthMismatch {
                expected: n,
                actual: likelihoods.len(),
            });
        }
        let k = self.k + 1;
        let joint = joint_likelihood(likelihoods)?;

        for (agent, l) in self.agents.iter_mut().zip(likelihoods) {
            let observed = match &mut self.noise {
                Some((noise, rng)) => inject_channel_noise(l, noise.eps_l, rng)?,
                None => l.clone(),
            };
            agent.set_likelihood(observed);
        }

        let snapshot: Vec<DensityGrid> = self.agents.iter().map(|a| a.u.clone()).collect();
        let mut new_u = Vec::with_capacity(n);
        for agent in &self.agents {
            if k == 1 {
                new_u.push(agent.l.clone());
                continue;
            }
            let row = a.row(agent.id);
            let mut received = Vec::with_capacity(row.len());
            for &(j, w) in &row {
                let msg = match &mut self.noise {
                    Some((noise, rng)) if j != agent.id => {
                        inject_channel_noise(&snapshot[j], noise.eps_u, rng)?
                    }
                    _ => snapshot[j].clone(),
                };
                received.push((msg, w));
            }
            let refs: Vec<(&DensityGrid, f64)> = received.iter().map(|(d, w)| (d, *w)).collect();
            new_u.push(agent.fuse(&refs, k)?);
        }

        let mut l1 = Vec::with_capacity(n);
        for (agent, u) in self.agents.iter_mut().zip(new_u) {
            agent.t = power_estimate(&u, n)?;
            agent.u = u;
            l1.push(l1_distance(&agent.t, &joint)?);
        }
        self.k = k;
        Ok(StepDiagnostics {
            k,
            l1_to_joint: l1,
            joint,
        })
    }

    /// Full filter step: predict with `kernel`, fuse `likelihoods`, update.
    pub fn step(
        &mut self,
        likelihoods: &[DensityGrid],
        kernel: &TransitionKernel,
    ) -> Result<StepDiagnostics> {
        for agent in &mut self.agents {
            agent.s = predict(&agent.w, kernel)?;
        }
        let diag = self.consensus_step(likelihoods)?;
        for agent in &mut self.agents {
            agent.w = update(&agent.s, &agent.t)?;
        }
        Ok(diag)
    }
}

/// Grid Bayes filter fed with the joint likelihood of all sensors.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralizedBayesFilter {
    pub s: DensityGrid,
    pub w: DensityGrid,
}

impl CentralizedBayesFilter {
    pub fn new(prior: DensityGrid) -> Self {
        Self {
            s: prior.clone(),
            w: prior,
        }
    }

    pub fn step(&mut self, likelihoods: &[DensityGrid], kernel: &TransitionKernel) -> Result<()> {
        self.s = predict(&self.w, kernel)?;
        self.w = bayes_update(&self.s, &joint_likelihood(likelihoods)?)?;
        Ok(())
    }
}

/// Outcome of repeated consensus within one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiloopResult {
    /// Final joint-likelihood estimates per agent.
    pub t: Vec<DensityGrid>,
    /// `‖e_{k,ν}‖₂` for `ν = 1..=n_loop`.
    pub errors: Vec<f64>,
}

/// Runs `n_loop` LogOP consensus loops on fixed likelihoods.
pub fn multiloop_fuse(
    likelihoods: &[DensityGrid],
    a: &AdjacencyMatrix,
    n_loop: usize,
) -> Result<MultiloopResult> {
    if n_loop < 1 {
        return Err(DbfError::Domain("n_loop must be at least 1".into()));
    }
    let n = likelihoods.len();
    if a.size() != n {
        return Err(DbfError::Dimension(format!(
            "adjacency is {}x{} for {n} agents",
            a.size(),
            a.size()
        )));
    }
    let joint = joint_likelihood(likelihoods)?;
    let mut u = likelihoods.to_vec();
    let mut errors = Vec::with_capacity(n_loop);
    let mut t = Vec::new();
    for nu in 1..=n_loop {
        if nu >= 2 {
            let mut next = Vec::with_capacity(n);
            for i in 0..n {
                let row = a.row(i);
                check_row(i, row.iter().map(|(_, w)| *w))?;
                let sel: Vec<DensityGrid> = row.iter().map(|(j, _)| u[*j].clone()).collect();
                let w: Vec<f64> = row.iter().map(|(_, w)| *w).collect();
                next.push(normalize_log(u[0].grid(), weighted_log_sum(&sel, &w))?);
            }
            u = next;
        }
        t = u
            .iter()
            .map(|ui| power_estimate(ui, n))
            .collect::<Result<Vec<_>>>()?;
        let sq: f64 = t
            .iter()
            .map(|ti| l1_distance(ti, &joint).map(|d| d * d))
            .sum::<Result<f64>>()?;
        errors.push(sq.sqrt());
    }
    Ok(MultiloopResult { t, errors })
}
