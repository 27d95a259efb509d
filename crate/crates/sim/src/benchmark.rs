//! Target tracking with TOA/DOA sensors (particle filters on a fused
//! position grid) and with linear position sensors (information filters).

use std::sync::Arc;

use dbf_core::{
    normalized_likelihood, CentralizedInfoFilter, ChannelNoise, DbfNetwork, DensityGrid,
    DistributedInfoFilter, GaussianInfo, LinearSensor, SensorModel, StateGrid,
};
use nalgebra::{DMatrix, DVector, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::layout::{
    connected_proximity_graph, graph_from_edges, static_schedule, uniform_positions,
};
use crate::metrics::{tail_mean, AgentLabel, RunMetrics};
use crate::models::{
    cv_model, position_sensor, BearingConvention, CvSampler, DoaSensor, ToaSensor,
};
use crate::pf::ParticleFilter;
use crate::rng::sub_stream;
use crate::SimError;

/// Step of the master trajectory every run sub-samples.
pub const MASTER_DT: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorKind {
    Toa,
    Doa,
    Linear,
    None,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchmarkConfig {
    /// Filter time step Δ (s); a multiple of the 0.01 s master step.
    pub dt: f64,
    /// Simulated time (s).
    pub duration: f64,
    pub agents: usize,
    pub toa_sensors: usize,
    pub doa_sensors: usize,
    /// Range noise σ_r (m).
    pub sigma_r: f64,
    /// Bearing noise σ_θ (degrees).
    pub sigma_theta_deg: f64,
    /// Linear sensors use `R = linear_r · I`.
    pub linear_r: f64,
    pub particles: usize,
    /// Fusion grid points per axis.
    pub grid_points: usize,
    /// Agents and grid live in `[-h, h]²`.
    pub region_half_width: f64,
    /// Initial communication radius (m); grown until the graph is connected.
    pub comm_radius: f64,
    /// Explicit undirected edges; replaces the proximity graph.
    pub edges: Option<Vec<[usize; 2]>>,
    pub bearing_convention: BearingConvention,
    pub initial_state: [f64; 4],
    /// Prior standard deviations around the initial state.
    pub prior_std: [f64; 4],
    /// Consensus L1 bound reported against.
    pub delta: f64,
    pub eps_u: f64,
    pub eps_l: f64,
    /// Measurement, particle and channel noise.
    pub seed: u64,
    pub trajectory_seed: u64,
    pub layout_seed: u64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            duration: 20.0,
            agents: 50,
            toa_sensors: 5,
            doa_sensors: 5,
            sigma_r: 10.0,
            sigma_theta_deg: 2.0,
            linear_r: 15.0,
            particles: 10_000,
            grid_points: 64,
            region_half_width: 50.0,
            comm_radius: 40.0,
            edges: None,
            bearing_convention: BearingConvention::AsPrinted,
            initial_state: [-25.0, 2.0, -15.0, 1.5],
            prior_std: [5.0, 1.0, 5.0, 1.0],
            delta: 0.5,
            eps_u: 0.0,
            eps_l: 0.0,
            seed: 42,
            trajectory_seed: 7,
            layout_seed: 11,
        }
    }
}

fn invalid(field: &str, msg: impl std::fmt::Display) -> SimError {
    SimError::ConfigInvalid(format!("{field}: {msg}"))
}

impl BenchmarkConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid("dt", format!("must be positive, got {}", self.dt)));
        }
        let steps = self.dt / MASTER_DT;
        if (steps - steps.round()).abs() > 1e-6 {
            return Err(invalid("dt", format!("must be a multiple of {MASTER_DT}")));
        }
        if !(self.duration >= self.dt && self.duration.is_finite()) {
            return Err(invalid("duration", "must cover at least one step"));
        }
        if self.agents == 0 {
            return Err(invalid("agents", "must be at least 1"));
        }
        if self.toa_sensors + self.doa_sensors > self.agents {
            return Err(invalid(
                "toa_sensors",
                format!(
                    "{} TOA + {} DOA sensors exceed {} agents",
                    self.toa_sensors, self.doa_sensors, self.agents
                ),
            ));
        }
        for (name, v) in [
            ("sigma_r", self.sigma_r),
            ("sigma_theta_deg", self.sigma_theta_deg),
            ("linear_r", self.linear_r),
            ("region_half_width", self.region_half_width),
            ("comm_radius", self.comm_radius),
            ("delta", self.delta),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be positive, got {v}")));
            }
        }
        for (name, v) in [("eps_u", self.eps_u), ("eps_l", self.eps_l)] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(invalid(name, format!("must be nonnegative, got {v}")));
            }
        }
        if self.particles == 0 {
            return Err(invalid("particles", "must be at least 1"));
        }
        if self.grid_points < 2 {
            return Err(invalid("grid_points", "must be at least 2"));
        }
        if self.prior_std.iter().any(|s| !(*s > 0.0)) {
            return Err(invalid("prior_std", "entries must be positive"));
        }
        Ok(())
    }

    pub fn ticks(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    fn stride(&self) -> usize {
        (self.dt / MASTER_DT).round() as usize
    }

    /// Sensor per agent: TOA first, then DOA, then none. Linear sensors sit
    /// on the same agents as the TOA/DOA ones.
    pub fn assignment(&self, linear: bool) -> Vec<SensorKind> {
        (0..self.agents)
            .map(|i| {
                if i < self.toa_sensors + self.doa_sensors && linear {
                    SensorKind::Linear
                } else if i < self.toa_sensors {
                    SensorKind::Toa
                } else if i < self.toa_sensors + self.doa_sensors {
                    SensorKind::Doa
                } else {
                    SensorKind::None
                }
            })
            .collect()
    }
}

/// Master trajectory at [`MASTER_DT`] covering `duration`, drawn from the CV
/// model with `trajectory_seed`. Redrawn (up to 1000 times) until it stays
/// within 80% of the region.
pub fn master_trajectory(cfg: &BenchmarkConfig) -> Vec<Vector4<f64>> {
    let steps = (cfg.duration / MASTER_DT).round() as usize;
    let cv = CvSampler::new(MASTER_DT);
    let limit = 0.8 * cfg.region_half_width;
    let mut rng = sub_stream(cfg.trajectory_seed, "trajectory", 0);
    let mut best = Vec::new();
    for _ in 0..1000 {
        let mut x = Vector4::from(cfg.initial_state);
        let mut path = Vec::with_capacity(steps + 1);
        path.push(x);
        for _ in 0..steps {
            x = cv.step(&x, &mut rng);
            path.push(x);
        }
        let inside = path
            .iter()
            .all(|p| p[0].abs() <= limit && p[2].abs() <= limit);
        best = path;
        if inside {
            break;
        }
    }
    best
}

/// Agent positions, communication graph radius and schedule shared by both scenarios.
struct Network {
    positions: Vec<[f64; 2]>,
    radius: f64,
    schedule: dbf_core::AdjacencySchedule,
}

fn build_network(cfg: &BenchmarkConfig) -> Result<Network, SimError> {
    let mut rng = sub_stream(cfg.layout_seed, "layout", 0);
    let positions = uniform_positions(cfg.agents, 0.9 * cfg.region_half_width, &mut rng);
    let (graph, radius) = match &cfg.edges {
        Some(edges) => {
            let pairs: Vec<(usize, usize)> = edges.iter().map(|e| (e[0], e[1])).collect();
            (graph_from_edges(cfg.agents, &pairs)?, f64::NAN)
        }
        None => connected_proximity_graph(&positions, cfg.comm_radius),
    };
    Ok(Network {
        positions,
        radius,
        schedule: static_schedule(&graph)?,
    })
}

fn truth_at(master: &[Vector4<f64>], stride: usize, k: usize) -> Vector4<f64> {
    master[(k * stride).min(master.len() - 1)]
}

fn position_error(est: &[f64; 4], truth: &Vector4<f64>) -> f64 {
    (est[0] - truth[0]).powi(2) + (est[2] - truth[2]).powi(2)
}

/// Nonlinear sensors, particle filters weighted by the fused grid estimate.
pub fn run_benchmark_scenario1(cfg: &BenchmarkConfig) -> Result<RunMetrics, SimError> {
    cfg.validate()?;
    let n = cfg.agents;
    let net = build_network(cfg)?;
    let master = master_trajectory(cfg);
    let stride = cfg.stride();
    let ticks = cfg.ticks();
    let h = cfg.region_half_width;
    let grid: Arc<StateGrid> = StateGrid::square(-h, h, cfg.grid_points)?.into_shared();

    let sensors: Vec<Option<Box<dyn SensorModel>>> = cfg
        .assignment(false)
        .into_iter()
        .zip(&net.positions)
        .map(|(kind, &position)| -> Option<Box<dyn SensorModel>> {
            match kind {
                SensorKind::Toa => Some(Box::new(ToaSensor {
                    position,
                    sigma: cfg.sigma_r,
                })),
                SensorKind::Doa => Some(Box::new(DoaSensor {
                    position,
                    sigma: cfg.sigma_theta_deg.to_radians(),
                    convention: cfg.bearing_convention,
                })),
                _ => None,
            }
        })
        .collect();

    let mut network = DbfNetwork::with_common_prior(DensityGrid::uniform(&grid), net.schedule)?;
    if cfg.eps_u > 0.0 || cfg.eps_l > 0.0 {
        network = network.with_noise(ChannelNoise {
            eps_u: cfg.eps_u,
            eps_l: cfg.eps_l,
            seed: sub_stream(cfg.seed, "channel", 0).random(),
        });
    }
    let motion = CvSampler::new(cfg.dt);
    let mut meas_rng: Vec<_> = (0..n)
        .map(|i| sub_stream(cfg.seed, "measurement", i as u64))
        .collect();
    let mut filters = (0..n)
        .map(|i| {
            ParticleFilter::new(
                cfg.initial_state,
                cfg.prior_std,
                cfg.particles,
                sub_stream(cfg.seed, "particles", i as u64),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    // same particle stream as agent 0, so a single agent reproduces it exactly
    let mut central = ParticleFilter::new(
        cfg.initial_state,
        cfg.prior_std,
        cfg.particles,
        sub_stream(cfg.seed, "particles", 0),
    )?;

    let mut out = RunMetrics::default();
    let mut agent_err = vec![Vec::with_capacity(ticks); n];
    let mut central_err = Vec::with_capacity(ticks);
    let mut max_l1_steps = Vec::with_capacity(ticks);
    for k in 1..=ticks {
        let truth = truth_at(&master, stride, k);
        let pos = [truth[0], truth[2]];
        out.push(k, AgentLabel::Target, "x", truth[0]);
        out.push(k, AgentLabel::Target, "y", truth[2]);

        let mut likelihoods = Vec::with_capacity(n);
        for (s, rng) in sensors.iter().zip(&mut meas_rng) {
            let l = match s {
                Some(s) => {
                    let y = s.sample(&pos, rng);
                    normalized_likelihood(&grid, Some(s.as_ref()), Some(&y))?
                }
                None => DensityGrid::uniform(&grid),
            };
            likelihoods.push(l);
        }
        let diag = network.consensus_step(&likelihoods)?;

        for (i, pf) in filters.iter_mut().enumerate() {
            pf.predict(&motion);
            let est = pf.update(&network.agents()[i].t)?;
            let e = position_error(&est, &truth);
            agent_err[i].push(e);
            out.push(k, AgentLabel::Agent(i), "sq_error", e);
            out.push(k, AgentLabel::Agent(i), "l1_to_joint", diag.l1_to_joint[i]);
            out.push(k, AgentLabel::Agent(i), "est_x", est[0]);
            out.push(k, AgentLabel::Agent(i), "est_y", est[2]);
        }
        central.predict(&motion);
        let est = central.update(&diag.joint)?;
        let e = position_error(&est, &truth);
        central_err.push(e);
        out.push(k, AgentLabel::Central, "sq_error", e);
        out.push(k, AgentLabel::Central, "est_x", est[0]);
        out.push(k, AgentLabel::Central, "est_y", est[2]);
        max_l1_steps.push(diag.max_l1());
    }

    let from = steady_state_start(ticks);
    let dbf_mse = agent_err.iter().map(|e| tail_mean(e, from)).sum::<f64>() / n as f64;
    let central_mse = tail_mean(&central_err, from);
    let s = &mut out.summary;
    s.insert("ticks".into(), ticks as f64);
    s.insert("comm_radius".into(), net.radius);
    s.insert("steady_state_mse".into(), dbf_mse);
    s.insert("steady_state_rmse".into(), dbf_mse.sqrt());
    s.insert("steady_state_mse_central".into(), central_mse);
    s.insert("mse_gap".into(), (dbf_mse - central_mse).abs());
    s.insert(
        "max_l1".into(),
        max_l1_steps.iter().copied().fold(0.0, f64::max),
    );
    s.insert(
        "max_l1_steady_state".into(),
        max_l1_steps[from..].iter().copied().fold(0.0, f64::max),
    );
    s.insert("delta".into(), cfg.delta);
    let settled = first_settled(&max_l1_steps, cfg.delta).map_or(f64::NAN, |k| k as f64);
    s.insert("kappa_observed".into(), settled);
    Ok(out)
}

/// First tick from which every later diagnostic stays within `delta`.
fn first_settled(max_l1: &[f64], delta: f64) -> Option<usize> {
    let last_bad = max_l1.iter().rposition(|v| *v > delta);
    match last_bad {
        None => Some(1),
        Some(i) if i + 1 < max_l1.len() => Some(i + 2),
        Some(_) => None,
    }
}

/// Index of the first tick of the final quartile.
pub fn steady_state_start(ticks: usize) -> usize {
    ticks - (ticks / 4).max(1)
}

/// Linear position sensors with information filters and a centralized
/// Kalman baseline on the same measurements.
pub fn run_benchmark_scenario2(cfg: &BenchmarkConfig) -> Result<RunMetrics, SimError> {
    cfg.validate()?;
    let n = cfg.agents;
    let net = build_network(cfg)?;
    let master = master_trajectory(cfg);
    let stride = cfg.stride();
    let ticks = cfg.ticks();
    let model = cv_model(cfg.dt)?;
    let lin = position_sensor(cfg.linear_r)?;
    let sensors: Vec<Option<LinearSensor>> = cfg
        .assignment(true)
        .into_iter()
        .map(|k| (k == SensorKind::Linear).then(|| lin.clone()))
        .collect();
    let noise_std = cfg.linear_r.sqrt();

    let x0 = DVector::from_column_slice(&cfg.initial_state);
    let p0 = DMatrix::from_diagonal(&DVector::from_iterator(
        4,
        cfg.prior_std.iter().map(|s| s * s),
    ));
    let prior = GaussianInfo::from_moments(&x0, &p0)?;
    let mut dist = DistributedInfoFilter::new(prior.clone(), net.schedule);
    let mut central = CentralizedInfoFilter::new(prior);
    let mut meas_rng: Vec<_> = (0..n)
        .map(|i| sub_stream(cfg.seed, "measurement", i as u64))
        .collect();

    let mut out = RunMetrics::default();
    let mut agent_err = vec![Vec::with_capacity(ticks); n];
    let mut central_err = Vec::with_capacity(ticks);
    for k in 1..=ticks {
        let truth = truth_at(&master, stride, k);
        out.push(k, AgentLabel::Target, "x", truth[0]);
        out.push(k, AgentLabel::Target, "y", truth[2]);
        let ys: Vec<Option<DVector<f64>>> = sensors
            .iter()
            .zip(&mut meas_rng)
            .map(|(s, rng)| {
                s.as_ref().map(|_| {
                    let vx: f64 = rng.sample(StandardNormal);
                    let vy: f64 = rng.sample(StandardNormal);
                    DVector::from_column_slice(&[
                        truth[0] + noise_std * vx,
                        truth[2] + noise_std * vy,
                    ])
                })
            })
            .collect();
        let estimates = dist.step(&model, &sensors, &ys)?;
        for (i, est) in estimates.iter().enumerate() {
            let e = position_error(&[est.x[0], est.x[1], est.x[2], est.x[3]], &truth);
            agent_err[i].push(e);
            out.push(k, AgentLabel::Agent(i), "sq_error", e);
            out.push(k, AgentLabel::Agent(i), "est_x", est.x[0]);
            out.push(k, AgentLabel::Agent(i), "est_y", est.x[2]);
        }
        let est = central.step(&model, &sensors, &ys)?;
        let e = position_error(&[est.x[0], est.x[1], est.x[2], est.x[3]], &truth);
        central_err.push(e);
        out.push(k, AgentLabel::Central, "sq_error", e);
        out.push(k, AgentLabel::Central, "est_x", est.x[0]);
        out.push(k, AgentLabel::Central, "est_y", est.x[2]);
    }

    let from = steady_state_start(ticks);
    let dbf_mse = agent_err.iter().map(|e| tail_mean(e, from)).sum::<f64>() / n as f64;
    let central_mse = tail_mean(&central_err, from);
    let s = &mut out.summary;
    s.insert("ticks".into(), ticks as f64);
    s.insert("comm_radius".into(), net.radius);
    s.insert("steady_state_mse".into(), dbf_mse);
    s.insert("steady_state_rmse".into(), dbf_mse.sqrt());
    s.insert("steady_state_mse_central".into(), central_mse);
    s.insert("mse_gap".into(), (dbf_mse - central_mse).abs());
    Ok(out)
}
