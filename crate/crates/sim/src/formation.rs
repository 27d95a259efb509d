//! Range-only relative localization driving agents into a regular polygon.
//!
//! Every agent runs one consensus filter per agent of the team. Instance `j`
//! estimates agent `j`'s position: agent `j` contributes a tight Gaussian
//! around the position it keeps by dead reckoning, agents ranging to `j`
//! contribute rings centered on themselves, all others are uninformative.

use std::f64::consts::PI;
use std::sync::Arc;

use dbf_core::topology::local_degree_matrix;
use dbf_core::{
    normalized_likelihood, AdjacencyMatrix, AdjacencySchedule, DbfNetwork, DensityGrid, Digraph,
    ParticleSet, StateGrid,
};
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::metrics::{AgentLabel, RunMetrics};
use crate::models::ToaSensor;
use crate::rng::sub_stream;
use crate::SimError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FormationConfig {
    pub n: usize,
    /// APF gain.
    pub a: f64,
    /// Desired neighbor spacing (m).
    pub d: f64,
    pub dt: f64,
    pub ticks: usize,
    /// Particles per filter instance.
    pub particles: usize,
    /// State space is `[-h, h]²`; `None` means `h = n`.
    pub half_width: Option<f64>,
    pub grid_points: usize,
    /// Range noise of the neighbor TOA sensors (m).
    pub sigma_r: f64,
    /// Spread of an agent's likelihood for its own position (m).
    pub sigma_self: f64,
    /// Per-step position noise floor added in prediction (m).
    pub process_floor: f64,
    /// Speed limit applied to the APF command (m/s).
    pub max_speed: f64,
    /// Mix the local-degree weights half-and-half with the identity.
    pub lazy_weights: bool,
    /// Initial positions are uniform in `[-s, s]²` with `s = init_spread · n / 2`.
    pub init_spread: f64,
    pub seed: u64,
}

impl Default for FormationConfig {
    fn default() -> Self {
        Self {
            n: 4,
            a: 0.1,
            d: 1.0,
            dt: 0.1,
            ticks: 1500,
            particles: 1000,
            half_width: None,
            grid_points: 64,
            sigma_r: 0.1,
            sigma_self: 0.05,
            process_floor: 0.02,
            max_speed: 0.5,
            lazy_weights: true,
            init_spread: 1.0,
            seed: 42,
        }
    }
}

impl FormationConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |field: &str, msg: &str| Err(SimError::ConfigInvalid(format!("{field}: {msg}")));
        if self.n < 3 {
            return bad("n", "needs at least 3 agents");
        }
        for (name, v) in [
            ("a", self.a),
            ("d", self.d),
            ("dt", self.dt),
            ("sigma_r", self.sigma_r),
            ("sigma_self", self.sigma_self),
            ("max_speed", self.max_speed),
            ("init_spread", self.init_spread),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(name, "must be positive");
            }
        }
        if !(self.process_floor >= 0.0) {
            return bad("process_floor", "must be nonnegative");
        }
        if self.particles == 0 {
            return bad("particles", "must be at least 1");
        }
        if self.ticks == 0 {
            return bad("ticks", "must be at least 1");
        }
        if self.grid_points < 2 {
            return bad("grid_points", "must be at least 2");
        }
        if let Some(h) = self.half_width {
            if !(h > 0.0 && h.is_finite()) {
                return bad("half_width", "must be positive");
            }
        }
        Ok(())
    }

    pub fn half(&self) -> f64 {
        self.half_width.unwrap_or(self.n as f64)
    }

    /// Distance from the center of mass to each vertex of the target polygon.
    pub fn d_cm(&self) -> f64 {
        center_distance(self.d, self.n)
    }
}

/// `d / (2 cos(π/2 − π/N))`.
pub fn center_distance(d: f64, n: usize) -> f64 {
    d / (2.0 * (PI / 2.0 - PI / n as f64).cos())
}

/// `(x_j − x_i)/r · (a r − a d²/r)`; zero when the points coincide.
pub fn apf(xj: [f64; 2], xi: [f64; 2], d: f64, a: f64) -> [f64; 2] {
    let dx = xj[0] - xi[0];
    let dy = xj[1] - xi[1];
    let r = dx.hypot(dy);
    if r == 0.0 {
        return [0.0, 0.0];
    }
    let g = (a * r - a * d * d / r) / r;
    [g * dx, g * dy]
}

fn dist(p: [f64; 2], q: [f64; 2]) -> f64 {
    (p[0] - q[0]).hypot(p[1] - q[1])
}

/// Indices of the two points nearest to `points[i]` (ties by index).
pub fn nearest_two(points: &[[f64; 2]], i: usize) -> [usize; 2] {
    let mut others: Vec<usize> = (0..points.len()).filter(|&j| j != i).collect();
    others.sort_by(|&a, &b| {
        dist(points[i], points[a])
            .total_cmp(&dist(points[i], points[b]))
            .then(a.cmp(&b))
    });
    [others[0], others[1]]
}

/// APF command for agent `i` from a full set of position estimates.
pub fn control(est: &[[f64; 2]], i: usize, cfg: &FormationConfig) -> [f64; 2] {
    let n = est.len() as f64;
    let cm = [
        est.iter().map(|p| p[0]).sum::<f64>() / n,
        est.iter().map(|p| p[1]).sum::<f64>() / n,
    ];
    let mut u = apf(cm, est[i], cfg.d_cm(), cfg.a);
    for j in nearest_two(est, i) {
        let f = apf(est[j], est[i], cfg.d, cfg.a);
        u[0] += f[0];
        u[1] += f[1];
    }
    let speed = u[0].hypot(u[1]);
    if speed > cfg.max_speed {
        u[0] *= cfg.max_speed / speed;
        u[1] *= cfg.max_speed / speed;
    }
    u
}

/// Worst relative deviation of nearest-two distances from `d` and of
/// center distances from `d_CM`.
pub fn polygon_quality(points: &[[f64; 2]], d: f64) -> (f64, f64) {
    let n = points.len();
    let d_cm = center_distance(d, n);
    let cm = [
        points.iter().map(|p| p[0]).sum::<f64>() / n as f64,
        points.iter().map(|p| p[1]).sum::<f64>() / n as f64,
    ];
    let mut neighbor = 0.0f64;
    let mut center = 0.0f64;
    for i in 0..n {
        for j in nearest_two(points, i) {
            neighbor = neighbor.max((dist(points[i], points[j]) - d).abs() / d);
        }
        center = center.max((dist(points[i], cm) - d_cm).abs() / d_cm);
    }
    (neighbor, center)
}

/// Communication graph: `i ~ j` when either is among the other's two nearest.
pub fn proximity_pairs(points: &[[f64; 2]]) -> Digraph {
    let pairs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|i| nearest_two(points, i).map(|j| (i, j)))
        .collect();
    Digraph::undirected(points.len(), pairs).expect("indices in range")
}

/// Local-degree weights on [`proximity_pairs`], optionally lazy.
pub fn consensus_weights(points: &[[f64; 2]], lazy: bool) -> dbf_core::Result<AdjacencyMatrix> {
    let a = local_degree_matrix(&proximity_pairs(points))?;
    if !lazy {
        return Ok(a);
    }
    let n = points.len();
    let m = (a.matrix() + DMatrix::identity(n, n)) * 0.5;
    AdjacencyMatrix::new(m)
}

fn clamp(p: [f64; 2], h: f64) -> [f64; 2] {
    [p[0].clamp(-h, h), p[1].clamp(-h, h)]
}

/// Final positions and metrics of a formation episode.
#[derive(Debug, Clone, PartialEq)]
pub struct FormationResult {
    pub metrics: RunMetrics,
    pub final_positions: Vec<[f64; 2]>,
}

/// Position particles for one (agent, instance) pair.
struct Tracker {
    set: ParticleSet,
    rng: ChaCha8Rng,
    log_w: Vec<f64>,
}

impl Tracker {
    fn uniform(count: usize, h: f64, mut rng: ChaCha8Rng) -> dbf_core::Result<Self> {
        let states = (0..2 * count).map(|_| rng.random_range(-h..h)).collect();
        Ok(Self {
            set: ParticleSet::equally_weighted(2, states)?,
            rng,
            log_w: vec![0.0; count],
        })
    }

    fn predict(&mut self, shift: [f64; 2], floor: f64, h: f64) {
        let rng = &mut self.rng;
        for s in self.set.states_mut().chunks_exact_mut(2) {
            for (x, du) in s.iter_mut().zip(shift) {
                let z: f64 = StandardNormal.sample(&mut *rng);
                *x = (*x + du + floor * z).clamp(-h, h);
            }
        }
    }

    fn update(&mut self, t: &DensityGrid) -> dbf_core::Result<[f64; 2]> {
        for (lw, s) in self.log_w.iter_mut().zip(self.set.states().chunks_exact(2)) {
            *lw = t.log_interpolate(s);
        }
        self.set.set_log_weights(&self.log_w)?;
        let m = self.set.mean();
        self.set = self.set.resample_with(self.set.len(), &mut self.rng)?;
        Ok([m[0], m[1]])
    }
}

fn initial_positions(cfg: &FormationConfig) -> Vec<[f64; 2]> {
    let mut rng = sub_stream(cfg.seed, "formation-init", 0);
    let s = cfg.init_spread * cfg.n as f64 / 2.0;
    let min_sep = 0.5 * cfg.d;
    let mut pts: Vec<[f64; 2]> = Vec::with_capacity(cfg.n);
    while pts.len() < cfg.n {
        let p = [rng.random_range(-s..s), rng.random_range(-s..s)];
        if pts.iter().all(|q| dist(*q, p) >= min_sep) {
            pts.push(p);
        }
    }
    pts
}

pub fn run_formation(cfg: &FormationConfig) -> Result<FormationResult, SimError> {
    cfg.validate()?;
    let n = cfg.n;
    let h = cfg.half();
    let grid: Arc<StateGrid> = StateGrid::square(-h, h, cfg.grid_points)?.into_shared();
    let mut pos = initial_positions(cfg);
    for p in &pos {
        if p[0].abs() > h || p[1].abs() > h {
            return Err(SimError::ConfigInvalid(
                "init_spread: initial positions leave the state space".into(),
            ));
        }
    }

    // instance j, one network of n agents each
    let mut nets = (0..n)
        .map(|_| DbfNetwork::with_common_prior(DensityGrid::uniform(&grid), identity_schedule(n)))
        .collect::<dbf_core::Result<Vec<_>>>()?;
    // trackers[i][j]: agent i's particles for agent j
    let mut trackers = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    Tracker::uniform(
                        cfg.particles,
                        h,
                        sub_stream(cfg.seed, "formation-particles", (i * n + j) as u64),
                    )
                })
                .collect::<dbf_core::Result<Vec<_>>>()
        })
        .collect::<dbf_core::Result<Vec<_>>>()?;
    let mut meas_rng: Vec<_> = (0..n)
        .map(|i| sub_stream(cfg.seed, "measurement", i as u64))
        .collect();
    let mut est = vec![vec![[0.0; 2]; n]; n];
    let mut out = RunMetrics::default();

    for k in 1..=cfg.ticks {
        let neighbors: Vec<[usize; 2]> = (0..n).map(|i| nearest_two(&pos, i)).collect();
        let a = consensus_weights(&pos, cfg.lazy_weights)?;
        let ranges: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|i| {
                neighbors[i]
                    .iter()
                    .map(|&j| {
                        let z: f64 = StandardNormal.sample(&mut meas_rng[i]);
                        (j, dist(pos[i], pos[j]) + cfg.sigma_r * z)
                    })
                    .collect()
            })
            .collect();

        for (j, net) in nets.iter_mut().enumerate() {
            let mut likelihoods = Vec::with_capacity(n);
            for i in 0..n {
                let l = if i == j {
                    DensityGrid::gaussian(&grid, &pos[i], &[cfg.sigma_self, cfg.sigma_self])?
                } else if let Some(&(_, r)) = ranges[i].iter().find(|(m, _)| *m == j) {
                    let ring = ToaSensor {
                        position: pos[i],
                        sigma: cfg.sigma_r,
                    };
                    normalized_likelihood(&grid, Some(&ring), Some(&[r]))?
                } else {
                    DensityGrid::uniform(&grid)
                };
                likelihoods.push(l);
            }
            let diag = net.consensus_step_with(&likelihoods, &a)?;
            if j == 0 {
                out.push(k, AgentLabel::Network, "max_l1_instance0", diag.max_l1());
            }
        }

        for i in 0..n {
            for j in 0..n {
                est[i][j] = trackers[i][j].update(&nets[j].agents()[i].t)?;
            }
        }

        let controls: Vec<[f64; 2]> = (0..n).map(|i| control(&est[i], i, cfg)).collect();
        for (i, row) in trackers.iter_mut().enumerate() {
            for (j, tracker) in row.iter_mut().enumerate() {
                // agent i knows its own command and predicts the others' from its estimates
                let u = if i == j {
                    controls[i]
                } else {
                    control(&est[i], j, cfg)
                };
                tracker.predict([cfg.dt * u[0], cfg.dt * u[1]], cfg.process_floor, h);
            }
        }
        for i in 0..n {
            pos[i] = clamp(
                [
                    pos[i][0] + cfg.dt * controls[i][0],
                    pos[i][1] + cfg.dt * controls[i][1],
                ],
                h,
            );
        }

        let (nd, cd) = polygon_quality(&pos, cfg.d);
        out.push(k, AgentLabel::Network, "neighbor_deviation", nd);
        out.push(k, AgentLabel::Network, "center_deviation", cd);
        let mut worst = 0.0f64;
        for i in 0..n {
            out.push(k, AgentLabel::Agent(i), "x", pos[i][0]);
            out.push(k, AgentLabel::Agent(i), "y", pos[i][1]);
            for j in 0..n {
                worst = worst.max(dist(est[i][j], pos[j]));
            }
        }
        out.push(k, AgentLabel::Network, "max_estimate_error", worst);
    }

    let (nd, cd) = polygon_quality(&pos, cfg.d);
    let s = &mut out.summary;
    s.insert("neighbor_deviation".into(), nd);
    s.insert("center_deviation".into(), cd);
    s.insert("d_cm".into(), cfg.d_cm());
    s.insert("ticks".into(), cfg.ticks as f64);
    for (i, p) in pos.iter().enumerate() {
        s.insert(format!("final_x_{i}"), p[0]);
        s.insert(format!("final_y_{i}"), p[1]);
    }
    Ok(FormationResult {
        metrics: out,
        final_positions: pos,
    })
}

fn identity_schedule(n: usize) -> AdjacencySchedule {
    AdjacencySchedule::constant(AdjacencyMatrix::identity(n))
}
