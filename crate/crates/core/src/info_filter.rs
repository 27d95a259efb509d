//! Linear-Gaussian form of the consensus filter: a distributed Kalman
//! information filter with dynamic average consensus on the measurement
//! information pairs.

use nalgebra::{DMatrix, DVector};

use crate::error::{DbfError, Result};
use crate::topology::AdjacencySchedule;

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().cholesky().map(|c| c.inverse())
}

/// `x_{k+1} = F x_k + w_k`, `w_k ~ N(0, Q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearModel {
    f: DMatrix<f64>,
    q: DMatrix<f64>,
    f_inv: DMatrix<f64>,
    /// `None` when `Q = 0`.
    q_inv: Option<DMatrix<f64>>,
}

impl LinearModel {
    pub fn new(f: DMatrix<f64>, q: DMatrix<f64>) -> Result<Self> {
        let n = f.nrows();
        if f.ncols() != n || q.shape() != (n, n) {
            return Err(DbfError::Dimension(format!(
                "F is {}x{}, Q is {}x{}",
                f.nrows(),
                f.ncols(),
                q.nrows(),
                q.ncols()
            )));
        }
        let f_inv = f.clone().try_inverse().ok_or(DbfError::SingularF)?;
        let q_inv = if q.iter().all(|v| *v == 0.0) {
            None
        } else {
            Some(spd_inverse(&q).ok_or_else(|| {
                DbfError::Dimension("Q must be symmetric positive definite or zero".into())
            })?)
        };
        Ok(Self { f, q, f_inv, q_inv })
    }

    pub fn dim(&self) -> usize {
        self.f.nrows()
    }

    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn q(&self) -> &DMatrix<f64> {
        &self.q
    }

    /// Condition number of `F` in the spectral norm.
    pub fn f_condition(&self) -> f64 {
        let sv = self.f.clone().svd(false, false).singular_values;
        sv.max() / sv.min()
    }
}

/// `y = H x + v`, `v ~ N(0, R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearSensor {
    h: DMatrix<f64>,
    r_inv: DMatrix<f64>,
    r: DMatrix<f64>,
}

impl LinearSensor {
    pub fn new(h: DMatrix<f64>, r: DMatrix<f64>) -> Result<Self> {
        if r.shape() != (h.nrows(), h.nrows()) {
            return Err(DbfError::Dimension(format!(
                "H has {} rows but R is {}x{}",
                h.nrows(),
                r.nrows(),
                r.ncols()
            )));
        }
        let r_inv = spd_inverse(&r).ok_or(DbfError::SingularR)?;
        Ok(Self { h, r_inv, r })
    }

    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn r(&self) -> &DMatrix<f64> {
        &self.r
    }
}

/// Information-form Gaussian: vector `z = P⁻¹x` and matrix `Z = P⁻¹`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianInfo {
    pub z: DVector<f64>,
    pub zm: DMatrix<f64>,
}

impl GaussianInfo {
    pub fn from_moments(x: &DVector<f64>, p: &DMatrix<f64>) -> Result<Self> {
        let zm = symmetrize(spd_inverse(p).ok_or(DbfError::SingularPosterior)?);
        Ok(Self { z: &zm * x, zm })
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            z: DVector::zeros(dim),
            zm: DMatrix::zeros(dim, dim),
        }
    }

    /// Mean and covariance; fails when `Z` is singular.
    pub fn moments(&self) -> Result<(DVector<f64>, DMatrix<f64>)> {
        let p = self
            .zm
            .clone()
            .try_inverse()
            .ok_or(DbfError::SingularPosterior)?;
        let p = symmetrize(p);
        Ok((&p * &self.z, p))
    }
}

/// Prediction in information form. `I − M(M+Q⁻¹)⁻¹` is applied as
/// `Q⁻¹(M+Q⁻¹)⁻¹`, which avoids cancellation when `M` is large.
pub fn info_predict(s: &GaussianInfo, m: &LinearModel) -> Result<GaussianInfo> {
    let f_inv_t = m.f_inv.transpose();
    let mm = symmetrize(&f_inv_t * &s.zm * &m.f_inv);
    let zf = f_inv_t * &s.z;
    match &m.q_inv {
        None => Ok(GaussianInfo { z: zf, zm: mm }),
        Some(q_inv) => {
            let sum = (&mm + q_inv).lu();
            let zm = q_inv * sum.solve(&mm).ok_or(DbfError::SingularSum)?;
            let z = q_inv * sum.solve(&zf).ok_or(DbfError::SingularSum)?;
            Ok(GaussianInfo {
                z,
                zm: symmetrize(zm),
            })
        }
    }
}

/// `(Hᵀ R⁻¹ y, Hᵀ R⁻¹ H)`; zero pair for agents without a measurement.
pub fn info_measurement(
    y: Option<&DVector<f64>>,
    sensor: Option<&LinearSensor>,
    dim: usize,
) -> Result<GaussianInfo> {
    match (y, sensor) {
        (Some(y), Some(s)) => {
            if y.len() != s.h.nrows() || s.h.ncols() != dim {
                return Err(DbfError::Dimension(format!(
                    "measurement of length {} for H {}x{} and state dim {dim}",
                    y.len(),
                    s.h.nrows(),
                    s.h.ncols()
                )));
            }
            let ht_rinv = s.h.transpose() * &s.r_inv;
            Ok(GaussianInfo {
                z: &ht_rinv * y,
                zm: symmetrize(&ht_rinv * &s.h),
            })
        }
        _ => Ok(GaussianInfo::zeros(dim)),
    }
}

/// Posterior information and moments from the prediction and fused pair `(t, T)`.
pub fn info_update(
    pred: &GaussianInfo,
    fused: &GaussianInfo,
) -> Result<(GaussianInfo, DVector<f64>, DMatrix<f64>)> {
    let post = GaussianInfo {
        z: &pred.z + &fused.z,
        zm: symmetrize(&pred.zm + &fused.zm),
    };
    let (x, p) = post.moments()?;
    Ok((post, x, p))
}

/// Memory of one information-filter agent.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoState {
    /// Posterior information pair.
    pub post: GaussianInfo,
    /// Measurement information at the current and previous step.
    pub meas: GaussianInfo,
    pub meas_prev: GaussianInfo,
    /// Consensus pair `(u, U)`.
    pub consensus: GaussianInfo,
    /// Scaled pair `(t, T) = N (u, U)`.
    pub scaled: GaussianInfo,
}

impl InfoState {
    pub fn new(prior: GaussianInfo) -> Self {
        let dim = prior.z.len();
        Self {
            post: prior,
            meas: GaussianInfo::zeros(dim),
            meas_prev: GaussianInfo::zeros(dim),
            consensus: GaussianInfo::zeros(dim),
            scaled: GaussianInfo::zeros(dim),
        }
    }
}

/// Linear dynamic average consensus on `(i, I)`: `u = i_k + (Σ A u_j − i_{k−1})`.
pub fn info_fuse(
    row: usize,
    state: &InfoState,
    received: &[(&GaussianInfo, f64)],
    k: usize,
) -> Result<GaussianInfo> {
    if k <= 1 {
        return Ok(state.meas.clone());
    }
    let sum: f64 = received.iter().map(|(_, w)| w).sum();
    if received.iter().any(|(_, w)| !w.is_finite() || *w < 0.0) || (sum - 1.0).abs() > 1e-12 {
        return Err(DbfError::WeightRowInvalid {
            row,
            reason: format!("weights sum to {sum} or contain negatives"),
        });
    }
    let dim = state.meas.z.len();
    let mut acc = GaussianInfo::zeros(dim);
    for (u, w) in received {
        acc.z += &u.z * *w;
        acc.zm += &u.zm * *w;
    }
    Ok(GaussianInfo {
        z: &state.meas.z + (acc.z - &state.meas_prev.z),
        zm: symmetrize(&state.meas.zm + (acc.zm - &state.meas_prev.zm)),
    })
}

/// Per-agent output of one information-filter step.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoEstimate {
    pub x: DVector<f64>,
    pub p: DMatrix<f64>,
}

/// All agents of the distributed information filter.
#[derive(Debug, Clone)]
pub struct DistributedInfoFilter {
    agents: Vec<InfoState>,
    schedule: AdjacencySchedule,
    k: usize,
}

impl DistributedInfoFilter {
    pub fn new(prior: GaussianInfo, schedule: AdjacencySchedule) -> Self {
        let n = schedule.agent_count();
        Self {
            agents: vec![InfoState::new(prior); n],
            schedule,
            k: 0,
        }
    }

    pub fn agents(&self) -> &[InfoState] {
        &self.agents
    }

    /// Predict, measure, fuse and update every agent once.
    pub fn step(
        &mut self,
        model: &LinearModel,
        sensors: &[Option<LinearSensor>],
        measurements: &[Option<DVector<f64>>],
    ) -> Result<Vec<InfoEstimate>> {
        let n = self.agents.len();
        if sensors.len() != n || measurements.len() != n {
            return Err(DbfError::LengthMismatch {
                expected: n,
                actual: sensors.len().min(measurements.len()),
            });
        }
        let k = self.k + 1;
        let dim = model.dim();
        for ((agent, s), y) in self.agents.iter_mut().zip(sensors).zip(measurements) {
            let meas = info_measurement(y.as_ref(), s.as_ref(), dim)?;
            agent.meas_prev = std::mem::replace(&mut agent.meas, meas);
        }
        let snapshot: Vec<GaussianInfo> = self.agents.iter().map(|a| a.consensus.clone()).collect();
        let a = self.schedule.at(k);
        let mut fused = Vec::with_capacity(n);
        for (i, agent) in self.agents.iter().enumerate() {
            let row = a.row(i);
            let received: Vec<(&GaussianInfo, f64)> =
                row.iter().map(|&(j, w)| (&snapshot[j], w)).collect();
            fused.push(info_fuse(i, agent, &received, k)?);
        }
        let scale = n as f64;
        let mut out = Vec::with_capacity(n);
        for (agent, u) in self.agents.iter_mut().zip(fused) {
            agent.scaled = GaussianInfo {
                z: &u.z * scale,
                zm: &u.zm * scale,
            };
            agent.consensus = u;
            let pred = info_predict(&agent.post, model)?;
            let (post, x, p) = info_update(&pred, &agent.scaled)?;
            agent.post = post;
            out.push(InfoEstimate { x, p });
        }
        self.k = k;
        Ok(out)
    }
}

/// Multi-sensor information filter with access to every measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct CentralizedInfoFilter {
    pub post: GaussianInfo,
}

impl CentralizedInfoFilter {
    pub fn new(prior: GaussianInfo) -> Self {
        Self { post: prior }
    }

    pub fn step(
        &mut self,
        model: &LinearModel,
        sensors: &[Option<LinearSensor>],
        measurements: &[Option<DVector<f64>>],
    ) -> Result<InfoEstimate> {
        let dim = model.dim();
        let mut total = GaussianInfo::zeros(dim);
        for (s, y) in sensors.iter().zip(measurements) {
            let m = info_measurement(y.as_ref(), s.as_ref(), dim)?;
            total.z += m.z;
            total.zm += m.zm;
        }
        let pred = info_predict(&self.post, model)?;
        let (post, x, p) = info_update(&pred, &total)?;
        self.post = post;
        Ok(InfoEstimate { x, p })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::topology::{local_degree_weights, AdjacencyMatrix, Digraph};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_spd(dim: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        let a = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
        &a * a.transpose() + DMatrix::identity(dim, dim) * 0.5
    }

    fn random_invertible(dim: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
        DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0))
            + DMatrix::identity(dim, dim) * 2.0
    }

    #[test]
    fn scalar_predict() {
        let m = LinearModel::new(DMatrix::from_element(1, 1, 1.0), DMatrix::from_element(1, 1, 1.0)).unwrap();
        let prior = GaussianInfo::from_moments(&DVector::from_element(1, 0.0), &DMatrix::from_element(1, 1, 1.0)).unwrap();
        let pred = info_predict(&prior, &m).unwrap();
        assert_abs_diff_eq!(pred.zm[(0, 0)], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn noiseless_identity_keeps_information() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_spd(3, &mut rng);
        let s = GaussianInfo::from_moments(&DVector::from_vec(vec![1.0, 2.0, 3.0]), &p).unwrap();
        let zero = LinearModel::new(DMatrix::identity(3, 3), DMatrix::zeros(3, 3)).unwrap();
        let pred = info_predict(&s, &zero).unwrap();
        assert!((&pred.zm - &s.zm).abs().max() < 1e-12);
        let tiny = LinearModel::new(DMatrix::identity(3, 3), DMatrix::identity(3, 3) * 1e-10).unwrap();
        let pred = info_predict(&s, &tiny).unwrap();
        assert!((&pred.zm - &s.zm).abs().max() < 1e-6);
    }

    #[test]
    fn predict_matches_covariance_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..50 {
            let dim = rng.random_range(1..6);
            let p = random_spd(dim, &mut rng);
            let x = DVector::from_fn(dim, |_, _| rng.random_range(-5.0..5.0));
            let f = random_invertible(dim, &mut rng);
            let q = random_spd(dim, &mut rng);
            let m = LinearModel::new(f.clone(), q.clone()).unwrap();
            let pred = info_predict(&GaussianInfo::from_moments(&x, &p).unwrap(), &m).unwrap();
            let (xp, pp) = pred.moments().unwrap();
            let p_oracle = &f * &p * f.transpose() + &q;
            let x_oracle = &f * &x;
            assert!((&pp - &p_oracle).abs().max() < 1e-8 * p_oracle.abs().max().max(1.0));
            assert!((&xp - &x_oracle).abs().max() < 1e-8 * x_oracle.abs().max().max(1.0));
        }
    }

    #[test]
    fn measurement_examples() {
        let y = DVector::from_vec(vec![1.0, -2.0]);
        let s = LinearSensor::new(DMatrix::identity(2, 2), DMatrix::identity(2, 2)).unwrap();
        let m = info_measurement(Some(&y), Some(&s), 2).unwrap();
        assert_eq!(m.z, y);
        assert_eq!(m.zm, DMatrix::identity(2, 2));
        let none = info_measurement(None, None, 4).unwrap();
        assert_eq!(none, GaussianInfo::zeros(4));
        let h = DMatrix::from_row_slice(2, 4, &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        let pos = LinearSensor::new(h, DMatrix::identity(2, 2) * 15.0).unwrap();
        let m = info_measurement(Some(&y), Some(&pos), 4).unwrap();
        assert_eq!(m.zm.rank(1e-12), 2);
        assert_abs_diff_eq!(m.zm[(0, 0)], 1.0 / 15.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.zm[(2, 2)], 1.0 / 15.0, epsilon = 1e-15);
        assert_eq!(m.zm[(1, 1)], 0.0);
        assert_eq!(
            LinearSensor::new(DMatrix::identity(2, 2), DMatrix::zeros(2, 2)),
            Err(DbfError::SingularR)
        );
        assert_eq!(
            LinearModel::new(DMatrix::zeros(2, 2), DMatrix::identity(2, 2)),
            Err(DbfError::SingularF)
        );
    }

    #[test]
    fn update_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_spd(3, &mut rng);
        let x = DVector::from_vec(vec![0.5, -1.0, 2.0]);
        let prior = GaussianInfo::from_moments(&x, &p).unwrap();
        let (_, xu, pu) = info_update(&prior, &GaussianInfo::zeros(3)).unwrap();
        assert!((xu - &x).abs().max() < 1e-12);
        assert!((pu - &p).abs().max() < 1e-12);

        // textbook Kalman update on a random instance
        let h = DMatrix::from_fn(2, 3, |_, _| rng.random_range(-1.0..1.0));
        let r = random_spd(2, &mut rng);
        let y = DVector::from_vec(vec![0.3, 1.1]);
        let s = LinearSensor::new(h.clone(), r.clone()).unwrap();
        let meas = info_measurement(Some(&y), Some(&s), 3).unwrap();
        let (_, xk, pk) = info_update(&prior, &meas).unwrap();
        let sk = &h * &p * h.transpose() + &r;
        let gain = &p * h.transpose() * sk.try_inverse().unwrap();
        let x_oracle = &x + &gain * (&y - &h * &x);
        let p_oracle = (DMatrix::identity(3, 3) - &gain * &h) * &p;
        assert!((xk - x_oracle).abs().max() < 1e-9);
        assert!((pk - p_oracle).abs().max() < 1e-9);

        let flat = GaussianInfo::zeros(3);
        assert_eq!(info_update(&flat, &flat).unwrap_err(), DbfError::SingularPosterior);
    }

    fn cv_model() -> LinearModel {
        let dt: f64 = 0.1;
        let f = DMatrix::from_row_slice(2, 2, &[1.0, dt, 0.0, 1.0]);
        let q = DMatrix::from_row_slice(2, 2, &[dt.powi(3) / 3.0, dt * dt / 2.0, dt * dt / 2.0, dt]);
        LinearModel::new(f, q).unwrap()
    }

    #[test]
    fn single_agent_equals_centralized() {
        let m = cv_model();
        let prior = GaussianInfo::from_moments(&DVector::zeros(2), &(DMatrix::identity(2, 2) * 10.0)).unwrap();
        let sensors = vec![Some(LinearSensor::new(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), DMatrix::from_element(1, 1, 2.0)).unwrap())];
        let mut dist = DistributedInfoFilter::new(prior.clone(), AdjacencySchedule::constant(AdjacencyMatrix::identity(1)));
        let mut central = CentralizedInfoFilter::new(prior);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..40 {
            let y = vec![Some(DVector::from_element(1, rng.random_range(-3.0..3.0)))];
            let d = dist.step(&m, &sensors, &y).unwrap();
            let c = central.step(&m, &sensors, &y).unwrap();
            assert_eq!(d[0], c);
            assert_eq!(dist.agents()[0].scaled, dist.agents()[0].meas);
        }
    }

    #[test]
    fn complete_graph_matches_centralized_from_second_tick() {
        let m = cv_model();
        let n = 3;
        let prior = GaussianInfo::from_moments(&DVector::zeros(2), &(DMatrix::identity(2, 2) * 10.0)).unwrap();
        let sensors: Vec<_> = (0..n)
            .map(|i| {
                Some(LinearSensor::new(DMatrix::from_row_slice(1, 2, &[1.0, i as f64 * 0.1]), DMatrix::from_element(1, 1, 1.0 + i as f64)).unwrap())
            })
            .collect();
        let ys: Vec<_> = (0..n).map(|i| Some(DVector::from_element(1, i as f64 - 0.5))).collect();
        let mut dist = DistributedInfoFilter::new(prior, AdjacencySchedule::constant(AdjacencyMatrix::averaging(n)));
        // the first tick only has local information; restart one centralized
        // filter per agent from its tick-1 posterior
        dist.step(&m, &sensors, &ys).unwrap();
        let mut central: Vec<_> = dist
            .agents()
            .iter()
            .map(|a| CentralizedInfoFilter::new(a.post.clone()))
            .collect();
        let total: DMatrix<f64> = sensors
            .iter()
            .zip(&ys)
            .map(|(s, y)| info_measurement(y.as_ref(), s.as_ref(), 2).unwrap().zm)
            .fold(DMatrix::zeros(2, 2), |a, b| a + b);
        for _ in 2..=10 {
            let d = dist.step(&m, &sensors, &ys).unwrap();
            for (i, agent) in dist.agents().iter().enumerate() {
                assert!((&agent.scaled.zm - &total).abs().max() < 1e-12);
                let c = central[i].step(&m, &sensors, &ys).unwrap();
                assert!((&d[i].x - &c.x).abs().max() < 1e-9);
                assert!((&d[i].p - &c.p).abs().max() < 1e-9);
            }
        }
    }

    #[test]
    fn consensus_conserves_information() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 6;
        let a = local_degree_weights(&Digraph::random_connected(n, 0.3, &mut rng)).unwrap();
        let m = cv_model();
        let prior = GaussianInfo::from_moments(&DVector::zeros(2), &(DMatrix::identity(2, 2) * 10.0)).unwrap();
        let sensors: Vec<_> = (0..n)
            .map(|i| {
                (i % 2 == 0).then(|| LinearSensor::new(DMatrix::from_row_slice(1, 2, &[1.0, 0.0]), DMatrix::from_element(1, 1, 1.0)).unwrap())
            })
            .collect();
        let mut dist = DistributedInfoFilter::new(prior, AdjacencySchedule::constant(a));
        for _ in 0..30 {
            let ys: Vec<_> = sensors
                .iter()
                .map(|s| s.as_ref().map(|_| DVector::from_element(1, rng.random_range(-2.0..2.0))))
                .collect();
            dist.step(&m, &sensors, &ys).unwrap();
            let (mut su, mut si) = (GaussianInfo::zeros(2), GaussianInfo::zeros(2));
            for agent in dist.agents() {
                su.z += &agent.consensus.z;
                su.zm += &agent.consensus.zm;
                si.z += &agent.meas.z;
                si.zm += &agent.meas.zm;
                assert!((&agent.post.zm - agent.post.zm.transpose()).abs().max() < 1e-10);
                assert!(agent.post.zm.symmetric_eigenvalues().min() > -1e-10);
                assert_eq!(agent.scaled.zm, &agent.consensus.zm * n as f64);
            }
            assert!((su.z - si.z).abs().max() < 1e-10);
            assert!((su.zm - si.zm).abs().max() < 1e-10);
        }
    }
}
