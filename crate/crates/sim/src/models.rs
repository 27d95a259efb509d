//! Constant-velocity target and the range, bearing and linear sensors.

use std::f64::consts::PI;

use dbf_core::{LinearModel, LinearSensor, SensorModel};
use nalgebra::{DMatrix, Matrix4, Vector4};
use rand::RngCore;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// `F` and `Q` of the constant-velocity model with state `[x, ẋ, y, ẏ]`.
pub fn cv_matrices(dt: f64) -> (Matrix4<f64>, Matrix4<f64>) {
    #[rustfmt::skip]
    let f = Matrix4::new(
        1.0, dt, 0.0, 0.0,
        0.0, 1.0, 0.0, 0.0,
        0.0, 0.0, 1.0, dt,
        0.0, 0.0, 0.0, 1.0,
    );
    let (a, b, c) = (dt.powi(3) / 3.0, dt * dt / 2.0, dt);
    #[rustfmt::skip]
    let q = Matrix4::new(
        a,   b,   0.0, 0.0,
        b,   c,   0.0, 0.0,
        0.0, 0.0, a,   b,
        0.0, 0.0, b,   c,
    );
    (f, q)
}

pub fn cv_model(dt: f64) -> dbf_core::Result<LinearModel> {
    let (f, q) = cv_matrices(dt);
    LinearModel::new(
        DMatrix::from_iterator(4, 4, f.iter().copied()),
        DMatrix::from_iterator(4, 4, q.iter().copied()),
    )
}

/// Sampler for constant-velocity motion with a fixed step.
#[derive(Debug, Clone)]
pub struct CvSampler {
    pub f: Matrix4<f64>,
    /// Lower Cholesky factor of `Q`.
    pub chol_q: Matrix4<f64>,
}

impl CvSampler {
    pub fn new(dt: f64) -> Self {
        let (f, q) = cv_matrices(dt);
        let chol_q = q.cholesky().expect("Q is positive definite for dt > 0").l();
        Self { f, chol_q }
    }

    pub fn step(&self, x: &Vector4<f64>, rng: &mut dyn RngCore) -> Vector4<f64> {
        let z = Vector4::from_fn(|_, _| StandardNormal.sample(&mut *rng));
        self.f * x + self.chol_q * z
    }

    /// Propagates a flat `[x, ẋ, y, ẏ]` state in place.
    #[inline]
    pub fn step_in_place(&self, s: &mut [f64], rng: &mut dyn RngCore) {
        let x = Vector4::new(s[0], s[1], s[2], s[3]);
        let next = self.step(&x, rng);
        s.copy_from_slice(next.as_slice());
    }
}

/// Wraps an angle to `(−π, π]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

/// Argument order of the bearing measurement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BearingConvention {
    /// `atan2(x − xᵢ, y − yᵢ)`: bearing measured from the y axis.
    #[default]
    AsPrinted,
    /// `atan2(y − yᵢ, x − xᵢ)`.
    Conventional,
}

/// Range sensor at a fixed position; the state point is a 2-D position.
#[derive(Debug, Clone, PartialEq)]
pub struct ToaSensor {
    pub position: [f64; 2],
    pub sigma: f64,
}

impl ToaSensor {
    pub fn range(&self, x: &[f64]) -> f64 {
        (x[0] - self.position[0]).hypot(x[1] - self.position[1])
    }
}

impl SensorModel for ToaSensor {
    fn sample(&self, x: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        let z: f64 = StandardNormal.sample(rng);
        vec![self.range(x) + self.sigma * z]
    }

    fn log_likelihood(&self, y: &[f64], x: &[f64]) -> f64 {
        -0.5 * ((y[0] - self.range(x)) / self.sigma).powi(2)
    }
}

/// Bearing sensor at a fixed position; the state point is a 2-D position.
#[derive(Debug, Clone, PartialEq)]
pub struct DoaSensor {
    pub position: [f64; 2],
    /// Standard deviation in radians.
    pub sigma: f64,
    pub convention: BearingConvention,
}

impl DoaSensor {
    pub fn bearing(&self, x: &[f64]) -> f64 {
        let dx = x[0] - self.position[0];
        let dy = x[1] - self.position[1];
        match self.convention {
            BearingConvention::AsPrinted => dx.atan2(dy),
            BearingConvention::Conventional => dy.atan2(dx),
        }
    }
}

impl SensorModel for DoaSensor {
    fn sample(&self, x: &[f64], rng: &mut dyn RngCore) -> Vec<f64> {
        let z: f64 = StandardNormal.sample(rng);
        vec![wrap_angle(self.bearing(x) + self.sigma * z)]
    }

    fn log_likelihood(&self, y: &[f64], x: &[f64]) -> f64 {
        -0.5 * (wrap_angle(y[0] - self.bearing(x)) / self.sigma).powi(2)
    }
}

/// Position-only sensor `H = [1 0 0 0; 0 0 1 0]` with `R = r·I`.
pub fn position_sensor(r: f64) -> dbf_core::Result<LinearSensor> {
    #[rustfmt::skip]
    let h = DMatrix::from_row_slice(2, 4, &[
        1.0, 0.0, 0.0, 0.0,
        0.0, 0.0, 1.0, 0.0,
    ]);
    LinearSensor::new(h, DMatrix::identity(2, 2) * r)
}
