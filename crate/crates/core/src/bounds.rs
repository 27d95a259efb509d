//! Closed-form step-size, accuracy and transient bounds for the consensus
//! filter, in natural-log units throughout.

use crate::density::DensityGrid;
use crate::error::{DbfError, Result};

/// Inputs to the convergence bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceParams {
    /// Number of agents.
    pub n: usize,
    /// Connectivity period of the schedule.
    pub b: usize,
    /// Per-unit-time bound on the log drift of every normalized likelihood.
    pub theta_l: f64,
    /// Contraction rate of `b(N−1)`-window products, in `[0, 1)`.
    pub sigma_m: f64,
    /// Steady-state accuracy target on the L1 error.
    pub delta: f64,
    /// Transient slack: the bound `(1+η)δ` holds from step κ on.
    pub eta: f64,
    /// Initial disagreement `2 log max ℒ₁ˡ/ℒ₁ʲ`.
    pub d1: f64,
    pub eps_u: f64,
    pub eps_l: f64,
}

impl Default for ConvergenceParams {
    fn default() -> Self {
        Self {
            n: 2,
            b: 1,
            theta_l: 1.0,
            sigma_m: 0.5,
            delta: 0.5,
            eta: 0.5,
            d1: 0.0,
            eps_u: 0.0,
            eps_l: 0.0,
        }
    }
}

fn domain(msg: String) -> DbfError {
    DbfError::Domain(msg)
}

impl ConvergenceParams {
    /// Range checks on every field; does not involve a step size.
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(domain(format!("n must be at least 2, got {}", self.n)));
        }
        if self.b < 1 {
            return Err(domain("b must be at least 1".into()));
        }
        if !(self.theta_l > 0.0 && self.theta_l.is_finite()) {
            return Err(domain(format!("theta_l must be positive, got {}", self.theta_l)));
        }
        if !(0.0..1.0).contains(&self.sigma_m) {
            return Err(domain(format!("sigma_m must lie in [0, 1), got {}", self.sigma_m)));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(domain(format!("eta must lie in (0, 1), got {}", self.eta)));
        }
        let upper = 2.0 / (1.0 + self.eta);
        if !(self.delta > 0.0 && self.delta < upper) {
            return Err(domain(format!(
                "delta must lie in (0, {upper}) for eta = {}, got {}",
                self.eta, self.delta
            )));
        }
        if !(self.d1 >= 0.0 && self.d1.is_finite()) {
            return Err(domain(format!("d1 must be nonnegative, got {}", self.d1)));
        }
        if !(self.eps_u >= 0.0 && self.eps_l >= 0.0) {
            return Err(domain("error bounds must be nonnegative".into()));
        }
        Ok(())
    }

    /// Consensus window `b(N−1)` for a time-varying schedule.
    pub fn window(&self) -> usize {
        self.b * (self.n - 1)
    }

    /// `2ε_L + ε_U` divided by θ_L: the step size the error terms consume.
    pub fn error_allowance(&self) -> f64 {
        (2.0 * self.eps_l + self.eps_u) / self.theta_l
    }

    /// Checks that `delta` exceeds the accuracy floor of step size `delta_t`.
    pub fn check_feasible(&self, delta_t: f64) -> Result<()> {
        let floor = robust_delta_min_for_window(self, self.window(), delta_t)?;
        if self.delta <= floor {
            return Err(domain(format!(
                "delta = {} does not exceed delta_min = {floor} for step size {delta_t}",
                self.delta
            )));
        }
        Ok(())
    }
}

/// `2·w·N√N·θ_L / (1−σ)`: the factor linking Δ to `log(δ+1)`.
fn gain(p: &ConvergenceParams, window: usize) -> f64 {
    let n = p.n as f64;
    2.0 * window as f64 * n * n.sqrt() * p.theta_l / (1.0 - p.sigma_m)
}

fn check_window(window: usize) -> Result<()> {
    if window == 0 {
        Err(domain("consensus window must be at least 1".into()))
    } else {
        Ok(())
    }
}

/// Largest step size meeting the steady-state accuracy δ, without error terms.
pub fn delta_max(p: &ConvergenceParams) -> Result<f64> {
    p.validate()?;
    delta_max_for_window(p, p.window())
}

/// [`delta_max`] with the consensus window `b(N−1)` replaced by `window`.
pub fn delta_max_for_window(p: &ConvergenceParams, window: usize) -> Result<f64> {
    p.validate()?;
    check_window(window)?;
    Ok((p.delta + 1.0).ln() / gain(p, window))
}

/// Accuracy floor reachable with step size `delta_t_min`; inverse of [`delta_max`].
pub fn delta_min(p: &ConvergenceParams, delta_t_min: f64) -> Result<f64> {
    delta_min_for_window(p, p.window(), delta_t_min)
}

pub fn delta_min_for_window(p: &ConvergenceParams, window: usize, delta_t_min: f64) -> Result<f64> {
    p.validate()?;
    check_window(window)?;
    if !(delta_t_min > 0.0) {
        return Err(domain(format!("step size must be positive, got {delta_t_min}")));
    }
    Ok((delta_t_min * gain(p, window)).exp_m1())
}

/// Number of steps after which the transient bound `(1+η)δ` holds.
pub fn kappa(p: &ConvergenceParams) -> Result<usize> {
    kappa_for_window(p, p.window())
}

pub fn kappa_for_window(p: &ConvergenceParams, window: usize) -> Result<usize> {
    p.validate()?;
    check_window(window)?;
    let n = p.n as f64;
    let log_delta = (p.delta + 1.0).ln();
    if p.d1 <= log_delta / n.powf(1.5) || p.sigma_m == 0.0 {
        return Ok(1);
    }
    let num = (((1.0 + p.eta) * p.delta + 1.0) / (p.delta + 1.0)).ln();
    let den = n.powf(1.5) * p.d1 - log_delta;
    let k = (window as f64 / p.sigma_m.ln() * (num / den).ln()).ceil() + 1.0;
    Ok(if k.is_finite() && k > 1.0 { k as usize } else { 1 })
}

/// `Ξ_k` for `k = 1..=k_max`: the bound on every agent's log-ratio error.
pub fn xi_trajectory(p: &ConvergenceParams, delta_t: f64, k_max: usize) -> Result<Vec<f64>> {
    xi_trajectory_for_window(p, p.window(), delta_t, k_max)
}

pub fn xi_trajectory_for_window(
    p: &ConvergenceParams,
    window: usize,
    delta_t: f64,
    k_max: usize,
) -> Result<Vec<f64>> {
    p.validate()?;
    check_window(window)?;
    if !(delta_t > 0.0) {
        return Err(domain(format!("step size must be positive, got {delta_t}")));
    }
    let root_n = (p.n as f64).sqrt();
    let steady = xi_steady_state(p, window, delta_t);
    Ok((1..=k_max)
        .map(|k| {
            let e = ((k - 1) / window) as i32;
            (root_n * p.d1 - steady) * p.sigma_m.powi(e) + steady
        })
        .collect())
}

/// Limit of `Ξ_k`, including the error terms.
pub fn xi_steady_state(p: &ConvergenceParams, window: usize, delta_t: f64) -> f64 {
    let root_n = (p.n as f64).sqrt();
    2.0 * window as f64 * root_n * (delta_t * p.theta_l + 2.0 * p.eps_l + p.eps_u)
        / (1.0 - p.sigma_m)
}

/// First `k` (1-based) from which `exp(N Ξ_k) − 1 ≤ (1+η)δ` for the rest of the trajectory.
pub fn kappa_from_trajectory(p: &ConvergenceParams, xi: &[f64]) -> Option<usize> {
    let limit = (1.0 + p.eta) * p.delta;
    let n = p.n as f64;
    let last_bad = xi.iter().rposition(|x| (n * x).exp_m1() > limit);
    match last_bad {
        None => Some(1),
        Some(i) if i + 1 < xi.len() => Some(i + 2),
        Some(_) => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StaticBounds {
    pub delta_t: f64,
    pub delta_min: f64,
    pub kappa: usize,
}

/// Bounds for a fixed, strongly connected graph with `σ_{N−1}(A) = sigma_a`:
/// the time-varying formulas with window 1.
pub fn static_bounds(p: &ConvergenceParams, sigma_a: f64, delta_t_min: f64) -> Result<StaticBounds> {
    let q = ConvergenceParams {
        sigma_m: sigma_a,
        ..*p
    };
    Ok(StaticBounds {
        delta_t: delta_max_for_window(&q, 1)?,
        delta_min: delta_min_for_window(&q, 1, delta_t_min)?,
        kappa: kappa_for_window(&q, 1)?,
    })
}

/// Step size with bounded communication and likelihood errors.
pub fn robust_delta_max(p: &ConvergenceParams) -> Result<f64> {
    robust_delta_max_for_window(p, p.window())
}

pub fn robust_delta_max_for_window(p: &ConvergenceParams, window: usize) -> Result<f64> {
    let nominal = delta_max_for_window(p, window)?;
    let budget = p.error_allowance();
    let step = nominal - budget;
    if step <= 0.0 {
        return Err(DbfError::ErrorBudgetExceeded {
            step: nominal,
            budget,
        });
    }
    Ok(step)
}

/// Accuracy floor for step size `delta_t_min` with error terms included.
pub fn robust_delta_min(p: &ConvergenceParams, delta_t_min: f64) -> Result<f64> {
    robust_delta_min_for_window(p, p.window(), delta_t_min)
}

pub fn robust_delta_min_for_window(
    p: &ConvergenceParams,
    window: usize,
    delta_t_min: f64,
) -> Result<f64> {
    p.validate()?;
    check_window(window)?;
    if !(delta_t_min > 0.0) {
        return Err(domain(format!("step size must be positive, got {delta_t_min}")));
    }
    Ok(((delta_t_min + p.error_allowance()) * gain(p, window)).exp_m1())
}

/// ℓ₂ bound on the per-agent L1 errors after `n_loop` consensus loops.
pub fn multiloop_bound(n: usize, sigma_a: f64, n_loop: usize) -> Result<f64> {
    if n_loop < 1 {
        return Err(domain("n_loop must be at least 1".into()));
    }
    if !(0.0..=1.0).contains(&sigma_a) {
        return Err(domain(format!("sigma must lie in [0, 1], got {sigma_a}")));
    }
    Ok(sigma_a.powi(n_loop as i32 - 1) * 2.0 * (n as f64).sqrt())
}

/// Tightest θ_L certified by consecutive likelihood pairs on the grid.
pub fn estimate_theta_l<'a>(
    pairs: impl IntoIterator<Item = (&'a DensityGrid, &'a DensityGrid)>,
    delta_t: f64,
) -> Result<f64> {
    if !(delta_t > 0.0) {
        return Err(domain(format!("step size must be positive, got {delta_t}")));
    }
    let mut worst: f64 = 0.0;
    for (cur, prev) in pairs {
        cur.check_same_grid(prev)?;
        for (a, b) in cur.log_values().iter().zip(prev.log_values()) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst / delta_t)
}

/// `2 max_x (max_ℓ log ℒˡ(x) − min_j log ℒʲ(x))` over a set of likelihoods.
pub fn initial_disagreement(likelihoods: &[DensityGrid]) -> Result<f64> {
    let first = likelihoods.first().ok_or(DbfError::Empty("likelihood list"))?;
    for l in &likelihoods[1..] {
        first.check_same_grid(l)?;
    }
    let mut worst: f64 = 0.0;
    for c in 0..first.len() {
        let (lo, hi) = likelihoods.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), l| {
            let v = l.log_values()[c];
            (lo.min(v), hi.max(v))
        });
        worst = worst.max(hi - lo);
    }
    Ok(2.0 * worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::density::{normalize, StateGrid};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::E;

    fn example() -> ConvergenceParams {
        ConvergenceParams {
            n: 2,
            b: 1,
            theta_l: 1.0,
            sigma_m: 0.5,
            delta: E - 1.0,
            eta: 0.1,
            ..Default::default()
        }
    }

    #[test]
    fn delta_max_example() {
        let p = example();
        let d = delta_max(&p).unwrap();
        assert_abs_diff_eq!(d, 0.5 / (4.0 * 2f64.sqrt()), epsilon = 1e-15);
        assert_abs_diff_eq!(d, 0.08839, epsilon = 1e-5);
        let doubled = ConvergenceParams { theta_l: 2.0, ..p };
        assert_abs_diff_eq!(delta_max(&doubled).unwrap(), d / 2.0, epsilon = 1e-15);
        let slow = ConvergenceParams { sigma_m: 1.0 - 1e-12, ..p };
        assert!(delta_max(&slow).unwrap() < 1e-10);
    }

    #[test]
    fn delta_min_inverts_delta_max() {
        let p = example();
        assert_abs_diff_eq!(delta_min(&p, delta_max(&p).unwrap()).unwrap(), E - 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(delta_min(&p, 0.5 / (4.0 * 2f64.sqrt())).unwrap(), E - 1.0, epsilon = 1e-12);
        assert!(delta_min(&p, 1e-14).unwrap() < 1e-12);
        assert!(delta_min(&p, 0.0).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let eta = rng.random_range(0.01..0.99);
            let q = ConvergenceParams {
                n: rng.random_range(2..30),
                b: rng.random_range(1..4),
                theta_l: rng.random_range(0.01..10.0),
                sigma_m: rng.random_range(0.0..0.99),
                delta: rng.random_range(0.01..2.0 / (1.0 + eta)),
                eta,
                ..Default::default()
            };
            let back = delta_min(&q, delta_max(&q).unwrap()).unwrap();
            assert!((back - q.delta).abs() <= 1e-12 * q.delta.max(1.0), "{q:?}");
        }
    }

    #[test]
    fn validation() {
        assert!(delta_max(&ConvergenceParams { n: 1, ..example() }).is_err());
        assert!(delta_max(&ConvergenceParams { eta: 1.0, ..example() }).is_err());
        assert!(delta_max(&ConvergenceParams { delta: 2.0 / 1.1, ..example() }).is_err());
        assert!(delta_max(&ConvergenceParams { sigma_m: 1.0, ..example() }).is_err());
        assert!(delta_max(&ConvergenceParams { theta_l: 0.0, ..example() }).is_err());
        let p = example();
        assert!(p.check_feasible(0.05).is_ok());
        assert!(p.check_feasible(0.2).is_err());
    }

    #[test]
    fn kappa_branches() {
        let p = ConvergenceParams { n: 4, b: 2, d1: 0.0, ..example() };
        assert_eq!(kappa(&p).unwrap(), 1);
        let threshold = (p.delta + 1.0).ln() / 4f64.powf(1.5);
        assert_eq!(kappa(&ConvergenceParams { d1: threshold, ..p }).unwrap(), 1);
        let big = ConvergenceParams { d1: 3.0, ..p };
        let k = kappa(&big).unwrap();
        // hand evaluation of the ceiling expression
        let num = ((1.1 * p.delta + 1.0) / (p.delta + 1.0)).ln();
        let den = 8.0 * 3.0 - 1.0;
        let expected = (6.0 / 0.5f64.ln() * (num / den).ln()).ceil() as usize + 1;
        assert_eq!(k, expected);
        assert_eq!(kappa(&ConvergenceParams { sigma_m: 0.0, ..big }).unwrap(), 1);
    }

    #[test]
    fn kappa_agrees_with_trajectory_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..100 {
            let eta = rng.random_range(0.05..0.95);
            let p = ConvergenceParams {
                n: rng.random_range(2..12),
                b: rng.random_range(1..4),
                theta_l: rng.random_range(0.1..5.0),
                sigma_m: rng.random_range(0.05..0.95),
                delta: rng.random_range(0.05..2.0 / (1.0 + eta)),
                eta,
                d1: rng.random_range(0.0..20.0),
                ..Default::default()
            };
            let dt = delta_max(&p).unwrap();
            let k = kappa(&p).unwrap();
            let xi = xi_trajectory(&p, dt, k + 10 * p.window() + 10).unwrap();
            let scan = kappa_from_trajectory(&p, &xi).unwrap();
            assert!(k <= scan && scan < k + p.window(), "{p:?}: kappa {k} scan {scan}");
        }
    }

    #[test]
    fn xi_examples() {
        let p = ConvergenceParams { n: 3, b: 1, d1: 2.0, ..example() };
        let dt = 0.01;
        let xi = xi_trajectory(&p, dt, 400).unwrap();
        assert_abs_diff_eq!(xi[0], 3f64.sqrt() * 2.0, epsilon = 1e-15);
        let steady = 2.0 * 2.0 * 3f64.sqrt() * dt / 0.5;
        assert_abs_diff_eq!(*xi.last().unwrap(), steady, epsilon = 1e-12);
        assert!(xi.windows(2).all(|w| w[1] <= w[0]));
        let fixed = ConvergenceParams { d1: steady / 3f64.sqrt(), ..p };
        let flat = xi_trajectory(&fixed, dt, 50).unwrap();
        assert!(flat.iter().all(|x| (x - steady).abs() < 1e-12));
    }

    #[test]
    fn static_bound_examples() {
        let p = example();
        let s = static_bounds(&p, 0.5, 0.05).unwrap();
        assert_abs_diff_eq!(s.delta_t, delta_max(&p).unwrap(), epsilon = 1e-15);
        let n = 5.0f64;
        let q = ConvergenceParams { n: 5, ..p };
        let s = static_bounds(&q, 0.0, 0.01).unwrap();
        assert_abs_diff_eq!(s.delta_t, (q.delta + 1.0).ln() / (2.0 * n * n.sqrt()), epsilon = 1e-15);
        assert!(static_bounds(&q, 1.0 - 1e-13, 0.01).unwrap().delta_t < 1e-11);
    }

    #[test]
    fn robust_examples() {
        let p = example();
        assert_eq!(robust_delta_max(&p).unwrap(), delta_max(&p).unwrap());
        let noisy = ConvergenceParams { eps_l: 0.01, eps_u: 0.01, ..p };
        assert_abs_diff_eq!(
            robust_delta_max(&noisy).unwrap(),
            0.5 / (4.0 * 2f64.sqrt()) - 0.03,
            epsilon = 1e-15
        );
        assert!(robust_delta_max(&noisy).unwrap() < delta_max(&noisy).unwrap());
        let loud = ConvergenceParams { eps_l: 0.1, ..p };
        assert!(matches!(
            robust_delta_max(&loud),
            Err(DbfError::ErrorBudgetExceeded { .. })
        ));
        // the robust floor evaluated at the robust step recovers δ
        let dt = robust_delta_max(&noisy).unwrap();
        assert_abs_diff_eq!(robust_delta_min(&noisy, dt).unwrap(), noisy.delta, epsilon = 1e-12);
        assert_eq!(robust_delta_min(&p, 0.05).unwrap(), delta_min(&p, 0.05).unwrap());
    }

    #[test]
    fn multiloop_examples() {
        assert_abs_diff_eq!(multiloop_bound(4, 0.5, 3).unwrap(), 1.0);
        assert_abs_diff_eq!(multiloop_bound(9, 0.3, 1).unwrap(), 6.0);
        assert_eq!(multiloop_bound(9, 0.0, 2).unwrap(), 0.0);
        assert!(multiloop_bound(3, 0.5, 0).is_err());
        let seq: Vec<_> = (1..10).map(|k| multiloop_bound(5, 0.7, k).unwrap()).collect();
        assert!(seq.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn theta_estimation() {
        let g = StateGrid::line(0.0, 3.0, 3).unwrap().into_shared();
        let a = normalize(&g, &[1.0, 2.0, 4.0]).unwrap();
        assert_eq!(estimate_theta_l([(&a, &a)], 0.1).unwrap(), 0.0);
        let scaled = normalize(&g, &[3.0, 6.0, 12.0]).unwrap();
        assert!(estimate_theta_l([(&scaled, &a)], 0.1).unwrap() < 1e-12);
        // unit Gaussian at 0 and shifted by s = 0.5 on centers 0.5, 1.5, 2.5
        let s = 0.5;
        let gauss = |m: f64| normalize(&g, &[0.5f64, 1.5, 2.5].map(|x| (-0.5 * (x - m) * (x - m)).exp())).unwrap();
        let (p0, p1) = (gauss(0.0), gauss(s));
        // log ratio is s·x − s²/2 plus a normalizer shift c; hand-evaluate the extremes
        let lr: Vec<f64> = [0.5f64, 1.5, 2.5].iter().map(|x| s * x - s * s / 2.0).collect();
        let z0: f64 = [0.5f64, 1.5, 2.5].iter().map(|x| (-0.5 * x * x).exp()).sum();
        let z1: f64 = [0.5f64, 1.5, 2.5].iter().map(|x| (-0.5 * (x - s) * (x - s)).exp()).sum();
        let c = (z0 / z1).ln();
        let expected = lr.iter().map(|v| (v + c).abs()).fold(0.0, f64::max) / 0.1;
        assert_abs_diff_eq!(estimate_theta_l([(&p1, &p0)], 0.1).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn disagreement() {
        let g = StateGrid::line(0.0, 2.0, 2).unwrap().into_shared();
        let a = normalize(&g, &[1.0, 3.0]).unwrap();
        let b = normalize(&g, &[3.0, 1.0]).unwrap();
        assert_eq!(initial_disagreement(&[a.clone(), a.clone()]).unwrap(), 0.0);
        assert_abs_diff_eq!(initial_disagreement(&[a, b]).unwrap(), 2.0 * 3f64.ln(), epsilon = 1e-12);
    }
}
