//! Grid and particle representations of probability densities over a box-shaped
//! state space, plus the distances and log-ratio fields used by the fusion
//! analysis.
//!
//! Densities are stored as natural-log values per grid cell. Every constructor
//! goes through [`normalize_log`], which max-shifts before exponentiating,
//! applies the positivity floor [`POSITIVITY_FLOOR`] and renormalizes.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{DbfError, Result};

/// Smallest density value any grid cell may hold.
pub const POSITIVITY_FLOOR: f64 = 1e-300;

/// Log-normalizers smaller than this are treated as already normalized, which
/// makes normalization exactly idempotent.
const NORMALIZED_TOLERANCE: f64 = 1e-12;

#[inline]
fn log_floor() -> f64 {
    POSITIVITY_FLOOR.ln()
}

/// One axis of a [`StateGrid`]: `points` equal-width cells covering `[lower, upper]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub lower: f64,
    pub upper: f64,
    pub points: usize,
}

impl Axis {
    pub fn new(lower: f64, upper: f64, points: usize) -> Self {
        Self {
            lower,
            upper,
            points,
        }
    }

    #[inline]
    pub fn width(&self) -> f64 {
        (self.upper - self.lower) / self.points as f64
    }

    #[inline]
    pub fn center(&self, i: usize) -> f64 {
        self.lower + (i as f64 + 0.5) * self.width()
    }
}

/// Rectangular, uniformly spaced, cell-centered grid over a closed box.
///
/// Cells are indexed in row-major order: the last axis varies fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct StateGrid {
    axes: Vec<Axis>,
    strides: Vec<usize>,
    len: usize,
    cell_volume: f64,
}

impl StateGrid {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(DbfError::InvalidGrid("grid needs at least one axis".into()));
        }
        for (d, a) in axes.iter().enumerate() {
            if !a.lower.is_finite() || !a.upper.is_finite() {
                return Err(DbfError::InvalidGrid(format!("axis {d} has non-finite bounds")));
            }
            if a.lower >= a.upper {
                return Err(DbfError::InvalidGrid(format!(
                    "axis {d}: lower bound {} is not below upper bound {}",
                    a.lower, a.upper
                )));
            }
            if a.points < 2 {
                return Err(DbfError::InvalidGrid(format!(
                    "axis {d} needs at least 2 points, got {}",
                    a.points
                )));
            }
        }
        let mut strides = vec![1; axes.len()];
        for d in (0..axes.len() - 1).rev() {
            strides[d] = strides[d + 1] * axes[d + 1].points;
        }
        let len = axes.iter().map(|a| a.points).product();
        let cell_volume = axes.iter().map(Axis::width).product::<f64>();
        if !(cell_volume > 0.0) || !cell_volume.is_finite() {
            return Err(DbfError::InvalidGrid("cell volume must be positive".into()));
        }
        Ok(Self {
            axes,
            strides,
            len,
            cell_volume,
        })
    }

    /// Shorthand for a one-dimensional grid.
    pub fn line(lower: f64, upper: f64, points: usize) -> Result<Self> {
        Self::new(vec![Axis::new(lower, upper, points)])
    }

    /// Shorthand for a square two-dimensional grid.
    pub fn square(lower: f64, upper: f64, points: usize) -> Result<Self> {
        Self::new(vec![
            Axis::new(lower, upper, points),
            Axis::new(lower, upper, points),
        ])
    }

    pub fn into_shared(self) -> Arc<Self> {
        Arc::new(self)
    }

    pub fn dims(&self) -> usize {
        self.axes.len()
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.cell_volume
    }

    /// Total volume of the box.
    pub fn volume(&self) -> f64 {
        self.cell_volume * self.len as f64
    }

    /// Per-axis cell indices of a linear index.
    pub fn unravel(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.axes.len()];
        for (d, s) in self.strides.iter().enumerate() {
            out[d] = idx / s;
            idx %= s;
        }
        out
    }

    pub fn center(&self, idx: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.axes.len()];
        self.center_into(idx, &mut p);
        p
    }

    pub fn center_into(&self, mut idx: usize, out: &mut [f64]) {
        for (d, s) in self.strides.iter().enumerate() {
            out[d] = self.axes[d].center(idx / s);
            idx %= s;
        }
    }

    /// All cell centers in linear index order.
    pub fn centers(&self) -> impl Iterator<Item = Vec<f64>> + '_ {
        (0..self.len).map(move |i| self.center(i))
    }

    pub fn contains(&self, point: &[f64]) -> bool {
        point.len() == self.axes.len()
            && point
                .iter()
                .zip(&self.axes)
                .all(|(&x, a)| x >= a.lower && x <= a.upper)
    }

    /// Linear index of the cell containing `point`, or `None` outside the box.
    pub fn cell_of(&self, point: &[f64]) -> Option<usize> {
        if !self.contains(point) {
            return None;
        }
        let mut idx = 0;
        for ((&x, a), s) in point.iter().zip(&self.axes).zip(&self.strides) {
            let i = (((x - a.lower) / a.width()).floor() as usize).min(a.points - 1);
            idx += i * s;
        }
        Some(idx)
    }

    /// Fractional cell-center coordinate along axis `d`, clamped to the outermost centers.
    #[inline]
    fn center_coordinate(&self, d: usize, x: f64) -> (usize, f64) {
        let a = &self.axes[d];
        let u = ((x - a.lower) / a.width() - 0.5).clamp(0.0, (a.points - 1) as f64);
        let i = (u.floor() as usize).min(a.points - 2);
        (i, u - i as f64)
    }
}

/// Builds the log-domain normalization of `log_values` on `grid`.
///
/// The values are max-shifted before exponentiation, floored at
/// [`POSITIVITY_FLOOR`] and renormalized. Inputs already normalized to within
/// 1e-12 are returned unchanged.
pub fn normalize_log(grid: &Arc<StateGrid>, mut log_values: Vec<f64>) -> Result<DensityGrid> {
    if log_values.len() != grid.len() {
        return Err(DbfError::LengthMismatch {
            expected: grid.len(),
            actual: log_values.len(),
        });
    }
    if let Some(i) = log_values.iter().position(|v| v.is_nan() || *v == f64::INFINITY) {
        return Err(DbfError::NonFinite(i));
    }
    let shift = log_normalizer(&log_values, grid.cell_volume());
    if shift == f64::NEG_INFINITY {
        return Err(DbfError::AllZero);
    }
    let floor = log_floor();
    let mut floored = false;
    for v in log_values.iter_mut() {
        if shift.abs() > NORMALIZED_TOLERANCE {
            *v -= shift;
        }
        if *v < floor {
            *v = floor;
            floored = true;
        }
    }
    if floored {
        let second = log_normalizer(&log_values, grid.cell_volume());
        if second.abs() > NORMALIZED_TOLERANCE {
            log_values.iter_mut().for_each(|v| *v -= second);
        }
    }
    Ok(DensityGrid {
        grid: Arc::clone(grid),
        log_values,
    })
}

/// Normalizes nonnegative raw density values (linear scale).
pub fn normalize(grid: &Arc<StateGrid>, raw: &[f64]) -> Result<DensityGrid> {
    if let Some(i) = raw.iter().position(|v| !v.is_finite() || *v < 0.0) {
        return Err(DbfError::NonFinite(i));
    }
    normalize_log(grid, raw.iter().map(|v| v.ln()).collect())
}

/// `log ∫ exp(values)` over the grid via a max-shifted sum.
fn log_normalizer(log_values: &[f64], cell_volume: f64) -> f64 {
    let max = log_values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    let sum: f64 = log_values.iter().map(|v| (v - max).exp()).sum();
    max + sum.ln() + cell_volume.ln()
}

/// A strictly positive, normalized density on a [`StateGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    grid: Arc<StateGrid>,
    log_values: Vec<f64>,
}

impl DensityGrid {
    pub fn uniform(grid: &Arc<StateGrid>) -> Self {
        let v = -grid.volume().ln();
        Self {
            grid: Arc::clone(grid),
            log_values: vec![v; grid.len()],
        }
    }

    /// Normalizes `f(center)` where `f` returns a log density (up to a constant).
    pub fn from_log_fn(grid: &Arc<StateGrid>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let mut p = vec![0.0; grid.dims()];
        let logs = (0..grid.len())
            .map(|i| {
                grid.center_into(i, &mut p);
                f(&p)
            })
            .collect();
        normalize_log(grid, logs)
    }

    /// Gaussian with diagonal covariance, discretized on the grid.
    pub fn gaussian(grid: &Arc<StateGrid>, mean: &[f64], std: &[f64]) -> Result<Self> {
        if mean.len() != grid.dims() || std.len() != grid.dims() {
            return Err(DbfError::Dimension(format!(
                "grid has {} dims, mean {} and std {}",
                grid.dims(),
                mean.len(),
                std.len()
            )));
        }
        Self::from_log_fn(grid, |x| {
            x.iter()
                .zip(mean)
                .zip(std)
                .map(|((x, m), s)| -0.5 * ((x - m) / s).powi(2))
                .sum()
        })
    }

    pub fn grid(&self) -> &Arc<StateGrid> {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.log_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_values.is_empty()
    }

    pub fn log_values(&self) -> &[f64] {
        &self.log_values
    }

    pub fn into_log_values(self) -> Vec<f64> {
        self.log_values
    }

    pub fn value(&self, idx: usize) -> f64 {
        self.log_values[idx].exp()
    }

    pub fn values(&self) -> Vec<f64> {
        self.log_values.iter().map(|v| v.exp()).collect()
    }

    /// `∫ p` over the grid; 1 up to rounding.
    pub fn total_mass(&self) -> f64 {
        self.log_values.iter().map(|v| v.exp()).sum::<f64>() * self.grid.cell_volume()
    }

    pub fn same_grid(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid
    }

    pub(crate) fn check_same_grid(&self, other: &Self) -> Result<()> {
        if self.same_grid(other) {
            Ok(())
        } else {
            Err(DbfError::GridMismatch)
        }
    }

    /// Density of the cell containing `point`.
    pub fn density_at(&self, point: &[f64]) -> Result<f64> {
        self.grid
            .cell_of(point)
            .map(|i| self.value(i))
            .ok_or_else(|| DbfError::OutOfBounds(point.to_vec()))
    }

    /// Multilinear interpolation of the log density between cell centers.
    /// Points outside the box are clamped to the outermost centers.
    pub fn log_interpolate(&self, point: &[f64]) -> f64 {
        let g = &*self.grid;
        if g.dims() == 2 {
            let (i, fx) = g.center_coordinate(0, point[0]);
            let (j, fy) = g.center_coordinate(1, point[1]);
            let ny = g.axes[1].points;
            let b = i * ny + j;
            let v = &self.log_values;
            let top = v[b] * (1.0 - fy) + v[b + 1] * fy;
            let bottom = v[b + ny] * (1.0 - fy) + v[b + ny + 1] * fy;
            return top * (1.0 - fx) + bottom * fx;
        }
        let dims = g.dims();
        let mut base = 0;
        let mut fracs = Vec::with_capacity(dims);
        for (d, &x) in point.iter().enumerate().take(dims) {
            let (i, f) = g.center_coordinate(d, x);
            base += i * g.strides[d];
            fracs.push(f);
        }
        let mut acc = 0.0;
        for corner in 0..(1usize << dims) {
            let mut w = 1.0;
            let mut idx = base;
            for (d, f) in fracs.iter().enumerate() {
                if corner >> d & 1 == 1 {
                    w *= f;
                    idx += g.strides[d];
                } else {
                    w *= 1.0 - f;
                }
            }
            if w != 0.0 {
                acc += w * self.log_values[idx];
            }
        }
        acc
    }

    /// Grid expectation `∫ x p(x)`.
    pub fn mean(&self) -> Vec<f64> {
        let g = &*self.grid;
        let mut m = vec![0.0; g.dims()];
        let mut p = vec![0.0; g.dims()];
        for (i, lv) in self.log_values.iter().enumerate() {
            g.center_into(i, &mut p);
            let w = lv.exp() * g.cell_volume();
            for (acc, x) in m.iter_mut().zip(&p) {
                *acc += w * x;
            }
        }
        m
    }

    /// `normalize(p^exponent)`.
    pub fn powf(&self, exponent: f64) -> Result<Self> {
        normalize_log(
            &self.grid,
            self.log_values.iter().map(|v| exponent * v).collect(),
        )
    }

    /// Number of local maxima along a one-dimensional grid; a two-cell plateau
    /// counts once.
    pub fn count_modes_1d(&self) -> usize {
        let v = &self.log_values;
        (0..v.len())
            .filter(|&i| {
                let left = i == 0 || v[i] > v[i - 1];
                let right = i + 1 == v.len() || v[i] >= v[i + 1];
                left && right
            })
            .count()
    }
}

/// `∫ |p − q|`, in `[0, 2]`.
pub fn l1_distance(p: &DensityGrid, q: &DensityGrid) -> Result<f64> {
    p.check_same_grid(q)?;
    let s: f64 = p
        .log_values
        .iter()
        .zip(&q.log_values)
        .map(|(a, b)| (a.exp() - b.exp()).abs())
        .sum();
    Ok((s * p.grid.cell_volume()).min(2.0))
}

/// `∫ p log(p / q)`.
pub fn kl_divergence(p: &DensityGrid, q: &DensityGrid) -> Result<f64> {
    p.check_same_grid(q)?;
    let s: f64 = p
        .log_values
        .iter()
        .zip(&q.log_values)
        .map(|(a, b)| a.exp() * (a - b))
        .sum();
    Ok(s * p.grid.cell_volume())
}

/// Total-variation distance of the induced measures: half the L1 distance.
pub fn tv_distance(p: &DensityGrid, q: &DensityGrid) -> Result<f64> {
    Ok(0.5 * l1_distance(p, q)?)
}

/// Cell center where `|p − q|` is smallest. Ties go to the lowest cell index.
pub fn find_psi(p: &DensityGrid, q: &DensityGrid) -> Result<Vec<f64>> {
    Ok(p.grid.center(find_psi_index(p, q)?))
}

pub fn find_psi_index(p: &DensityGrid, q: &DensityGrid) -> Result<usize> {
    p.check_same_grid(q)?;
    let mut best = 0;
    let mut best_gap = f64::INFINITY;
    for (i, (a, b)) in p.log_values.iter().zip(&q.log_values).enumerate() {
        let gap = (a.exp() - b.exp()).abs();
        if gap < best_gap {
            best_gap = gap;
            best = i;
        }
    }
    Ok(best)
}

/// `log p(x) − log p(ψ)` for every cell, anchored at the cell containing `psi`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRatioField {
    grid: Arc<StateGrid>,
    values: Vec<f64>,
    psi: Vec<f64>,
}

impl LogRatioField {
    pub fn grid(&self) -> &Arc<StateGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    /// Exponentiates and normalizes back into a density.
    pub fn to_density(&self) -> Result<DensityGrid> {
        normalize_log(&self.grid, self.values.clone())
    }
}

pub fn log_ratio(p: &DensityGrid, psi: &[f64]) -> Result<LogRatioField> {
    let anchor = p
        .grid
        .cell_of(psi)
        .ok_or_else(|| DbfError::OutOfBounds(psi.to_vec()))?;
    let a = p.log_values[anchor];
    Ok(LogRatioField {
        grid: Arc::clone(&p.grid),
        values: p.log_values.iter().map(|v| v - a).collect(),
        psi: psi.to_vec(),
    })
}

/// Weighted samples of a state vector, stored flat (`len × dim`).
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    dim: usize,
    states: Vec<f64>,
    weights: Vec<f64>,
}

impl ParticleSet {
    /// Builds a set from flat states and (unnormalized) nonnegative weights.
    pub fn new(dim: usize, states: Vec<f64>, weights: Vec<f64>) -> Result<Self> {
        if dim == 0 || states.is_empty() || states.len() != dim * weights.len() {
            return Err(DbfError::Dimension(format!(
                "{} state values for {} weights of dimension {dim}",
                states.len(),
                weights.len()
            )));
        }
        if let Some(i) = weights.iter().position(|w| !w.is_finite() || *w < 0.0) {
            return Err(DbfError::NonFinite(i));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(DbfError::AllZero);
        }
        let weights = weights.into_iter().map(|w| w / total).collect();
        Ok(Self {
            dim,
            states,
            weights,
        })
    }

    pub fn equally_weighted(dim: usize, states: Vec<f64>) -> Result<Self> {
        let n = states.len() / dim.max(1);
        Self::new(dim, states, vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn state(&self, i: usize) -> &[f64] {
        &self.states[i * self.dim..(i + 1) * self.dim]
    }

    pub fn states(&self) -> &[f64] {
        &self.states
    }

    pub fn states_mut(&mut self) -> &mut [f64] {
        &mut self.states
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Replaces the weights by `exp(log_weights)` after a max shift.
    pub fn set_log_weights(&mut self, log_weights: &[f64]) -> Result<()> {
        if log_weights.len() != self.len() {
            return Err(DbfError::LengthMismatch {
                expected: self.len(),
                actual: log_weights.len(),
            });
        }
        let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if max == f64::NEG_INFINITY {
            return Err(DbfError::AllZero);
        }
        if max.is_nan() || max == f64::INFINITY {
            return Err(DbfError::NonFinite(0));
        }
        let mut total = 0.0;
        for (w, lw) in self.weights.iter_mut().zip(log_weights) {
            *w = (lw - max).exp();
            total += *w;
        }
        self.weights.iter_mut().for_each(|w| *w /= total);
        Ok(())
    }

    /// Weighted mean state.
    pub fn mean(&self) -> Vec<f64> {
        let mut m = vec![0.0; self.dim];
        for (s, w) in self.states.chunks_exact(self.dim).zip(&self.weights) {
            for (acc, x) in m.iter_mut().zip(s) {
                *acc += w * x;
            }
        }
        m
    }

    pub fn effective_sample_size(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    /// Systematic resampling with a generator seeded from `seed`.
    pub fn resample(&self, count: usize, seed: u64) -> Result<Self> {
        self.resample_with(count, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    /// Systematic resampling into `count` equally weighted particles.
    pub fn resample_with<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Result<Self> {
        if count == 0 {
            return Err(DbfError::Empty("resample count"));
        }
        let offset: f64 = rng.random::<f64>();
        let idx = systematic_indices(&self.weights, count, offset);
        let mut states = Vec::with_capacity(count * self.dim);
        for i in idx {
            states.extend_from_slice(self.state(i));
        }
        Ok(Self {
            dim: self.dim,
            states,
            weights: vec![1.0 / count as f64; count],
        })
    }
}

/// Systematic resampling: one uniform `offset ∈ [0, 1)` places `count`
/// equally spaced pointers over the cumulative weights.
pub fn systematic_indices(weights: &[f64], count: usize, offset: f64) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let step = total / count as f64;
    let mut out = Vec::with_capacity(count);
    let mut cumulative = weights[0];
    let mut j = 0;
    for m in 0..count {
        let u = (offset + m as f64) * step;
        while u >= cumulative && j + 1 < weights.len() {
            j += 1;
            cumulative += weights[j];
        }
        out.push(j);
    }
    out
}
