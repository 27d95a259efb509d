//! Opinion pools over grid densities and the Bayes update they commute with.

use std::sync::Arc;

use crate::density::{normalize_log, DensityGrid, StateGrid};
use crate::error::{DbfError, Result};

const WEIGHT_SUM_TOLERANCE: f64 = 1e-12;

/// Nonnegative pool weights summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct PoolWeights(Vec<f64>);

impl PoolWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(DbfError::Empty("pool weights"));
        }
        if let Some(w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(DbfError::InvalidWeights(format!("weight {w} is negative or non-finite")));
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > WEIGHT_SUM_TOLERANCE {
            return Err(DbfError::InvalidWeights(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self(weights))
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(DbfError::Empty("pool weights"));
        }
        Ok(Self(vec![1.0 / n as f64; n]))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

fn common_grid(pdfs: &[DensityGrid]) -> Result<&Arc<StateGrid>> {
    let first = pdfs.first().ok_or(DbfError::Empty("density list"))?;
    for p in &pdfs[1..] {
        first.check_same_grid(p)?;
    }
    Ok(first.grid())
}

fn check_weights(pdfs: &[DensityGrid], w: &PoolWeights) -> Result<()> {
    if w.len() != pdfs.len() {
        return Err(DbfError::WeightMismatch {
            weights: w.len(),
            inputs: pdfs.len(),
        });
    }
    Ok(())
}

/// Cell-wise weighted arithmetic mean.
pub fn linop(pdfs: &[DensityGrid], w: &PoolWeights) -> Result<DensityGrid> {
    let grid = common_grid(pdfs)?;
    check_weights(pdfs, w)?;
    let mut acc = vec![0.0; grid.len()];
    for (p, &wi) in pdfs.iter().zip(w.as_slice()) {
        for (a, lv) in acc.iter_mut().zip(p.log_values()) {
            *a += wi * lv.exp();
        }
    }
    normalize_log(grid, acc.into_iter().map(f64::ln).collect())
}

/// Weighted geometric mean, renormalized: `normalize(exp Σ wᵢ log pᵢ)`.
pub fn logop(pdfs: &[DensityGrid], w: &PoolWeights) -> Result<DensityGrid> {
    let grid = common_grid(pdfs)?;
    check_weights(pdfs, w)?;
    normalize_log(grid, weighted_log_sum(pdfs, w.as_slice()))
}

pub(crate) fn weighted_log_sum(pdfs: &[DensityGrid], w: &[f64]) -> Vec<f64> {
    let mut acc = vec![0.0; pdfs[0].len()];
    for (p, &wi) in pdfs.iter().zip(w) {
        if wi == 0.0 {
            continue;
        }
        for (a, lv) in acc.iter_mut().zip(p.log_values()) {
            *a += wi * lv;
        }
    }
    acc
}

/// The pool minimizing `Σᵢ KL(ρ ‖ pᵢ)`: LogOP with uniform weights.
pub fn kl_pool(pdfs: &[DensityGrid]) -> Result<DensityGrid> {
    logop(pdfs, &PoolWeights::uniform(pdfs.len())?)
}

/// `normalize(Π ℒⱼ)`, the centralized fusion of all likelihoods.
pub fn joint_likelihood(likelihoods: &[DensityGrid]) -> Result<DensityGrid> {
    let grid = common_grid(likelihoods)?;
    normalize_log(grid, weighted_log_sum(likelihoods, &vec![1.0; likelihoods.len()]))
}

/// `normalize(ℒ · prior)`.
pub fn bayes_update(prior: &DensityGrid, likelihood: &DensityGrid) -> Result<DensityGrid> {
    prior.check_same_grid(likelihood)?;
    normalize_log(
        prior.grid(),
        prior
            .log_values()
            .iter()
            .zip(likelihood.log_values())
            .map(|(a, b)| a + b)
            .collect(),
    )
}
