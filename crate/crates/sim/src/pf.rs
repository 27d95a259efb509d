//! Bootstrap particle filter weighted by a grid likelihood.

use dbf_core::{DensityGrid, ParticleSet};
use rand::RngCore;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::models::CvSampler;

/// Particle filter over `[x, ẋ, y, ẏ]` owning its random stream.
#[derive(Debug, Clone)]
pub struct ParticleFilter {
    set: ParticleSet,
    rng: ChaCha8Rng,
    log_w: Vec<f64>,
}

impl ParticleFilter {
    /// Draws `count` particles from `N(mean, diag(std²))`.
    pub fn new(
        mean: [f64; 4],
        std: [f64; 4],
        count: usize,
        mut rng: ChaCha8Rng,
    ) -> dbf_core::Result<Self> {
        let mut states = Vec::with_capacity(4 * count);
        for _ in 0..count {
            for d in 0..4 {
                let z: f64 = StandardNormal.sample(&mut rng);
                states.push(mean[d] + std[d] * z);
            }
        }
        Ok(Self {
            set: ParticleSet::equally_weighted(4, states)?,
            rng,
            log_w: vec![0.0; count],
        })
    }

    pub fn particles(&self) -> &ParticleSet {
        &self.set
    }

    pub fn predict(&mut self, motion: &CvSampler) {
        let rng: &mut dyn RngCore = &mut self.rng;
        for s in self.set.states_mut().chunks_exact_mut(4) {
            motion.step_in_place(s, rng);
        }
    }

    /// Weights particles by `t` evaluated at their position, returns the
    /// weighted mean state and resamples.
    pub fn update(&mut self, t: &DensityGrid) -> dbf_core::Result<[f64; 4]> {
        for (lw, s) in self.log_w.iter_mut().zip(self.set.states().chunks_exact(4)) {
            *lw = t.log_interpolate(&[s[0], s[2]]);
        }
        self.set.set_log_weights(&self.log_w)?;
        let m = self.set.mean();
        self.set = self.set.resample_with(self.set.len(), &mut self.rng)?;
        Ok([m[0], m[1], m[2], m[3]])
    }
}
