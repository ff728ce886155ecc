//! Synthetic metastable trajectories with known well membership.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// A sampled trajectory and the well each record belongs to.
#[derive(Debug, Clone)]
pub struct LabeledTrajectory {
    pub states: Vec<Vec<f64>>,
    pub wells: Vec<usize>,
}

impl LabeledTrajectory {
    /// Keeps every `stride`-th record.
    pub fn subsample(&self, stride: usize) -> Self {
        Self {
            states: self.states.iter().step_by(stride).cloned().collect(),
            wells: self.wells.iter().step_by(stride).copied().collect(),
        }
    }
}

/// Overdamped Langevin dynamics `dx = −V′(x)dt + √(2/β) dW` in the double well
/// `V(x) = (x² − 1)²`, integrated by Euler–Maruyama.
#[derive(Debug, Clone, Copy)]
pub struct DoubleWell {
    pub beta: f64,
    pub dt: f64,
    /// Integrator steps between recorded states.
    pub substeps: usize,
}

impl Default for DoubleWell {
    fn default() -> Self {
        Self {
            beta: 4.0,
            dt: 1e-3,
            substeps: 50,
        }
    }
}

impl DoubleWell {
    /// Records `n` states starting in the left well. Wells are labeled by sign
    /// (0 for `x < 0`).
    pub fn sample(&self, n: usize, seed: u64) -> LabeledTrajectory {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let noise = (2.0 * self.dt / self.beta).sqrt();
        let mut x = -1.0f64;
        let mut states = Vec::with_capacity(n);
        let mut wells = Vec::with_capacity(n);
        for _ in 0..n {
            states.push(vec![x]);
            wells.push(usize::from(x >= 0.0));
            for _ in 0..self.substeps {
                let xi: f64 = StandardNormal.sample(&mut rng);
                x += -4.0 * x * (x * x - 1.0) * self.dt + noise * xi;
            }
        }
        LabeledTrajectory { states, wells }
    }
}

/// Markov chain hopping between well centers with Gaussian scatter around each.
///
/// At every step the chain leaves its current well with probability `hop_prob`,
/// moving to a uniformly chosen other well.
pub fn hopping_chain(
    centers: &[Vec<f64>],
    hop_prob: f64,
    scatter: f64,
    n: usize,
    seed: u64,
) -> LabeledTrajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = centers.len();
    let mut well = 0usize;
    let mut states = Vec::with_capacity(n);
    let mut wells = Vec::with_capacity(n);
    for _ in 0..n {
        let state = centers[well]
            .iter()
            .map(|c| {
                let xi: f64 = StandardNormal.sample(&mut rng);
                c + scatter * xi
            })
            .collect();
        states.push(state);
        wells.push(well);
        if k > 1 && rng.random::<f64>() < hop_prob {
            let shift = rng.random_range(1..k);
            well = (well + shift) % k;
        }
    }
    LabeledTrajectory { states, wells }
}
