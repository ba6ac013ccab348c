//! Seeded sampling helpers shared by the Monte-Carlo estimators.
//!
//! All randomness in the crate flows from [`Rng64`], ChaCha8 seeded from a
//! `u64`, so traces can be reproduced from the seed alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::mdp::{PolicyTable, TabularMDP};

pub type Rng64 = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws an index with probability proportional to `weights`.
pub fn sample_categorical<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.random::<f64>() * total;
    let mut last = 0;
    for (i, w) in weights.iter().enumerate() {
        if *w <= 0.0 {
            continue;
        }
        last = i;
        if u < *w {
            return i;
        }
        u -= w;
    }
    last
}

/// One environment step: returns `(action, reward, next_state)`.
pub fn step<R: Rng + ?Sized>(
    mdp: &TabularMDP,
    policy: &PolicyTable,
    s: usize,
    rng: &mut R,
) -> (usize, f64, usize) {
    let a = sample_categorical(policy.row(s), rng);
    let next = sample_categorical(mdp.transition_row(s, a), rng);
    (a, mdp.reward(s, a, next), next)
}
