#![allow(dead_code)]

use pglab::approximators::softmax;
use pglab::grid::{build_gridworld, GridSpec, InitialDistMode};
use pglab::mdp::{PolicyTable, StateVector, TabularMDP};
use pglab::sampling::seeded_rng;
use rand::Rng;

pub fn default_mdp(gamma: f64) -> TabularMDP {
    build_gridworld(&GridSpec::default_map(), gamma, &InitialDistMode::UniformAll).unwrap()
}

/// Random connected map between 3x3 and 6x6 with up to a quarter walls.
pub fn random_spec(seed: u64) -> GridSpec {
    let mut rng = seeded_rng(seed);
    let rows = rng.random_range(3..7);
    let cols = rng.random_range(3..7);
    let walls = rng.random_range(0..(rows * cols / 4));
    GridSpec::random(rows, cols, walls, &mut rng).unwrap()
}

pub fn random_mdp(seed: u64, gamma: f64) -> TabularMDP {
    build_gridworld(&random_spec(seed), gamma, &InitialDistMode::UniformAll).unwrap()
}

/// Softmax of uniform(−3, 3) logits: full support in every row.
pub fn random_policy(n: usize, na: usize, seed: u64) -> PolicyTable {
    let mut rng = seeded_rng(seed);
    let probs: Vec<f64> = (0..n)
        .flat_map(|_| {
            let logits: Vec<f64> = (0..na).map(|_| rng.random_range(-3.0..3.0)).collect();
            softmax(&logits)
        })
        .collect();
    PolicyTable::new(n, na, probs).unwrap()
}

pub fn random_vector(n: usize, seed: u64, scale: f64) -> StateVector {
    let mut rng = seeded_rng(seed);
    StateVector::new((0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

pub fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}
