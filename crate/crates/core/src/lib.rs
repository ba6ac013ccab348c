//! Tabular policy-gradient laboratory.
//!
//! A small gridworld MDP toolkit that computes state distributions and policy
//! gradients exactly, so that direct, indirect and unified gradient methods can
//! be compared against ground truth.

pub mod approximators;
pub mod config;
pub mod distributions;
pub mod error;
pub mod experiments;
pub mod gradients;
pub mod grid;
pub mod io;
pub mod mdp;
pub mod sampling;
pub mod solvers;
pub mod training;

pub use error::{Error, Result};
