//! t-step, discounted visiting and stationary distributions of the uniform
//! policy, and how the rescaled visiting frequency approaches the stationary
//! distribution as the discount grows.

use pglab::distributions::{
    cesaro_average, discounted_visiting_frequency, discounted_visiting_frequency_from, sample_stationary,
    stationary_distribution, t_step_distribution, verify_proposition_2, ChainMode,
};
use pglab::grid::{build_gridworld, GridSpec, InitialDistMode};
use pglab::mdp::PolicyTable;
use pglab::sampling::seeded_rng;

fn main() -> pglab::Result<()> {
    let mdp = build_gridworld(&GridSpec::default_map(), 0.9, &InitialDistMode::UniformAll)?;
    let pi = PolicyTable::uniform(mdp.n_states(), mdp.n_actions());

    let d3 = t_step_distribution(&mdp, &pi, 3, ChainMode::Restart)?;
    let dvf = discounted_visiting_frequency(&mdp, &pi, 0.9, ChainMode::Restart)?;
    let stat = stationary_distribution(&mdp, &pi, ChainMode::Restart, 1e-12)?;
    println!("state  d^3      (1-γ)DVF  d^π");
    for s in 0..mdp.n_states() {
        println!("{s:>5}  {:.5}  {:.5}   {:.5}", d3.probs()[s], dvf.weights()[s] * 0.1, stat.probs()[s]);
    }

    // Starting from d^π itself the identity is exact at any discount.
    let from_stat = discounted_visiting_frequency_from(&mdp, &pi, 0.9, ChainMode::Restart, &stat)?;
    println!("start = d^π: gap {:.2e}", stat.max_abs_diff(&from_stat.scaled(0.1)));

    for row in verify_proposition_2(&mdp, &pi, &[0.9, 0.99, 0.999, 0.9999], None)? {
        println!("γ = {:<7} gap {:.3e}", row.discount, row.gap);
    }

    let avg = cesaro_average(&mdp, &pi, ChainMode::Restart, 0, 100_000)?;
    println!("Cesàro average (N = 1e5) vs d^π: {:.2e}", stat.max_abs_diff(&avg));
    let sampled = sample_stationary(&mdp, &pi, 1000, 200_000, &mut seeded_rng(0))?;
    println!("sampled d^π (2e5 steps) vs exact: {:.2e}", stat.max_abs_diff(sampled.probs()));
    Ok(())
}
