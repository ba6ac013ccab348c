//! Exact solvers on the built-in map: policy iteration, value iteration and
//! the shortest-path closed form `v*(s) = γ^(L(s) − 1)`.

use pglab::grid::{build_gridworld, GridSpec, InitialDistMode};
use pglab::mdp::PolicyTable;
use pglab::solvers::{policy_iteration, value_iteration};

fn main() -> pglab::Result<()> {
    let spec = GridSpec::default_map();
    let gamma = 0.9;
    let mdp = build_gridworld(&spec, gamma, &InitialDistMode::UniformAll)?;
    println!("{spec}");

    let pi = policy_iteration(&mdp, &PolicyTable::uniform(mdp.n_states(), mdp.n_actions()))?;
    let vi = value_iteration(&mdp, 1e-12)?;
    println!("policy iteration: {} sweeps; value iteration: {} sweeps", pi.iterations, vi.iterations);
    println!("max |v_PI − v_VI| = {:.2e}", pi.values.max_abs_diff(&vi.values));

    let lengths = spec.shortest_path_lengths();
    println!("state  v*        γ^(L-1)   greedy");
    for s in 0..mdp.n_states() {
        let closed = if mdp.is_terminal(s) { 0.0 } else { gamma.powi(lengths[s] as i32 - 1) };
        println!("{s:>5}  {:.6}  {closed:.6}  {}", pi.values[s], pi.greedy_actions()[s]);
    }
    pi.write_csv(std::io::stdout())
}
