//! Parses an ASCII map, reports its MDP and compares the start-state and
//! uniform initial distributions; also samples a random connected map.

use pglab::grid::{build_gridworld, GridSpec, InitialDistMode};
use pglab::mdp::PolicyTable;
use pglab::sampling::seeded_rng;
use pglab::solvers::policy_iteration;

const MAP: &str = "\
S...#
.##.#
....G
";

fn main() -> pglab::Result<()> {
    let spec: GridSpec = MAP.parse()?;
    for mode in [InitialDistMode::SingleStart, InitialDistMode::UniformAll] {
        let mdp = build_gridworld(&spec, 0.95, &mode)?;
        let pi = policy_iteration(&mdp, &PolicyTable::uniform(mdp.n_states(), mdp.n_actions()))?;
        println!(
            "{mode:?}: {} states, mean v* under d0 = {:.4}",
            mdp.n_states(),
            pi.values.weighted_mean(mdp.initial_dist().probs())
        );
    }
    let random = GridSpec::random(5, 7, 8, &mut seeded_rng(11))?;
    println!("random map:\n{random}");
    let mdp = build_gridworld(&random, 0.9, &InitialDistMode::UniformAll)?;
    println!("serialized MDP is {} bytes of JSON", mdp.to_json()?.len());
    Ok(())
}
