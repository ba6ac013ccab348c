//! Writes SVG snapshots of the uniform and optimal policies with their exact
//! values.

use pglab::experiments::render_snapshot;
use pglab::grid::{build_gridworld, GridSpec, InitialDistMode};
use pglab::mdp::PolicyTable;
use pglab::solvers::{exact_policy_evaluation, policy_iteration};

fn main() -> pglab::Result<()> {
    let spec = GridSpec::default_map();
    let mdp = build_gridworld(&spec, 0.9, &InitialDistMode::UniformAll)?;
    let uniform = PolicyTable::uniform(mdp.n_states(), mdp.n_actions());
    let optimal = policy_iteration(&mdp, &uniform)?.policy;
    let dir = std::env::args().nth(1).map(Into::into).unwrap_or_else(|| std::env::temp_dir().join("pglab_render"));
    for (name, policy) in [("uniform", &uniform), ("optimal", &optimal)] {
        let v = exact_policy_evaluation(&mdp, policy)?;
        let path = dir.join(format!("{name}.svg"));
        render_snapshot(&spec, v.values(), policy, &format!("{name} policy"), &path)?;
        println!("wrote {}", path.display());
    }
    Ok(())
}
