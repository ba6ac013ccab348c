//! Fits the GELU value network to the exact value of the uniform policy with
//! expected TD targets, then saves and reloads it as a checkpoint.

use pglab::approximators::{Direction, MlpValueFunction, Optimizer, OptimizerConfig};
use pglab::gradients::{critic_gradient, expected_td_targets};
use pglab::grid::{build_gridworld, GridSpec, InitialDistMode};
use pglab::io::{load_checkpoint, save_checkpoint};
use pglab::mdp::PolicyTable;
use pglab::sampling::seeded_rng;
use pglab::solvers::exact_policy_evaluation;

fn main() -> pglab::Result<()> {
    let mdp = build_gridworld(&GridSpec::default_map(), 0.9, &InitialDistMode::UniformAll)?;
    let pi = PolicyTable::uniform(mdp.n_states(), mdp.n_actions());
    let truth = exact_policy_evaluation(&mdp, &pi)?;
    let mut vf = MlpValueFunction::new(mdp.n_states(), &[64, 64, 64], true, &mut seeded_rng(0))?;
    let mut opt = Optimizer::new(OptimizerConfig::adam(1e-3), vf.n_params())?;
    let weights = mdp.initial_dist().probs().to_vec();
    for step in 0..=3000 {
        let targets = expected_td_targets(&mdp, &pi, &vf.values())?;
        let grad = critic_gradient(&vf, &targets, &weights)?;
        opt.step(vf.params_mut(), &grad, Direction::Ascent)?;
        if step % 500 == 0 {
            let err = vf
                .values()
                .iter()
                .zip(truth.values())
                .enumerate()
                .filter(|(s, _)| !mdp.is_terminal(*s))
                .map(|(_, (a, b))| (a - b).abs())
                .fold(0.0, f64::max);
            println!("step {step:>4}: max error {err:.3e}");
        }
    }
    let dir = std::env::temp_dir().join("pglab_value_network");
    let path = dir.join("critic.ckpt");
    save_checkpoint(&path, &vf.to_tensors())?;
    let back = MlpValueFunction::from_tensors(&load_checkpoint(&path)?)?;
    println!("checkpoint {} reloads identically: {}", path.display(), back == vf);
    Ok(())
}
