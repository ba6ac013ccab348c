//! The five exact gradient estimators on a random softmax policy, plus a
//! sampled estimate of the stationary-weighted one.

use pglab::approximators::SoftmaxTabularPolicy;
use pglab::distributions::{discounted_visiting_frequency, long_run_distribution, ChainMode};
use pglab::gradients::{
    cosine_similarity, exact_policy_gradient, sampled_policy_gradient, DistKind, Estimator, GradientInputs,
    TransitionBatch, ValueSource,
};
use pglab::grid::{build_gridworld, GridSpec, InitialDistMode};
use pglab::mdp::StateDistribution;
use pglab::sampling::seeded_rng;
use pglab::solvers::exact_policy_evaluation;

fn main() -> pglab::Result<()> {
    let gamma = 0.99;
    let mdp = build_gridworld(&GridSpec::default_map(), gamma, &InitialDistMode::UniformAll)?;
    let mut rng = seeded_rng(3);
    let policy = SoftmaxTabularPolicy::xavier(mdp.n_states(), mdp.n_actions(), &mut rng);
    let table = policy.to_table();
    let v = exact_policy_evaluation(&mdp, &table)?.into_inner();
    // A deliberately biased critic so the approximate estimators differ.
    let approx: Vec<f64> = v.iter().enumerate().map(|(s, x)| x + 0.05 * (s % 3) as f64).collect();
    let inputs = GradientInputs {
        dvf: discounted_visiting_frequency(&mdp, &table, gamma, ChainMode::Restart)?.weights().to_vec(),
        initial: mdp.initial_dist().probs().to_vec(),
        stationary: long_run_distribution(&mdp, &table)?.probs().to_vec(),
        true_value: v,
        approx_value: approx,
    };
    let direct = exact_policy_gradient(&mdp, &policy, Estimator::Direct, &inputs)?;
    for e in Estimator::ALL {
        let g = exact_policy_gradient(&mdp, &policy, e, &inputs)?;
        println!(
            "{:<10} |g| = {:.5e}  cosine to direct = {:.6}",
            e.name(),
            g.norm(),
            cosine_similarity(g.grad(), direct.grad())
        );
    }

    let batch = TransitionBatch::sample(&mdp, &table, &StateDistribution::new(inputs.stationary.clone())?, DistKind::Stationary, 200_000, &mut rng)?;
    let sampled = sampled_policy_gradient(&mdp, &policy, &batch, &inputs.true_value, ValueSource::TrueValue)?;
    let exact = exact_policy_gradient(&mdp, &policy, Estimator::Baseline2, &inputs)?;
    println!("sampled vs exact stationary gradient: cosine {:.4}", cosine_similarity(sampled.grad(), exact.grad()));
    Ok(())
}
