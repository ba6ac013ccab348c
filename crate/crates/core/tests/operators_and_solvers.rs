mod common;

use common::{default_mdp, max_diff, random_mdp, random_policy, random_vector};
use pglab::grid::{build_gridworld, GridSpec, InitialDistMode};
use pglab::mdp::{apply_bellman_operator, apply_self_consistency_operator, PolicyTable, StateVector};
use pglab::solvers::{exact_policy_evaluation, greedy_improvement, policy_iteration, value_iteration};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn policy_operator_contracts(seed in any::<u64>(), gamma in 0.05f64..0.999) {
        let mdp = default_mdp(gamma);
        let n = mdp.n_states();
        let pi = random_policy(n, 4, seed);
        let v1 = random_vector(n, seed ^ 1, 10.0);
        let v2 = random_vector(n, seed ^ 2, 10.0);
        let a = apply_self_consistency_operator(&mdp, &pi, &v1).unwrap();
        let b = apply_self_consistency_operator(&mdp, &pi, &v2).unwrap();
        prop_assert!(a.max_abs_diff(&b) <= gamma * v1.max_abs_diff(&v2) + 1e-12);
    }

    #[test]
    fn bellman_operator_contracts(seed in any::<u64>(), gamma in 0.05f64..0.999) {
        let mdp = random_mdp(seed, gamma);
        let n = mdp.n_states();
        let v1 = random_vector(n, seed ^ 1, 10.0);
        let v2 = random_vector(n, seed ^ 2, 10.0);
        let (a, _) = apply_bellman_operator(&mdp, &v1).unwrap();
        let (b, _) = apply_bellman_operator(&mdp, &v2).unwrap();
        prop_assert!(a.max_abs_diff(&b) <= gamma * v1.max_abs_diff(&v2) + 1e-12);
    }

    #[test]
    fn operators_are_monotone(seed in any::<u64>()) {
        let mdp = default_mdp(0.9);
        let n = mdp.n_states();
        let pi = random_policy(n, 4, seed);
        let v = random_vector(n, seed ^ 3, 5.0);
        let bump = random_vector(n, seed ^ 4, 1.0);
        let u = StateVector::new(v.values().iter().zip(bump.values()).map(|(a, b)| a + b.abs()).collect()).unwrap();
        let tv = apply_self_consistency_operator(&mdp, &pi, &v).unwrap();
        let tu = apply_self_consistency_operator(&mdp, &pi, &u).unwrap();
        prop_assert!(tv.values().iter().zip(tu.values()).all(|(a, b)| *a <= b + 1e-12));
        let (sv, _) = apply_bellman_operator(&mdp, &v).unwrap();
        let (su, _) = apply_bellman_operator(&mdp, &u).unwrap();
        prop_assert!(sv.values().iter().zip(su.values()).all(|(a, b)| *a <= b + 1e-12));
    }

    #[test]
    fn policy_operator_never_beats_bellman(seed in any::<u64>()) {
        let mdp = random_mdp(seed, 0.9);
        let n = mdp.n_states();
        let pi = random_policy(n, 4, seed ^ 5);
        let v = random_vector(n, seed ^ 6, 5.0);
        let tp = apply_self_consistency_operator(&mdp, &pi, &v).unwrap();
        let (ts, _) = apply_bellman_operator(&mdp, &v).unwrap();
        prop_assert!(tp.values().iter().zip(ts.values()).all(|(a, b)| *a <= b + 1e-12));
    }

    #[test]
    fn exact_evaluation_is_a_fixed_point(seed in any::<u64>(), gamma in 0.1f64..0.99) {
        let mdp = random_mdp(seed, gamma);
        let pi = random_policy(mdp.n_states(), 4, seed ^ 7);
        let v = exact_policy_evaluation(&mdp, &pi).unwrap();
        let tv = apply_self_consistency_operator(&mdp, &pi, &v).unwrap();
        prop_assert!(v.max_abs_diff(&tv) < 1e-10);
    }

    #[test]
    fn policy_and_value_iteration_agree(seed in any::<u64>(), gamma in 0.5f64..0.99) {
        let mdp = random_mdp(seed, gamma);
        let uniform = PolicyTable::uniform(mdp.n_states(), 4);
        let pi = policy_iteration(&mdp, &uniform).unwrap();
        let vi = value_iteration(&mdp, 1e-12).unwrap();
        prop_assert!(pi.values.max_abs_diff(&vi.values) < 1e-9);
    }

    #[test]
    fn greedy_improvement_ignores_constant_shift(seed in any::<u64>(), c in -50.0f64..50.0) {
        let mdp = default_mdp(0.9);
        let v = random_vector(mdp.n_states(), seed, 3.0);
        let shifted = StateVector::new(v.values().iter().map(|x| x + c).collect()).unwrap();
        let a = greedy_improvement(&mdp, &v).unwrap().argmax_actions();
        let b = greedy_improvement(&mdp, &shifted).unwrap().argmax_actions();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn improvement_does_not_decrease_value(seed in any::<u64>()) {
        let mdp = random_mdp(seed, 0.9);
        let pi = random_policy(mdp.n_states(), 4, seed ^ 8);
        let v = exact_policy_evaluation(&mdp, &pi).unwrap();
        let better = greedy_improvement(&mdp, &v).unwrap();
        let w = exact_policy_evaluation(&mdp, &better).unwrap();
        prop_assert!(v.values().iter().zip(w.values()).all(|(a, b)| *a <= b + 1e-10));
    }
}

#[test]
fn optimal_values_follow_shortest_paths() {
    for seed in 0..30 {
        let spec = common::random_spec(seed);
        let gamma = 0.95;
        let mdp = build_gridworld(&spec, gamma, &InitialDistMode::UniformAll).unwrap();
        let v = value_iteration(&mdp, 1e-13).unwrap().values;
        let lengths = spec.shortest_path_lengths();
        let expected: Vec<f64> = (0..mdp.n_states())
            .map(|s| if mdp.is_terminal(s) { 0.0 } else { gamma.powi(lengths[s] as i32 - 1) })
            .collect();
        assert!(max_diff(v.values(), &expected) < 1e-10, "seed {seed}");
    }
}

#[test]
fn default_map_greedy_policy_is_stable() {
    let mdp = build_gridworld(&GridSpec::default_map(), 0.9, &InitialDistMode::UniformAll).unwrap();
    let res = policy_iteration(&mdp, &PolicyTable::uniform(16, 4)).unwrap();
    let again = greedy_improvement(&mdp, &res.values).unwrap();
    assert_eq!(again.argmax_actions(), res.greedy_actions());
}
