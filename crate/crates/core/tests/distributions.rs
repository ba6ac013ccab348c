mod common;

use common::{default_mdp, max_diff, random_mdp, random_policy};
use pglab::distributions::{
    cesaro_average, check_ergodic, discounted_visiting_frequency, discounted_visiting_frequency_from, dvf_series,
    sample_dvf, stationary_distribution, t_step_distribution, t_step_distribution_from, transition_row_power, verify_proposition_2, ChainMode,
};
use pglab::mdp::PolicyTable;
use pglab::sampling::seeded_rng;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn dvf_solve_matches_truncated_series(seed in any::<u64>(), gamma in 0.1f64..0.95) {
        let mdp = random_mdp(seed, gamma);
        let pi = random_policy(mdp.n_states(), 4, seed ^ 1);
        let solved = discounted_visiting_frequency(&mdp, &pi, gamma, ChainMode::Restart).unwrap();
        let horizon = (1e-14f64.ln() / gamma.ln()).ceil() as usize;
        let series = dvf_series(&mdp, &pi, gamma, ChainMode::Restart, mdp.initial_dist(), horizon).unwrap();
        prop_assert!(max_diff(solved.weights(), &series) < 1e-9);
    }

    #[test]
    fn dvf_mass_is_geometric(seed in any::<u64>(), gamma in 0.1f64..0.99) {
        let mdp = random_mdp(seed, gamma);
        let pi = random_policy(mdp.n_states(), 4, seed ^ 2);
        let w = discounted_visiting_frequency(&mdp, &pi, gamma, ChainMode::Restart).unwrap();
        prop_assert!((w.total_mass() * (1.0 - gamma) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn t_step_distributions_stay_normalized(seed in any::<u64>(), t in 0usize..60) {
        let mdp = random_mdp(seed, 0.9);
        let pi = random_policy(mdp.n_states(), 4, seed ^ 3);
        let d = t_step_distribution(&mdp, &pi, t, ChainMode::Restart).unwrap();
        prop_assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(d.probs().iter().all(|p| *p >= 0.0));
    }

    #[test]
    fn stationary_start_makes_rescaled_dvf_exact(seed in any::<u64>(), gamma in 0.1f64..0.999) {
        let mdp = random_mdp(seed, gamma);
        let pi = random_policy(mdp.n_states(), 4, seed ^ 4);
        let d = stationary_distribution(&mdp, &pi, ChainMode::Restart, 1e-10).unwrap();
        let w = discounted_visiting_frequency_from(&mdp, &pi, gamma, ChainMode::Restart, &d).unwrap();
        prop_assert!(d.max_abs_diff(&w.scaled(1.0 - gamma)) < 1e-8);
    }

    #[test]
    fn rescaled_dvf_gap_shrinks_with_discount(seed in any::<u64>()) {
        let mdp = random_mdp(seed, 0.9);
        let pi = random_policy(mdp.n_states(), 4, seed ^ 5);
        let rows = verify_proposition_2(&mdp, &pi, &[0.9, 0.99, 0.999, 0.9999], None).unwrap();
        prop_assert!(rows.windows(2).all(|r| r[1].gap <= r[0].gap));
    }

    #[test]
    fn stationary_is_a_fixed_point(seed in any::<u64>()) {
        let mdp = random_mdp(seed, 0.9);
        let pi = random_policy(mdp.n_states(), 4, seed ^ 6);
        let d = stationary_distribution(&mdp, &pi, ChainMode::Restart, 1e-10).unwrap();
        for &t in mdp.terminal_states() {
            prop_assert_eq!(d.probs()[t], 0.0);
        }
        let moved = t_step_distribution_from(&mdp, &pi, 1, ChainMode::Restart, &d).unwrap();
        prop_assert!(d.max_abs_diff(moved.probs()) < 1e-10);
    }
}

#[test]
fn transition_rows_converge_to_stationary() {
    let mdp = default_mdp(0.9);
    let pi = PolicyTable::uniform(16, 4);
    check_ergodic(&mdp, &pi, ChainMode::Restart).unwrap();
    let d = stationary_distribution(&mdp, &pi, ChainMode::Restart, 1e-12).unwrap();
    for s0 in [0, 5, 15] {
        let row = transition_row_power(&mdp, &pi, ChainMode::Restart, s0, 10_000).unwrap();
        assert!(d.max_abs_diff(&row) <= 1e-3);
        let avg = cesaro_average(&mdp, &pi, ChainMode::Restart, s0, 100_000).unwrap();
        assert!(d.max_abs_diff(&avg) <= 1e-4, "Cesàro from {s0}");
    }
}

#[test]
fn sampled_dvf_matches_exact() {
    let gamma = 0.9;
    let mdp = default_mdp(gamma);
    let pi = PolicyTable::uniform(16, 4);
    let exact = discounted_visiting_frequency(&mdp, &pi, gamma, ChainMode::Restart).unwrap();
    let sampled = sample_dvf(&mdp, &pi, gamma, ChainMode::Restart, 20_000, &mut seeded_rng(9)).unwrap();
    assert!(max_diff(sampled.probs(), &exact.scaled(1.0 - gamma)) < 1e-2);
}

#[test]
fn absorbing_chain_has_no_stationary_distribution() {
    let mdp = default_mdp(0.9);
    let pi = PolicyTable::uniform(16, 4);
    assert!(stationary_distribution(&mdp, &pi, ChainMode::Absorbing, 1e-10).is_err());
}
