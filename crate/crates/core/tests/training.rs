mod common;

use common::default_mdp;
use pglab::approximators::OptimizerConfig;
use pglab::experiments::{bound_check, is_nonincreasing, smooth};
use pglab::mdp::PolicyTable;
use pglab::solvers::policy_iteration;
use pglab::training::{
    policy_iteration_benchmark, run_direct, train, Benchmark, CriticKind, InnerIters, Method, PolicyInit, TrainConfig,
};

fn small(method: Method) -> TrainConfig {
    TrainConfig {
        method,
        hidden: vec![16, 16],
        policy_iters: 60,
        entropy_window: 0,
        ..TrainConfig::default()
    }
}

#[test]
fn robbins_monro_direct_shrinks_the_gradient() {
    let mdp = default_mdp(0.9);
    let cfg = TrainConfig {
        policy_optimizer: OptimizerConfig { robbins_monro: true, ..OptimizerConfig::sgd(50.0) },
        policy_iters: 1000,
        ..small(Method::Direct)
    };
    let trace = run_direct(&mdp, &cfg).unwrap();
    assert!(trace.last().grad_norm < trace.records[0].grad_norm);
}

#[test]
fn same_seed_same_trace() {
    let mdp = default_mdp(0.9);
    let cfg = small(Method::Unified);
    let csv = |cfg: &TrainConfig| {
        let mut out = Vec::new();
        train(&mdp, cfg, &Benchmark::EvaluatedPolicy).unwrap().write_csv(&mut out).unwrap();
        out
    };
    assert_eq!(csv(&cfg), csv(&cfg));
    assert_ne!(csv(&cfg), csv(&TrainConfig { seed: 1, ..cfg.clone() }));
}

#[test]
fn converged_indirect_run_matches_policy_iteration() {
    let mdp = default_mdp(0.9);
    let cfg = TrainConfig {
        m: InnerIters::Converge,
        critic: CriticKind::Exact,
        policy_iters: 12,
        policy_tol: 1e-9,
        policy_optimizer: OptimizerConfig::adam(0.05),
        policy_init: PolicyInit::Uniform,
        ..small(Method::Indirect)
    };
    let trace = train(&mdp, &cfg, &Benchmark::EvaluatedPolicy).unwrap();
    let greedy = policy_iteration(&mdp, &PolicyTable::uniform(16, 4)).unwrap().greedy_actions();
    let actions = trace.final_policy.argmax_actions();
    for s in mdp.non_terminal_states() {
        assert_eq!(actions[s], greedy[s], "state {s}");
    }
    let pi = policy_iteration(&mdp, &PolicyTable::uniform(16, 4)).unwrap();
    let b = bound_check(&mdp, &trace, pi.values.values()).unwrap();
    assert!(b.holds(), "{b:?}");
}

#[test]
fn dummy_start_is_evaluated_exactly() {
    let mdp = default_mdp(0.9);
    let up = PolicyTable::deterministic(4, &[0; 16]).unwrap();
    let bench = Benchmark::Sequence(policy_iteration_benchmark(&mdp, &up).unwrap());
    let cfg = TrainConfig {
        policy_init: PolicyInit::Dummy,
        critic: CriticKind::Exact,
        policy_iters: 3,
        ..small(Method::ValueBased)
    };
    let trace = train(&mdp, &cfg, &bench).unwrap();
    let v_up = pglab::solvers::exact_policy_evaluation(&mdp, &up).unwrap();
    let expected = v_up.weighted_mean(mdp.initial_dist().probs());
    assert!((trace.records[0].value_mean_initial - expected).abs() < 1e-12);
}

#[test]
fn entropy_decreases_after_smoothing() {
    let mdp = default_mdp(0.9);
    let mut monotone = 0;
    for seed in 0..5 {
        let cfg = TrainConfig {
            seed,
            policy_iters: 400,
            policy_optimizer: OptimizerConfig::adam(3e-2),
            ..small(Method::Direct)
        };
        let trace = run_direct(&mdp, &cfg).unwrap();
        let e = smooth(&trace.column("entropy").unwrap(), 10);
        if is_nonincreasing(&e, 1e-9) {
            monotone += 1;
        }
    }
    assert!(monotone >= 4, "{monotone}/5");
}
