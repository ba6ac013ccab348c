use pglab::config::RunConfig;
use pglab::experiments::aggregate_runs;
use pglab::distributions::{sample_stationary, stationary_distribution, ChainMode};
use pglab::grid::{build_gridworld, GridSpec, InitialDistMode};
use pglab::io::fmt_f64;
use pglab::mdp::PolicyTable;
use pglab::sampling::seeded_rng;
use pglab::training::Method;
use proptest::prelude::*;

proptest! {
    #[test]
    fn floats_survive_csv_formatting(x in any::<f64>().prop_filter("finite", |x| x.is_finite())) {
        let text = fmt_f64(x);
        prop_assert_eq!(text.parse::<f64>().unwrap(), x);
    }

    #[test]
    fn config_round_trips(
        gamma in 0.01f64..0.99,
        seeds in 1usize..10,
        seed in any::<u32>(),
        lr in proptest::option::of(0.0f64..1.0),
        m in proptest::option::of(1usize..50),
        cases in proptest::collection::vec(1usize..5, 0..4),
        methods in proptest::sample::subsequence(Method::ALL.to_vec(), 0..4),
    ) {
        let mut cfg = RunConfig::default();
        cfg.env.gamma = gamma;
        cfg.train.seeds = seeds;
        cfg.train.seed = seed as u64;
        cfg.optim.lr_policy = lr;
        cfg.train.m = m;
        cfg.train.cases = cases;
        cfg.train.methods = methods;
        let text = cfg.to_toml();
        let back = RunConfig::from_toml_str(&text).unwrap();
        prop_assert_eq!(&back, &cfg);
        prop_assert_eq!(back.to_toml(), text);
    }
}

#[test]
fn csv_numbers_carry_17_significant_digits() {
    let s = fmt_f64(0.1);
    let mantissa = s.split('e').next().unwrap().replace(['.', '-'], "");
    assert_eq!(mantissa.len(), 17, "{s}");
}

#[test]
fn confidence_intervals_cover_the_exact_value() {
    let mdp = build_gridworld(&GridSpec::default_map(), 0.9, &InitialDistMode::UniformAll).unwrap();
    let pi = PolicyTable::uniform(16, 4);
    let exact = stationary_distribution(&mdp, &pi, ChainMode::Restart, 1e-12).unwrap().probs()[15];
    let mut rng = seeded_rng(21);
    let mut covered = 0;
    for _ in 0..5 {
        let runs: Vec<Vec<f64>> = (0..5)
            .map(|_| vec![sample_stationary(&mdp, &pi, 500, 20_000, &mut rng).unwrap().probs()[15]])
            .collect();
        let c = aggregate_runs(&runs).unwrap();
        if (c.mean[0] - exact).abs() <= c.half_width[0] {
            covered += 1;
        }
    }
    assert!(covered >= 4, "{covered}/5");
}
