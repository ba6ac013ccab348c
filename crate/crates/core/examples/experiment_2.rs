//! One Experiment 2 case with the five gradient methods. The case id is the
//! first argument (default 4).

use pglab::experiments::{run_experiment_2, write_experiment_2, Exp2Settings};

fn main() -> pglab::Result<()> {
    let case: usize = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(4);
    let settings = Exp2Settings {
        runs: 3,
        policy_updates: 1000,
        hidden: vec![32, 32],
        cases: vec![case],
        ..Exp2Settings::default()
    };
    let res = run_experiment_2(&settings, 0)?;
    let c = &res.cases[0];
    println!("case {} (m = {}, {} start states)", c.case.case_id, c.case.m, c.case.support.len());
    println!("method      V(d0)    V(dπ)    entropy");
    for method in c.traces.keys() {
        let last = |col: &str| c.curve(*method, col).map(|x| x.last_mean());
        println!(
            "{:<10}  {:.4}   {:.4}   {:.4}",
            method.name(),
            last("value_mean_initial")?,
            last("value_mean_stationary")?,
            last("entropy")?
        );
    }
    let out = std::env::temp_dir().join("pglab_exp2");
    write_experiment_2(&res, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
