//! A reduced Experiment 1: value-based and indirect methods against the
//! policy-iteration benchmark. Pass `full` for the 5-run, 256-wide setting.

use pglab::experiments::{bound_check, run_experiment_1, write_experiment_1, Exp1Settings};
use pglab::training::Method;

fn main() -> pglab::Result<()> {
    let full = std::env::args().any(|a| a == "full");
    let settings = if full {
        Exp1Settings::default()
    } else {
        Exp1Settings { runs: 2, hidden: vec![64, 64], ..Exp1Settings::default() }
    };
    let res = run_experiment_1(&settings, 0)?;
    for method in [Method::ValueBased, Method::Indirect] {
        let c = res.mse_curve(method)?;
        let row: Vec<String> = (1..c.len()).map(|i| format!("{:.0e}", c.mean[i])).collect();
        println!("{:<12} MSE by iteration: {}", method.name(), row.join(" "));
    }
    for t in &res.traces[&Method::Indirect] {
        let b = bound_check(&res.mdp, t, &res.v_star)?;
        println!("indirect: final gap {:.2e} <= bound {:.2e}: {}", b.final_gap, b.bound, b.holds());
    }
    let out = std::env::temp_dir().join("pglab_exp1");
    write_experiment_1(&res, &out)?;
    println!("wrote {}", out.display());
    Ok(())
}
