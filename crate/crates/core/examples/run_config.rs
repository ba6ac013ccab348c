//! Loads a run configuration, applies environment-style and flag overrides,
//! and prints the canonical form and the derived Experiment 2 settings.

use pglab::config::RunConfig;

const FILE: &str = r#"
[env]
map = "default"
gamma = 0.9

[train]
seeds = 3
cases = [3, 4]

[optim]
lr_policy = 0.02
"#;

fn main() -> pglab::Result<()> {
    let dir = std::env::temp_dir().join("pglab_run_config");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("run.toml");
    std::fs::write(&path, FILE)?;
    let env = |k: &str| (k == "PGLAB_SEED").then(|| "42".to_string());
    let cfg = RunConfig::resolve(Some(&path), env, &[("m", "10".to_string())])?;
    print!("{}", cfg.to_toml());
    let s = cfg.exp2_settings()?;
    for case in s.case_table()? {
        println!("case {}: {} start states, m = {}", case.case_id, case.support.len(), case.m);
    }
    match RunConfig::from_toml_str("[env]\ngamma = 1.2\n") {
        Err(e) => println!("rejected: {e}"),
        Ok(_) => unreachable!(),
    }
    Ok(())
}
