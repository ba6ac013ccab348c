use std::process::Command;

fn pglab(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_pglab"))
        .args(args)
        .env_remove("PGLAB_GAMMA")
        .env_remove("PGLAB_SEED")
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn solve_writes_values_and_greedy_actions() {
    let (code, out, _) = pglab(&["solve", "--map", "default", "--gamma", "0.9"]);
    assert_eq!(code, 0);
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("state,value,greedy_action"));
    let row15: Vec<&str> = lines.nth(15).unwrap().split(',').collect();
    assert_eq!(row15[0], "15");
    assert!((row15[1].parse::<f64>().unwrap() - 0.81).abs() < 1e-12);
}

#[test]
fn props_passes_near_unit_discount() {
    let (code, out, _) = pglab(&["props", "--gamma", "0.9999"]);
    assert_eq!(code, 0, "{out}");
    assert!(out.contains("PASS gap at requested γ"));
    assert!(!out.contains("FAIL"));
}

#[test]
fn grad_reports_the_stationary_scaling() {
    let (code, out, _) = pglab(&["grad", "--method", "direct", "--method", "baseline2", "--d0", "stationary"]);
    assert_eq!(code, 0);
    let line = out.lines().find(|l| l.starts_with("direct vs baseline2")).unwrap();
    let num = |key: &str| -> f64 {
        line.split(key).nth(1).unwrap().trim().split(',').next().unwrap().parse().unwrap()
    };
    assert!(num("cosine") >= 0.999999);
    assert!((num("norm ratio") - 10.0).abs() < 1e-6);
}

#[test]
fn usage_errors_exit_one() {
    let (code, _, err) = pglab(&["frobnicate"]);
    assert_eq!(code, 1);
    assert!(err.contains("Usage"));
    let (code, _, err) = pglab(&["solve", "--no-such-flag"]);
    assert_eq!(code, 1);
    assert!(!err.is_empty());
    let (code, _, err) = pglab(&["solve", "--gamma", "1.2"]);
    assert_eq!(code, 1);
    assert!(err.contains("env.gamma"));
}

#[test]
fn env_overrides_file_and_flags_override_env() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[env]\ngamma = 0.5\n").unwrap();
    let run = |env: Option<&str>, flag: Option<&str>| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_pglab"));
        cmd.args(["solve", "--config", cfg.to_str().unwrap()]);
        if let Some(g) = flag {
            cmd.args(["--gamma", g]);
        }
        match env {
            Some(g) => cmd.env("PGLAB_GAMMA", g),
            None => cmd.env_remove("PGLAB_GAMMA"),
        };
        let out = String::from_utf8(cmd.output().unwrap().stdout).unwrap();
        // State 15 is three moves from the goal: v = γ².
        out.lines().nth(16).unwrap().split(',').nth(1).unwrap().parse::<f64>().unwrap()
    };
    assert!((run(None, None) - 0.25).abs() < 1e-12);
    assert!((run(Some("0.7"), None) - 0.49).abs() < 1e-12);
    assert!((run(Some("0.7"), Some("0.8")) - 0.64).abs() < 1e-12);
}

#[test]
fn dist_and_render_write_files() {
    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("d.csv");
    let (code, _, _) = pglab(&["dist", "--kind", "stationary", "--out", csv.to_str().unwrap()]);
    assert_eq!(code, 0);
    let text = std::fs::read_to_string(&csv).unwrap();
    let total: f64 = text.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse::<f64>().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
    let svg = dir.path().join("s.svg");
    let (code, _, _) = pglab(&["render", "--policy", "uniform", "--out", svg.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(std::fs::read_to_string(&svg).unwrap().starts_with("<svg"));
}

#[test]
fn tiny_experiment_runs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("tiny.toml");
    std::fs::write(&cfg, "[train]\nseeds = 2\npolicy_updates = 20\nhidden = [8]\n").unwrap();
    let run = |sub: &str| {
        let (code, _, err) = pglab(&[
            "exp2", "--config", cfg.to_str().unwrap(), "--case", "4", "--method", "indirect", "--seed", "3",
            "--out", dir.path().join(sub).to_str().unwrap(),
        ]);
        assert_eq!(code, 0, "{err}");
        std::fs::read(dir.path().join(sub).join("exp2/case4/indirect/run1.csv")).unwrap()
    };
    assert_eq!(run("a"), run("b"));
}
