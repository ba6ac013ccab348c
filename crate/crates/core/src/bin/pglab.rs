//! `pglab` command-line front end.
//!
//! Exit codes: 0 success, 1 usage or runtime error, 2 failed verification
//! (a `props` check failed or an experiment produced partial output).

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use pglab::approximators::SoftmaxTabularPolicy;
use pglab::config::RunConfig;
use pglab::distributions::{
    cesaro_average, discounted_visiting_frequency_from, long_run_distribution, stationary_distribution,
    t_step_distribution, transition_row_power, verify_proposition_2, ChainMode,
};
use pglab::experiments::{render_snapshot, run_experiment_1, run_experiment_2, write_experiment_1, write_experiment_2};
use pglab::gradients::{cosine_similarity, exact_policy_gradient, Estimator, GradientInputs};
use pglab::grid::{build_gridworld, Action};
use pglab::io::{create_file, write_state_table};
use pglab::mdp::{PolicyTable, StateDistribution, TabularMDP};
use pglab::sampling::seeded_rng;
use pglab::solvers::{exact_policy_evaluation, policy_iteration, value_iteration};

#[derive(Parser, Debug)]
#[command(name = "pglab", version, about = "Tabular gridworld policy-gradient laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand. Precedence: flags, then PGLAB_*
/// environment variables (PGLAB_GAMMA, PGLAB_SEED, ...), then the config
/// file, then defaults.
#[derive(Args, Debug, Clone)]
struct Common {
    /// TOML config file with [env], [train], [optim], [output], [tolerances].
    #[arg(long)]
    config: Option<PathBuf>,
    /// "default" for the built-in 4x6 map or a path to an ASCII map. [default: default]
    #[arg(long)]
    map: Option<String>,
    /// Discount factor in (0, 1). [default: 0.9]
    #[arg(long)]
    gamma: Option<f64>,
    /// How terminal states behave in the state chain. [default: restart]
    #[arg(long, value_parser = ["restart", "absorbing"])]
    chain_mode: Option<String>,
    /// Base seed; run k uses seed + k. [default: 0]
    #[arg(long)]
    seed: Option<u64>,
    /// Output file (solve, dist, render) or directory (grad, exp1, exp2). [default: stdout or "results"]
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
struct TrainFlags {
    /// Method to run; repeat for several. [default: the experiment's list]
    #[arg(long = "method")]
    methods: Vec<String>,
    /// Number of seeded runs. [default: 5]
    #[arg(long)]
    seeds: Option<usize>,
    /// Critic steps per policy update. [default: per case]
    #[arg(long)]
    m: Option<usize>,
    /// Policy step size. [default: 0.05 for exp1, 0.03 for exp2]
    #[arg(long)]
    lr_policy: Option<f64>,
    /// Critic step size. [default: SGD 0.5 for exp1, Adam 0.001 for exp2]
    #[arg(long)]
    lr_value: Option<f64>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum PolicyChoice {
    Uniform,
    Optimal,
    /// Always move up.
    Up,
    /// Xavier-initialized softmax logits from --seed.
    Random,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum DistChoice {
    Tstep,
    Dvf,
    Stationary,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum StartChoice {
    /// The configured d0.
    Initial,
    /// Stationary distribution of the policy's restart chain.
    Stationary,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Solver {
    Pi,
    Vi,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Exact optimal values and greedy policy as CSV.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "pi")]
        solver: Solver,
    },
    /// t-step, discounted visiting frequency or stationary distribution as CSV.
    Dist {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "stationary")]
        kind: DistChoice,
        #[arg(long, value_enum, default_value = "uniform")]
        policy: PolicyChoice,
        /// Step count for --kind tstep.
        #[arg(long, default_value_t = 1)]
        t: usize,
    },
    /// Checks the DVF/stationary identities and the ergodic limit; exit 2 on failure.
    Props {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "uniform")]
        policy: PolicyChoice,
    },
    /// Computes and compares exact gradient estimators on one policy.
    Grad {
        #[command(flatten)]
        common: Common,
        /// direct, indirect, unified, baseline1 or baseline2; repeat to compare.
        #[arg(long = "method", required = true)]
        methods: Vec<String>,
        /// Start distribution for the DVF and the d0-weighted estimators.
        #[arg(long, value_enum, default_value = "initial")]
        d0: StartChoice,
        #[arg(long, value_enum, default_value = "uniform")]
        policy: PolicyChoice,
    },
    /// Experiment 1: value-based vs indirect vs policy iteration.
    Exp1 {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Experiment 2: five gradient methods over the four cases.
    Exp2 {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: TrainFlags,
        /// Case id 1..4; repeat for several. [default: all]
        #[arg(long = "case")]
        cases: Vec<usize>,
    },
    /// SVG snapshot of a policy and its exact values.
    Render {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "optimal")]
        policy: PolicyChoice,
    },
}

type AnyResult<T> = Result<T, Box<dyn std::error::Error>>;

fn resolve(common: &Common, train: Option<&TrainFlags>, cases: &[usize]) -> AnyResult<RunConfig> {
    let mut flags: Vec<(&str, String)> = Vec::new();
    if let Some(v) = &common.map {
        flags.push(("map", v.clone()));
    }
    if let Some(v) = common.gamma {
        flags.push(("gamma", v.to_string()));
    }
    if let Some(v) = &common.chain_mode {
        flags.push(("chain-mode", v.clone()));
    }
    if let Some(v) = common.seed {
        flags.push(("seed", v.to_string()));
    }
    if let Some(v) = &common.out {
        flags.push(("out", v.display().to_string()));
    }
    if let Some(t) = train {
        if !t.methods.is_empty() {
            flags.push(("method", t.methods.join(",")));
        }
        if let Some(v) = t.seeds {
            flags.push(("seeds", v.to_string()));
        }
        if let Some(v) = t.m {
            flags.push(("m", v.to_string()));
        }
        if let Some(v) = t.lr_policy {
            flags.push(("lr-policy", v.to_string()));
        }
        if let Some(v) = t.lr_value {
            flags.push(("lr-value", v.to_string()));
        }
    }
    if !cases.is_empty() {
        let list: Vec<String> = cases.iter().map(|c| c.to_string()).collect();
        flags.push(("case", list.join(",")));
    }
    Ok(RunConfig::resolve(common.config.as_deref(), |k| std::env::var(k).ok(), &flags)?)
}

fn build_mdp(cfg: &RunConfig) -> AnyResult<TabularMDP> {
    Ok(build_gridworld(&cfg.grid_spec()?, cfg.env.gamma, &cfg.initial_mode())?)
}

fn make_policy(mdp: &TabularMDP, choice: PolicyChoice, seed: u64) -> AnyResult<SoftmaxTabularPolicy> {
    let (n, na) = (mdp.n_states(), mdp.n_actions());
    Ok(match choice {
        PolicyChoice::Uniform => SoftmaxTabularPolicy::zeros(n, na),
        PolicyChoice::Random => SoftmaxTabularPolicy::xavier(n, na, &mut seeded_rng(seed)),
        PolicyChoice::Up => SoftmaxTabularPolicy::biased(n, na, Action::Up.index(), 40.0),
        PolicyChoice::Optimal => {
            let greedy = policy_iteration(mdp, &PolicyTable::uniform(n, na))?.greedy_actions();
            let mut p = SoftmaxTabularPolicy::zeros(n, na);
            for (s, a) in greedy.into_iter().enumerate() {
                p.logits_mut()[s * na + a] = 40.0;
            }
            p
        }
    })
}

fn policy_table(mdp: &TabularMDP, choice: PolicyChoice, seed: u64) -> AnyResult<PolicyTable> {
    Ok(match choice {
        PolicyChoice::Optimal => policy_iteration(mdp, &PolicyTable::uniform(mdp.n_states(), mdp.n_actions()))?.policy,
        PolicyChoice::Up => PolicyTable::deterministic(mdp.n_actions(), &vec![Action::Up.index(); mdp.n_states()])?,
        other => make_policy(mdp, other, seed)?.to_table(),
    })
}

/// Writes to `out` when given, otherwise stdout.
fn with_output(out: Option<&Path>, f: impl FnOnce(&mut dyn Write) -> pglab::Result<()>) -> AnyResult<()> {
    match out {
        Some(p) => {
            let mut file = create_file(p)?;
            f(&mut file)?;
            file.flush()?;
        }
        None => {
            let stdout = std::io::stdout();
            let mut lock = stdout.lock();
            f(&mut lock)?;
        }
    }
    Ok(())
}

fn cmd_solve(common: &Common, solver: Solver) -> AnyResult<ExitCode> {
    let cfg = resolve(common, None, &[])?;
    let mdp = build_mdp(&cfg)?;
    let res = match solver {
        Solver::Pi => policy_iteration(&mdp, &PolicyTable::uniform(mdp.n_states(), mdp.n_actions()))?,
        Solver::Vi => value_iteration(&mdp, 1e-12)?,
    };
    with_output(common.out.as_deref(), |w| res.write_csv(w))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_dist(common: &Common, kind: DistChoice, policy: PolicyChoice, t: usize) -> AnyResult<ExitCode> {
    let cfg = resolve(common, None, &[])?;
    let mdp = build_mdp(&cfg)?;
    let table = policy_table(&mdp, policy, cfg.train.seed)?;
    let mode = cfg.env.chain_mode;
    let (column, values) = match kind {
        DistChoice::Tstep => ("probability", t_step_distribution(&mdp, &table, t, mode)?.probs().to_vec()),
        DistChoice::Dvf => (
            "visiting_frequency",
            discounted_visiting_frequency_from(&mdp, &table, cfg.env.gamma, mode, mdp.initial_dist())?
                .weights()
                .to_vec(),
        ),
        DistChoice::Stationary => {
            let d = match mode {
                ChainMode::Restart => long_run_distribution(&mdp, &table)?,
                ChainMode::Absorbing => stationary_distribution(&mdp, &table, mode, 1e-9)?,
            };
            ("probability", d.probs().to_vec())
        }
    };
    with_output(common.out.as_deref(), |w| write_state_table(w, column, &values))?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_props(common: &Common, policy: PolicyChoice) -> AnyResult<ExitCode> {
    let cfg = resolve(common, None, &[])?;
    let mdp = build_mdp(&cfg)?;
    let gamma = cfg.env.gamma;
    let table = policy_table(&mdp, policy, cfg.train.seed)?;
    let stationary = stationary_distribution(&mdp, &table, ChainMode::Restart, 1e-10)?;
    let mut all_ok = true;
    let mut check = |name: &str, ok: bool, detail: String| {
        println!("{} {name}: {detail}", if ok { "PASS" } else { "FAIL" });
        all_ok &= ok;
    };

    let w = discounted_visiting_frequency_from(&mdp, &table, gamma, ChainMode::Restart, &stationary)?;
    let gap1 = stationary.max_abs_diff(&w.scaled(1.0 - gamma));
    check("dvf from stationary start", gap1 < 1e-8, format!("‖(1−γ)·DVF − d^π‖∞ = {gap1:.3e} at γ = {gamma}"));

    let mut gammas = vec![0.9, 0.99, 0.999, 0.9999];
    if !gammas.contains(&gamma) {
        gammas.push(gamma);
        gammas.sort_by(f64::total_cmp);
    }
    let rows = verify_proposition_2(&mdp, &table, &gammas, None)?;
    let decreasing = rows.windows(2).all(|r| r[1].gap < r[0].gap);
    let listed: Vec<String> = rows.iter().map(|r| format!("γ={}: {:.3e}", r.discount, r.gap)).collect();
    check("gap decreases with γ", decreasing, listed.join(", "));
    let at = rows.iter().find(|r| r.discount == gamma).expect("requested γ is listed");
    if gamma >= 0.9999 {
        check("gap at requested γ", at.gap < 1e-3, format!("{:.3e} < 1e-3", at.gap));
    } else {
        println!("INFO gap at γ = {gamma}: {:.3e}", at.gap);
    }

    let s0 = mdp.initial_dist().support()[0];
    let row = transition_row_power(&mdp, &table, ChainMode::Restart, s0, 10_000)?;
    let power_gap = stationary.max_abs_diff(&row);
    check("P^t row converges", power_gap <= 1e-3, format!("t = 10000 from state {s0}: {power_gap:.3e}"));
    let avg = cesaro_average(&mdp, &table, ChainMode::Restart, s0, 100_000)?;
    let cesaro_gap = stationary.max_abs_diff(&avg);
    check("Cesàro average", cesaro_gap <= 1e-4, format!("N = 100000 from state {s0}: {cesaro_gap:.3e}"));

    Ok(if all_ok { ExitCode::SUCCESS } else { ExitCode::from(2) })
}

fn cmd_grad(common: &Common, methods: &[String], d0: StartChoice, policy: PolicyChoice) -> AnyResult<ExitCode> {
    let cfg = resolve(common, None, &[])?;
    let mdp = build_mdp(&cfg)?;
    let gamma = cfg.env.gamma;
    let estimators = methods
        .iter()
        .map(|m| m.parse::<Estimator>())
        .collect::<pglab::Result<Vec<_>>>()?;
    let softmax = make_policy(&mdp, policy, cfg.train.seed)?;
    let table = softmax.to_table();
    let stationary = long_run_distribution(&mdp, &table)?;
    let start: StateDistribution = match d0 {
        StartChoice::Initial => mdp.initial_dist().clone(),
        StartChoice::Stationary => stationary.clone(),
    };
    let true_value = exact_policy_evaluation(&mdp, &table)?.into_inner();
    let inputs = GradientInputs {
        dvf: discounted_visiting_frequency_from(&mdp, &table, gamma, cfg.env.chain_mode, &start)?
            .weights()
            .to_vec(),
        initial: start.probs().to_vec(),
        stationary: stationary.probs().to_vec(),
        // No critic here: the approximate value is the exact one.
        approx_value: true_value.clone(),
        true_value,
    };
    let reports = estimators
        .iter()
        .map(|e| exact_policy_gradient(&mdp, &softmax, *e, &inputs))
        .collect::<pglab::Result<Vec<_>>>()?;
    for r in &reports {
        println!("{}: l2 norm {:.12e}, max |g| {:.6e}", r.estimator(), r.norm(), r.max_abs());
    }
    for i in 0..reports.len() {
        for j in i + 1..reports.len() {
            let (a, b) = (&reports[i], &reports[j]);
            println!(
                "{} vs {}: cosine {:.12}, norm ratio {:.12}",
                a.estimator(),
                b.estimator(),
                cosine_similarity(a.grad(), b.grad()),
                a.norm() / b.norm()
            );
        }
    }
    println!("1/(1−γ) = {:.12}", 1.0 / (1.0 - gamma));
    if let Some(dir) = &common.out {
        for r in &reports {
            let mut f = create_file(&dir.join(format!("grad_{}.csv", r.estimator())))?;
            r.write_csv(&mut f)?;
            f.flush()?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn out_dir(cfg: &RunConfig, sub: &str) -> PathBuf {
    cfg.output.dir.join(sub)
}

fn cmd_exp1(common: &Common, train: &TrainFlags) -> AnyResult<ExitCode> {
    let cfg = resolve(common, Some(train), &[])?;
    let settings = cfg.exp1_settings()?;
    let res = run_experiment_1(&settings, cfg.train.seed)?;
    let dir = out_dir(&cfg, "exp1");
    let partial = write_experiment_1(&res, &dir)?;
    println!("method,iteration,mse_mean,mse_ci95");
    for method in res.traces.keys() {
        let c = res.mse_curve(*method)?;
        for it in [1, 5, 10, 11, 13, 15].into_iter().filter(|i| *i <= settings.iterations) {
            let i = it.min(c.len() - 1);
            println!("{},{it},{:.3e},{:.3e}", method.name(), c.mean[i], c.half_width[i]);
        }
    }
    println!("wrote {}", dir.display());
    if partial {
        eprintln!("warning: some runs aborted; output is partial (see status.csv)");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_exp2(common: &Common, train: &TrainFlags, cases: &[usize]) -> AnyResult<ExitCode> {
    let cfg = resolve(common, Some(train), cases)?;
    let settings = cfg.exp2_settings()?;
    let res = run_experiment_2(&settings, cfg.train.seed)?;
    let dir = out_dir(&cfg, "exp2");
    let partial = write_experiment_2(&res, &dir)?;
    println!("case,method,value_mean_initial,value_mean_stationary,entropy");
    for case in &res.cases {
        for method in case.traces.keys() {
            let f = |c: &str| case.curve(*method, c).map(|x| x.last_mean());
            println!(
                "{},{},{:.4},{:.4},{:.4}",
                case.case.case_id,
                method.name(),
                f("value_mean_initial")?,
                f("value_mean_stationary")?,
                f("entropy")?
            );
        }
    }
    println!("wrote {}", dir.display());
    if partial {
        eprintln!("warning: some runs aborted; output is partial (see case*/status.csv)");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_render(common: &Common, policy: PolicyChoice) -> AnyResult<ExitCode> {
    let cfg = resolve(common, None, &[])?;
    let spec = cfg.grid_spec()?;
    let mdp = build_mdp(&cfg)?;
    let table = policy_table(&mdp, policy, cfg.train.seed)?;
    let values = exact_policy_evaluation(&mdp, &table)?;
    let path = common.out.clone().unwrap_or_else(|| PathBuf::from("snapshot.svg"));
    render_snapshot(&spec, values.values(), &table, &format!("{policy:?} policy"), &path)?;
    println!("wrote {}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn run(cli: Cli) -> AnyResult<ExitCode> {
    match &cli.command {
        Command::Solve { common, solver } => cmd_solve(common, *solver),
        Command::Dist { common, kind, policy, t } => cmd_dist(common, *kind, *policy, *t),
        Command::Props { common, policy } => cmd_props(common, *policy),
        Command::Grad { common, methods, d0, policy } => cmd_grad(common, methods, *d0, *policy),
        Command::Exp1 { common, train } => cmd_exp1(common, train),
        Command::Exp2 { common, train, cases } => cmd_exp2(common, train, cases),
        Command::Render { common, policy } => cmd_render(common, *policy),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
