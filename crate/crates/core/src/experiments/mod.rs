//! Multi-seed experiment drivers, aggregation with t-intervals and output
//! writers.
//!
//! Runs are independent and executed on a rayon pool; results are collected
//! in (case, method, seed) order so every output file is deterministic.

pub mod render;

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::approximators::OptimizerConfig;
use crate::distributions::ChainMode;
use crate::error::{Error, Result};
use crate::gradients::error_bound_diagnostic;
use crate::grid::{build_gridworld, Action, GridSpec, InitialDistMode};
use crate::io::{create_file, csv_writer, fmt_f64};
use crate::mdp::{PolicyTable, TabularMDP};
use crate::solvers::{exact_policy_evaluation, policy_iteration};
use crate::training::{
    policy_iteration_benchmark, train, Benchmark, CriticWeighting, Estimate, InnerIters, Method, PolicyInit,
    RunStatus, TrainConfig, TrainTrace,
};

pub use render::{line_chart_svg, render_snapshot, snapshot_svg, value_color};

/// One row of the Experiment 2 case table.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CaseSpec {
    pub case_id: usize,
    /// States the initial distribution is uniform over (terminal dropped
    /// when the MDP is built).
    pub support: Vec<usize>,
    pub m: usize,
}

impl CaseSpec {
    /// The four cases: full support or all-but-`excluded`, each with m = 5
    /// and m = 30.
    pub fn table(n_states: usize, excluded: usize) -> Result<Vec<CaseSpec>> {
        if excluded >= n_states {
            return Err(Error::input(format!("excluded state {excluded} out of range 0..{n_states}")));
        }
        let all: Vec<usize> = (0..n_states).collect();
        let reduced: Vec<usize> = all.iter().copied().filter(|&s| s != excluded).collect();
        Ok(vec![
            CaseSpec { case_id: 1, support: all.clone(), m: 5 },
            CaseSpec { case_id: 2, support: all, m: 30 },
            CaseSpec { case_id: 3, support: reduced.clone(), m: 5 },
            CaseSpec { case_id: 4, support: reduced, m: 30 },
        ])
    }

    pub fn initial_mode(&self) -> InitialDistMode {
        InitialDistMode::UniformSubset(self.support.clone())
    }
}

/// Per-iteration mean and 95% half-width over runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateCurve {
    pub mean: Vec<f64>,
    pub half_width: Vec<f64>,
    pub runs: usize,
}

impl AggregateCurve {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    pub fn last_mean(&self) -> f64 {
        self.mean.last().copied().unwrap_or(f64::NAN)
    }

    pub fn last_half_width(&self) -> f64 {
        self.half_width.last().copied().unwrap_or(f64::NAN)
    }
}

/// Two-sided 95% Student-t quantile with `runs − 1` degrees of freedom.
pub fn t_quantile_975(runs: usize) -> f64 {
    if runs < 2 {
        return 0.0;
    }
    StudentsT::new(0.0, 1.0, (runs - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.975)
}

/// Mean and 95% t-interval per index. Shorter series are padded with their
/// last value (a run that stopped early stays where it stopped). With fewer
/// than two series the interval is reported as zero width and a warning is
/// printed.
pub fn aggregate_runs(series: &[Vec<f64>]) -> Result<AggregateCurve> {
    if series.is_empty() || series.iter().any(|s| s.is_empty()) {
        return Err(Error::input("aggregate_runs needs at least one non-empty series"));
    }
    let runs = series.len();
    if runs < 2 {
        eprintln!("warning: confidence interval undefined for a single run; reporting zero width");
    }
    let len = series.iter().map(Vec::len).max().unwrap_or(0);
    let t = t_quantile_975(runs);
    let mut mean = Vec::with_capacity(len);
    let mut half_width = Vec::with_capacity(len);
    for i in 0..len {
        let xs: Vec<f64> = series.iter().map(|s| s[i.min(s.len() - 1)]).collect();
        let m = xs.iter().sum::<f64>() / runs as f64;
        let hw = if runs < 2 {
            0.0
        } else {
            let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (runs - 1) as f64;
            t * (var / runs as f64).sqrt()
        };
        mean.push(m);
        half_width.push(hw);
    }
    Ok(AggregateCurve { mean, half_width, runs })
}

/// Aggregates one trace column across runs.
pub fn aggregate_traces(traces: &[TrainTrace], column: &str) -> Result<AggregateCurve> {
    let series = traces.iter().map(|t| t.column(column)).collect::<Result<Vec<_>>>()?;
    aggregate_runs(&series)
}

/// First record index at which `column` drops below `threshold`.
pub fn first_below(trace: &TrainTrace, column: &str, threshold: f64) -> Result<Option<usize>> {
    Ok(trace.column(column)?.iter().position(|v| *v < threshold))
}

fn status_label(s: &RunStatus) -> String {
    match s {
        RunStatus::Converged => "converged".into(),
        RunStatus::IterationCap => "iteration_cap".into(),
        RunStatus::Aborted(why) => format!("aborted: {why}"),
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    let mut f = create_file(path)?;
    f.write_all(text.as_bytes())?;
    f.flush()?;
    Ok(())
}

fn write_trace(path: &Path, trace: &TrainTrace) -> Result<()> {
    let mut f = create_file(path)?;
    trace.write_csv(&mut f)?;
    f.flush()?;
    Ok(())
}

fn write_aggregate(path: &Path, columns: &[(&str, &AggregateCurve)]) -> Result<()> {
    let mut w = csv_writer(create_file(path)?);
    let mut header = vec!["iteration".to_string()];
    for (name, _) in columns {
        header.push(format!("{name}_mean"));
        header.push(format!("{name}_ci95"));
    }
    w.write_record(&header)?;
    let len = columns.iter().map(|(_, c)| c.len()).max().unwrap_or(0);
    for i in 0..len {
        let mut row = vec![i.to_string()];
        for (_, c) in columns {
            row.push(fmt_f64(c.mean.get(i).copied().unwrap_or(f64::NAN)));
            row.push(fmt_f64(c.half_width.get(i).copied().unwrap_or(f64::NAN)));
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

fn write_status(path: &Path, rows: &[(String, usize, &TrainTrace)]) -> Result<bool> {
    let mut w = csv_writer(create_file(path)?);
    w.write_record(["method", "run", "status", "iterations"])?;
    let mut partial = false;
    for (label, k, t) in rows {
        partial |= matches!(t.status, RunStatus::Aborted(_));
        w.write_record([label.clone(), k.to_string(), status_label(&t.status), t.iterations().to_string()])?;
    }
    w.flush()?;
    Ok(partial)
}

// ---------------------------------------------------------------------------
// Experiment 1

/// Experiment 1 settings: dummy all-"up" start, zero critic, outer loops that
/// run evaluation and improvement to convergence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Exp1Settings {
    pub map: GridSpec,
    pub discount: f64,
    pub initial: InitialDistMode,
    pub runs: usize,
    pub iterations: usize,
    pub hidden: Vec<usize>,
    pub value_optimizer: OptimizerConfig,
    pub policy_optimizer: OptimizerConfig,
    pub value_tol: f64,
    pub policy_tol: f64,
    pub max_pev_steps: usize,
    pub max_pim_steps: usize,
    pub chain_mode: ChainMode,
    pub methods: Vec<Method>,
}

impl Default for Exp1Settings {
    fn default() -> Self {
        Self {
            map: GridSpec::default_map(),
            discount: 0.9,
            initial: InitialDistMode::UniformAll,
            runs: 5,
            iterations: 15,
            hidden: vec![256, 256, 256],
            value_optimizer: OptimizerConfig::sgd(0.5),
            policy_optimizer: OptimizerConfig::adam(0.05),
            value_tol: 1e-4,
            policy_tol: 1e-9,
            max_pev_steps: 5000,
            max_pim_steps: 5000,
            chain_mode: ChainMode::Restart,
            methods: vec![Method::PolicyIteration, Method::ValueBased, Method::Indirect],
        }
    }
}

impl Exp1Settings {
    pub fn train_config(&self, method: Method, seed: u64, snapshots: bool) -> TrainConfig {
        TrainConfig {
            method,
            m: InnerIters::Converge,
            policy_iters: self.iterations,
            policy_tol: self.policy_tol,
            value_tol: self.value_tol,
            max_pev_steps: self.max_pev_steps,
            max_pim_steps: self.max_pim_steps,
            seed,
            policy_optimizer: self.policy_optimizer,
            value_optimizer: self.value_optimizer,
            chain_mode: self.chain_mode,
            critic: if method == Method::PolicyIteration {
                crate::training::CriticKind::Exact
            } else {
                crate::training::CriticKind::Mlp
            },
            hidden: self.hidden.clone(),
            zero_value_init: true,
            policy_init: PolicyInit::Dummy,
            dummy_action: Action::Up.index(),
            keep_snapshots: snapshots,
            ..TrainConfig::default()
        }
    }
}

/// Error-propagation bound check for one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub eps_max: f64,
    pub delta_max: f64,
    pub bound: f64,
    pub final_gap: f64,
}

impl BoundCheck {
    pub fn holds(&self) -> bool {
        self.final_gap <= self.bound
    }
}

/// Worst-case (ε, δ) over outer iterations and the resulting bound against
/// `‖v^π_final − v*‖∞`.
pub fn bound_check(mdp: &TabularMDP, trace: &TrainTrace, v_star: &[f64]) -> Result<BoundCheck> {
    let mut eps_max = 0.0f64;
    let mut delta_max = 0.0f64;
    for r in trace.records.iter().skip(1) {
        eps_max = eps_max.max(r.epsilon);
        delta_max = delta_max.max(r.delta);
    }
    let bound = error_bound_diagnostic(eps_max, delta_max, mdp.discount())?;
    let v = exact_policy_evaluation(mdp, &trace.final_policy)?;
    let final_gap = v.values().iter().zip(v_star).map(|(a, b)| (a - b).abs()).fold(0.0f64, f64::max);
    Ok(BoundCheck { eps_max, delta_max, bound, final_gap })
}

#[derive(Clone, Debug)]
pub struct Exp1Result {
    pub settings: Exp1Settings,
    pub mdp: TabularMDP,
    pub greedy_actions: Vec<usize>,
    pub v_star: Vec<f64>,
    /// `traces[method][run]`.
    pub traces: BTreeMap<Method, Vec<TrainTrace>>,
}

impl Exp1Result {
    pub fn mse_curve(&self, method: Method) -> Result<AggregateCurve> {
        let traces = self.traces.get(&method).ok_or_else(|| Error::input(format!("{} was not run", method.name())))?;
        aggregate_traces(traces, "value_mse")
    }

    /// True when some run aborted.
    pub fn partial(&self) -> bool {
        self.traces.values().flatten().any(|t| matches!(t.status, RunStatus::Aborted(_)))
    }
}

/// Runs every method for `settings.runs` seeds (`base_seed + k`).
pub fn run_experiment_1(settings: &Exp1Settings, base_seed: u64) -> Result<Exp1Result> {
    if settings.runs == 0 {
        return Err(Error::config("runs", "must be >= 1"));
    }
    let mdp = build_gridworld(&settings.map, settings.discount, &settings.initial)?;
    let up = PolicyTable::deterministic(mdp.n_actions(), &vec![Action::Up.index(); mdp.n_states()])?;
    let benchmark = Benchmark::Sequence(policy_iteration_benchmark(&mdp, &up)?);
    let pi = policy_iteration(&mdp, &up)?;

    let cells: Vec<(Method, usize)> = settings
        .methods
        .iter()
        .flat_map(|&m| (0..settings.runs).map(move |k| (m, k)))
        .collect();
    let outcomes: Vec<Result<TrainTrace>> = cells
        .par_iter()
        .map(|&(method, k)| {
            let cfg = settings.train_config(method, base_seed + k as u64, k == 0);
            train(&mdp, &cfg, &benchmark)
        })
        .collect();
    let mut traces: BTreeMap<Method, Vec<TrainTrace>> = BTreeMap::new();
    for ((method, _), t) in cells.into_iter().zip(outcomes) {
        traces.entry(method).or_default().push(t?);
    }
    Ok(Exp1Result {
        settings: settings.clone(),
        greedy_actions: pi.greedy_actions(),
        v_star: pi.values.into_inner(),
        mdp,
        traces,
    })
}

/// Writes run traces, `mse_table.csv`, `bounds.csv`, `status.csv` and the
/// snapshot SVGs of run 0 under `out`. Returns whether the output is partial.
pub fn write_experiment_1(result: &Exp1Result, out: &Path) -> Result<bool> {
    let mut status_rows = Vec::new();
    for (method, traces) in &result.traces {
        let dir = out.join(method.name());
        for (k, t) in traces.iter().enumerate() {
            write_trace(&dir.join(format!("run{k}.csv")), t)?;
            status_rows.push((method.name().to_string(), k, t));
        }
        if let Some(t) = traces.first() {
            for (i, snap) in t.snapshots.iter().enumerate() {
                render_snapshot(
                    &result.settings.map,
                    &snap.values,
                    &snap.policy,
                    &format!("{} iteration {i}", method.name()),
                    &dir.join("snapshots").join(format!("iter{i:02}.svg")),
                )?;
            }
        }
    }
    let partial = write_status(&out.join("status.csv"), &status_rows)?;

    let mut w = csv_writer(create_file(&out.join("mse_table.csv"))?);
    w.write_record(["method", "iteration", "mse_mean", "mse_ci95", "runs"])?;
    for method in result.traces.keys() {
        let curve = result.mse_curve(*method)?;
        for it in 1..=result.settings.iterations {
            let i = it.min(curve.len() - 1);
            w.write_record([
                method.name().to_string(),
                it.to_string(),
                fmt_f64(curve.mean[i]),
                fmt_f64(curve.half_width[i]),
                curve.runs.to_string(),
            ])?;
        }
    }
    w.flush()?;

    if let Some(indirect) = result.traces.get(&Method::Indirect) {
        let mut w = csv_writer(create_file(&out.join("bounds.csv"))?);
        w.write_record(["run", "eps_max", "delta_max", "bound", "final_gap", "holds"])?;
        for (k, t) in indirect.iter().enumerate() {
            let b = bound_check(&result.mdp, t, &result.v_star)?;
            w.write_record([
                k.to_string(),
                fmt_f64(b.eps_max),
                fmt_f64(b.delta_max),
                fmt_f64(b.bound),
                fmt_f64(b.final_gap),
                b.holds().to_string(),
            ])?;
        }
        w.flush()?;
    }
    if partial {
        write_text(&out.join("PARTIAL"), "at least one run aborted; see status.csv\n")?;
    }
    Ok(partial)
}

// ---------------------------------------------------------------------------
// Experiment 2

pub const EXP2_METHODS: [Method; 5] = [
    Method::Direct,
    Method::Indirect,
    Method::Unified,
    Method::Baseline1,
    Method::Baseline2,
];

/// Metrics aggregated and charted per case.
pub const EXP2_METRICS: [&str; 4] = ["value_mean_initial", "value_mean_stationary", "entropy", "value_mse"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Exp2Settings {
    pub map: GridSpec,
    pub discount: f64,
    pub runs: usize,
    pub policy_updates: usize,
    pub hidden: Vec<usize>,
    pub value_optimizer: OptimizerConfig,
    pub policy_optimizer: OptimizerConfig,
    pub critic_weighting: CriticWeighting,
    pub entropy_tol: f64,
    pub entropy_window: usize,
    pub policy_tol: f64,
    /// State left out of the initial support in cases 3 and 4; defaults to
    /// the last state.
    pub excluded_state: Option<usize>,
    /// Case ids to run (1..=4).
    pub cases: Vec<usize>,
    /// Overrides the case's m when set.
    pub m_override: Option<usize>,
    pub methods: Vec<Method>,
    pub chain_mode: ChainMode,
    pub dist_estimate: Estimate,
    pub true_value_estimate: Estimate,
}

impl Default for Exp2Settings {
    fn default() -> Self {
        Self {
            map: GridSpec::default_map(),
            discount: 0.9,
            runs: 5,
            policy_updates: 2000,
            hidden: vec![256, 256, 256],
            value_optimizer: OptimizerConfig::adam(1e-3),
            policy_optimizer: OptimizerConfig::adam(3e-2),
            critic_weighting: CriticWeighting::Stationary,
            entropy_tol: 1e-6,
            entropy_window: 100,
            policy_tol: 1e-6,
            excluded_state: None,
            cases: vec![1, 2, 3, 4],
            m_override: None,
            methods: EXP2_METHODS.to_vec(),
            chain_mode: ChainMode::Restart,
            dist_estimate: Estimate::Exact,
            true_value_estimate: Estimate::Exact,
        }
    }
}

impl Exp2Settings {
    pub fn case_table(&self) -> Result<Vec<CaseSpec>> {
        let n = self.map.n_states();
        let excluded = self.excluded_state.unwrap_or(n - 1);
        let all = CaseSpec::table(n, excluded)?;
        let mut picked = Vec::new();
        for &c in &self.cases {
            let mut case = all
                .iter()
                .find(|x| x.case_id == c)
                .cloned()
                .ok_or_else(|| Error::config("case", format!("{c} is not in 1..=4")))?;
            if let Some(m) = self.m_override {
                case.m = m;
            }
            picked.push(case);
        }
        Ok(picked)
    }

    pub fn train_config(&self, method: Method, m: usize, seed: u64) -> TrainConfig {
        TrainConfig {
            method,
            m: InnerIters::Fixed(m),
            policy_iters: self.policy_updates,
            policy_tol: self.policy_tol,
            entropy_tol: self.entropy_tol,
            entropy_window: self.entropy_window,
            seed,
            policy_optimizer: self.policy_optimizer,
            value_optimizer: self.value_optimizer,
            chain_mode: self.chain_mode,
            critic_weighting: self.critic_weighting,
            hidden: self.hidden.clone(),
            policy_init: PolicyInit::Xavier,
            dist_estimate: self.dist_estimate,
            true_value_estimate: self.true_value_estimate,
            ..TrainConfig::default()
        }
    }
}

#[derive(Clone, Debug)]
pub struct CaseResult {
    pub case: CaseSpec,
    pub mdp: TabularMDP,
    /// `traces[method][run]`.
    pub traces: BTreeMap<Method, Vec<TrainTrace>>,
}

impl CaseResult {
    pub fn curve(&self, method: Method, column: &str) -> Result<AggregateCurve> {
        let traces = self.traces.get(&method).ok_or_else(|| Error::input(format!("{} was not run", method.name())))?;
        aggregate_traces(traces, column)
    }
}

#[derive(Clone, Debug)]
pub struct Exp2Result {
    pub settings: Exp2Settings,
    pub cases: Vec<CaseResult>,
}

impl Exp2Result {
    pub fn case(&self, id: usize) -> Option<&CaseResult> {
        self.cases.iter().find(|c| c.case.case_id == id)
    }

    pub fn partial(&self) -> bool {
        self.cases
            .iter()
            .flat_map(|c| c.traces.values().flatten())
            .any(|t| matches!(t.status, RunStatus::Aborted(_)))
    }
}

/// Runs the (case × method × seed) grid.
pub fn run_experiment_2(settings: &Exp2Settings, base_seed: u64) -> Result<Exp2Result> {
    if settings.runs == 0 {
        return Err(Error::config("runs", "must be >= 1"));
    }
    let cases = settings.case_table()?;
    let mdps = cases
        .iter()
        .map(|c| build_gridworld(&settings.map, settings.discount, &c.initial_mode()))
        .collect::<Result<Vec<_>>>()?;
    let cells: Vec<(usize, Method, usize)> = (0..cases.len())
        .flat_map(|ci| {
            settings
                .methods
                .iter()
                .flat_map(move |&m| (0..settings.runs).map(move |k| (ci, m, k)))
        })
        .collect();
    let outcomes: Vec<Result<TrainTrace>> = cells
        .par_iter()
        .map(|&(ci, method, k)| {
            let cfg = settings.train_config(method, cases[ci].m, base_seed + k as u64);
            train(&mdps[ci], &cfg, &Benchmark::EvaluatedPolicy)
        })
        .collect();
    let mut results: Vec<CaseResult> = cases
        .into_iter()
        .zip(mdps)
        .map(|(case, mdp)| CaseResult { case, mdp, traces: BTreeMap::new() })
        .collect();
    for ((ci, method, _), t) in cells.into_iter().zip(outcomes) {
        results[ci].traces.entry(method).or_default().push(t?);
    }
    Ok(Exp2Result {
        settings: settings.clone(),
        cases: results,
    })
}

/// Writes `case{c}/{method}/run{k}.csv`, per-method `aggregate.csv`, a
/// `final.csv` summary, `status.csv` and one SVG chart per metric and case.
pub fn write_experiment_2(result: &Exp2Result, out: &Path) -> Result<bool> {
    let mut partial = false;
    for case in &result.cases {
        let case_dir = out.join(format!("case{}", case.case.case_id));
        let mut status_rows = Vec::new();
        let mut curves: BTreeMap<Method, Vec<AggregateCurve>> = BTreeMap::new();
        for (method, traces) in &case.traces {
            let dir = case_dir.join(method.name());
            for (k, t) in traces.iter().enumerate() {
                write_trace(&dir.join(format!("run{k}.csv")), t)?;
                status_rows.push((method.name().to_string(), k, t));
            }
            let cs = EXP2_METRICS
                .iter()
                .map(|m| aggregate_traces(traces, m))
                .collect::<Result<Vec<_>>>()?;
            let cols: Vec<(&str, &AggregateCurve)> = EXP2_METRICS.iter().copied().zip(cs.iter()).collect();
            write_aggregate(&dir.join("aggregate.csv"), &cols)?;
            curves.insert(*method, cs);
        }
        partial |= write_status(&case_dir.join("status.csv"), &status_rows)?;

        let mut w = csv_writer(create_file(&case_dir.join("final.csv"))?);
        let mut header = vec!["method".to_string()];
        for m in EXP2_METRICS {
            header.push(format!("{m}_mean"));
            header.push(format!("{m}_ci95"));
        }
        w.write_record(&header)?;
        for (method, cs) in &curves {
            let mut row = vec![method.name().to_string()];
            for c in cs {
                row.push(fmt_f64(c.last_mean()));
                row.push(fmt_f64(c.last_half_width()));
            }
            w.write_record(&row)?;
        }
        w.flush()?;

        for (i, metric) in EXP2_METRICS.iter().enumerate() {
            let series: Vec<(String, &AggregateCurve)> =
                curves.iter().map(|(m, cs)| (m.name().to_string(), &cs[i])).collect();
            let title = format!("case {} (m = {}): {metric}", case.case.case_id, case.case.m);
            write_text(&case_dir.join(format!("{metric}.svg")), &line_chart_svg(&title, metric, &series))?;
        }
    }
    if partial {
        write_text(&out.join("PARTIAL"), "at least one run aborted; see case*/status.csv\n")?;
    }
    Ok(partial)
}

/// Moving average with a trailing window (shorter at the start).
pub fn smooth(xs: &[f64], window: usize) -> Vec<f64> {
    let w = window.max(1);
    (0..xs.len())
        .map(|i| {
            let lo = (i + 1).saturating_sub(w);
            xs[lo..=i].iter().sum::<f64>() / (i + 1 - lo) as f64
        })
        .collect()
}

/// Whether a series never increases by more than `tol`.
pub fn is_nonincreasing(xs: &[f64], tol: f64) -> bool {
    xs.windows(2).all(|w| w[1] <= w[0] + tol)
}
