//! Outer training loops: the direct gradient loop, the indirect PEV/PIM
//! alternation, and the value-based special case with an implicit greedy
//! policy.
//!
//! Two regimes share one loop. With `m = "converge"` every outer iteration
//! runs policy evaluation (PEV) to convergence and then policy improvement
//! (PIM) to convergence. With `m = k` every outer iteration runs `k` critic
//! steps followed by a single policy step.
//!
//! Record 0 describes the initial parameters; record `k` is taken after outer
//! iteration `k`.

use std::io::Write;
use std::time::Instant;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::approximators::{
    mean_table_entropy, Direction, MlpValueFunction, Optimizer, OptimizerConfig,
    SoftmaxTabularPolicy,
};
use crate::distributions::{
    discounted_visiting_frequency, long_run_distribution, sample_dvf, sample_stationary, ChainMode,
};
use crate::error::{Error, Result};
use crate::gradients::{
    default_horizon, exact_policy_gradient, expected_td_targets, mask_terminal, mc_target,
    Estimator, GradientInputs, ValueSource, DistKind,
};
use crate::io::{csv_writer, fmt_f64};
use crate::mdp::{apply_bellman_operator, apply_self_consistency_operator, PolicyTable, StateVector, TabularMDP};
use crate::sampling::{seeded_rng, Rng64};
use crate::solvers::{exact_policy_evaluation, greedy_improvement, policy_iteration};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Direct,
    Indirect,
    Unified,
    Baseline1,
    Baseline2,
    ValueBased,
    PolicyIteration,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Direct,
        Method::Indirect,
        Method::Unified,
        Method::Baseline1,
        Method::Baseline2,
        Method::ValueBased,
        Method::PolicyIteration,
    ];

    /// The gradient estimator behind a policy-gradient method.
    pub fn estimator(self) -> Option<Estimator> {
        match self {
            Method::Direct => Some(Estimator::Direct),
            Method::Indirect => Some(Estimator::Indirect),
            Method::Unified => Some(Estimator::Unified),
            Method::Baseline1 => Some(Estimator::Baseline1),
            Method::Baseline2 => Some(Estimator::Baseline2),
            Method::ValueBased | Method::PolicyIteration => None,
        }
    }

    pub fn uses_critic(self) -> bool {
        match self.estimator() {
            Some(e) => e.uses_critic(),
            None => true,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Method::ValueBased => "value_based",
            Method::PolicyIteration => "policy_iteration",
            other => other.estimator().expect("gradient method").name(),
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::input(format!("unknown method {s:?}")))
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Critic updates per policy update: a fixed count, or until convergence.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum InnerIters {
    Fixed(usize),
    Converge,
}

impl Serialize for InnerIters {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            InnerIters::Fixed(m) => s.serialize_u64(*m as u64),
            InnerIters::Converge => s.serialize_str("converge"),
        }
    }
}

impl<'de> Deserialize<'de> for InnerIters {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(u64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Int(m) => Ok(InnerIters::Fixed(m as usize)),
            Repr::Str(s) if s == "converge" => Ok(InnerIters::Converge),
            Repr::Str(s) => Err(serde::de::Error::custom(format!(
                "expected an integer or \"converge\", got {s:?}"
            ))),
        }
    }
}

impl std::str::FromStr for InnerIters {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        if s == "converge" {
            return Ok(InnerIters::Converge);
        }
        s.parse()
            .map(InnerIters::Fixed)
            .map_err(|_| Error::input(format!("m must be an integer or \"converge\", got {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticKind {
    /// MLP trained by gradient steps.
    Mlp,
    /// Exact table: every evaluation is the exact linear solve.
    Exact,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticTarget {
    /// `r + γ V_old(s')`, expectation enumerated through the model.
    Td,
    /// Monte-Carlo returns, fixed for the duration of one evaluation.
    Mc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CriticWeighting {
    Initial,
    Stationary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimate {
    Exact,
    Sampled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyInit {
    /// Seeded Xavier-uniform logits.
    Xavier,
    /// All logits zero.
    Uniform,
    /// `dummy_logit` on `dummy_action` in every state.
    Dummy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub method: Method,
    /// Critic updates per policy update.
    pub m: InnerIters,
    /// Outer iteration cap.
    pub policy_iters: usize,
    /// Stop when the policy gradient max-norm drops below this.
    pub policy_tol: f64,
    /// Critic convergence: TD residual max-norm over weighted states.
    pub value_tol: f64,
    /// Critic convergence: max-norm output change of one step.
    pub value_change_tol: f64,
    pub max_pev_steps: usize,
    pub max_pim_steps: usize,
    /// Stop when mean entropy moved less than `entropy_tol` over the last
    /// `entropy_window` updates. A zero window disables the rule.
    pub entropy_tol: f64,
    pub entropy_window: usize,
    pub seed: u64,
    pub policy_optimizer: OptimizerConfig,
    pub value_optimizer: OptimizerConfig,
    pub chain_mode: ChainMode,
    pub critic: CriticKind,
    pub critic_target: CriticTarget,
    pub critic_weighting: CriticWeighting,
    pub hidden: Vec<usize>,
    /// Start the critic's output layer at zero so `V ≡ 0`.
    pub zero_value_init: bool,
    pub policy_init: PolicyInit,
    pub dummy_action: usize,
    pub dummy_logit: f64,
    pub dist_estimate: Estimate,
    pub true_value_estimate: Estimate,
    pub mc_rollouts: usize,
    pub dvf_trajectories: usize,
    pub stationary_samples: usize,
    pub keep_snapshots: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            method: Method::Indirect,
            m: InnerIters::Fixed(5),
            policy_iters: 2000,
            policy_tol: 1e-6,
            value_tol: 1e-4,
            value_change_tol: 1e-8,
            max_pev_steps: 5000,
            max_pim_steps: 5000,
            entropy_tol: 1e-6,
            entropy_window: 100,
            seed: 0,
            policy_optimizer: OptimizerConfig::adam(1e-2),
            value_optimizer: OptimizerConfig::adam(1e-3),
            chain_mode: ChainMode::Restart,
            critic: CriticKind::Mlp,
            critic_target: CriticTarget::Td,
            critic_weighting: CriticWeighting::Initial,
            hidden: vec![256, 256, 256],
            zero_value_init: false,
            policy_init: PolicyInit::Xavier,
            dummy_action: 0,
            dummy_logit: 10.0,
            dist_estimate: Estimate::Exact,
            true_value_estimate: Estimate::Exact,
            mc_rollouts: 1000,
            dvf_trajectories: 1000,
            stationary_samples: 100_000,
            keep_snapshots: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m == InnerIters::Fixed(0) {
            return Err(Error::config("m", "must be >= 1 or \"converge\""));
        }
        for (field, v) in [
            ("policy_tol", self.policy_tol),
            ("value_tol", self.value_tol),
            ("value_change_tol", self.value_change_tol),
        ] {
            if !(v > 0.0) {
                return Err(Error::config(field, "must be > 0"));
            }
        }
        if self.entropy_window > 0 && !(self.entropy_tol > 0.0) {
            return Err(Error::config("entropy_tol", "must be > 0"));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(Error::config("hidden", "needs at least one positive width"));
        }
        for (field, v) in [
            ("mc_rollouts", self.mc_rollouts),
            ("dvf_trajectories", self.dvf_trajectories),
            ("stationary_samples", self.stationary_samples),
            ("max_pev_steps", self.max_pev_steps),
            ("max_pim_steps", self.max_pim_steps),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be >= 1"));
            }
        }
        self.policy_optimizer
            .validate()
            .map_err(|_| Error::config("policy_optimizer.step_size", "must be finite and >= 0"))?;
        self.value_optimizer
            .validate()
            .map_err(|_| Error::config("value_optimizer.step_size", "must be finite and >= 0"))?;
        Ok(())
    }
}

/// One row of a training trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iteration: usize,
    /// Mean squared error of the critic against the benchmark values;
    /// NaN for methods without a critic.
    pub value_mse: f64,
    pub value_mean_initial: f64,
    pub value_mean_stationary: f64,
    pub entropy: f64,
    /// `‖V_w − v^π‖∞` for the policy the critic was fitted to.
    pub epsilon: f64,
    /// `‖T_π' V − T_* V‖∞` for the improved policy.
    pub delta: f64,
    pub grad_norm: f64,
    /// Not part of the CSV so that traces stay byte-reproducible.
    #[serde(skip)]
    pub elapsed_secs: f64,
}

pub const TRACE_COLUMNS: [&str; 8] = [
    "iteration",
    "value_mse",
    "value_mean_initial",
    "value_mean_stationary",
    "entropy",
    "epsilon",
    "delta",
    "grad_norm",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Converged,
    IterationCap,
    Aborted(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Snapshot {
    pub values: Vec<f64>,
    pub policy: PolicyTable,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainTrace {
    pub method: Method,
    pub records: Vec<TraceRecord>,
    pub status: RunStatus,
    pub final_policy: PolicyTable,
    /// Critic values at the end (terminal entries zeroed), when a critic exists.
    pub final_values: Option<Vec<f64>>,
    /// Per-record (values, policy) pairs when `keep_snapshots` is set.
    pub snapshots: Vec<Snapshot>,
}

impl TrainTrace {
    /// Outer iterations executed; the record count is one more.
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }

    pub fn last(&self) -> &TraceRecord {
        self.records.last().expect("trace has the initial record")
    }

    pub fn column(&self, name: &str) -> Result<Vec<f64>> {
        self.records
            .iter()
            .map(|r| record_field(r, name))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv_writer(out);
        w.write_record(TRACE_COLUMNS)?;
        for r in &self.records {
            let mut row = vec![r.iteration.to_string()];
            for c in &TRACE_COLUMNS[1..] {
                row.push(fmt_f64(record_field(r, c)?));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn record_field(r: &TraceRecord, name: &str) -> Result<f64> {
    Ok(match name {
        "iteration" => r.iteration as f64,
        "value_mse" => r.value_mse,
        "value_mean_initial" => r.value_mean_initial,
        "value_mean_stationary" => r.value_mean_stationary,
        "entropy" => r.entropy,
        "epsilon" => r.epsilon,
        "delta" => r.delta,
        "grad_norm" => r.grad_norm,
        other => return Err(Error::input(format!("unknown trace column {other:?}"))),
    })
}

/// What the critic's value-MSE is measured against.
#[derive(Clone, Debug, PartialEq)]
pub enum Benchmark {
    /// Entry `k` for record `k`; the last entry repeats.
    Sequence(Vec<StateVector>),
    /// Exact value of the policy the critic was fitted to.
    EvaluatedPolicy,
}

/// Benchmark sequence from policy iteration: zeros for record 0, then the
/// value of the `k−1`-th policy-iteration policy for record `k`.
pub fn policy_iteration_benchmark(mdp: &TabularMDP, init: &PolicyTable) -> Result<Vec<StateVector>> {
    let pi = policy_iteration(mdp, init)?;
    let mut seq = vec![StateVector::zeros(mdp.n_states())];
    seq.extend(pi.value_history);
    Ok(seq)
}

/// Value means, entropy and critic MSE of one policy. The remaining fields
/// are left NaN for the caller.
pub fn measure_trace_metrics(
    mdp: &TabularMDP,
    policy: &PolicyTable,
    approx_values: Option<&[f64]>,
    benchmark: &[f64],
) -> Result<TraceRecord> {
    let v = exact_policy_evaluation(mdp, policy)?;
    let long_run = long_run_distribution(mdp, policy)?;
    let value_mse = match approx_values {
        Some(a) => {
            let a = mask_terminal(mdp, a);
            a.iter()
                .zip(benchmark)
                .map(|(x, y)| (x - y).powi(2))
                .sum::<f64>()
                / a.len() as f64
        }
        None => f64::NAN,
    };
    Ok(TraceRecord {
        iteration: 0,
        value_mse,
        value_mean_initial: v.weighted_mean(mdp.initial_dist().probs()),
        value_mean_stationary: v.weighted_mean(long_run.probs()),
        entropy: mean_table_entropy(policy, &mdp.non_terminal_states()),
        epsilon: f64::NAN,
        delta: f64::NAN,
        grad_norm: f64::NAN,
        elapsed_secs: 0.0,
    })
}

fn max_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

fn max_abs(x: &[f64]) -> f64 {
    x.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// `‖T_π V − T_* V‖∞`.
fn greedy_gap(mdp: &TabularMDP, policy: &PolicyTable, values: &[f64]) -> Result<f64> {
    let v = StateVector::new(mask_terminal(mdp, values))?;
    let tpi = apply_self_consistency_operator(mdp, policy, &v)?;
    let (tstar, _) = apply_bellman_operator(mdp, &v)?;
    Ok(tpi.max_abs_diff(&tstar))
}

enum Actor {
    Softmax(SoftmaxTabularPolicy, Optimizer),
    Greedy(PolicyTable),
}

enum Critic {
    Mlp(MlpValueFunction, Optimizer),
    Exact(Vec<f64>),
}

struct Run<'a> {
    mdp: &'a TabularMDP,
    cfg: &'a TrainConfig,
    rng: Rng64,
    actor: Actor,
    critic: Option<Critic>,
}

impl<'a> Run<'a> {
    fn new(mdp: &'a TabularMDP, cfg: &'a TrainConfig) -> Result<Self> {
        let n = mdp.n_states();
        let na = mdp.n_actions();
        let mut rng = seeded_rng(cfg.seed);
        // The value network is always drawn first so every method sees the
        // same initial parameters for a given seed.
        let vf = MlpValueFunction::new(n, &cfg.hidden, cfg.zero_value_init, &mut rng)?;
        let logits = match cfg.policy_init {
            PolicyInit::Xavier => SoftmaxTabularPolicy::xavier(n, na, &mut rng),
            PolicyInit::Uniform => SoftmaxTabularPolicy::zeros(n, na),
            PolicyInit::Dummy => {
                if cfg.dummy_action >= na {
                    return Err(Error::config("dummy_action", "out of range"));
                }
                SoftmaxTabularPolicy::biased(n, na, cfg.dummy_action, cfg.dummy_logit)
            }
        };
        let actor = match cfg.method.estimator() {
            Some(_) => {
                let opt = Optimizer::new(cfg.policy_optimizer, n * na)?;
                Actor::Softmax(logits, opt)
            }
            None => {
                let init = match cfg.policy_init {
                    PolicyInit::Dummy => PolicyTable::deterministic(na, &vec![cfg.dummy_action; n])?,
                    _ => logits.to_table(),
                };
                Actor::Greedy(init)
            }
        };
        let critic = if cfg.method.uses_critic() {
            Some(match (cfg.method, cfg.critic) {
                (Method::PolicyIteration, _) | (_, CriticKind::Exact) => {
                    let v0 = if cfg.zero_value_init { vec![0.0; n] } else { mask_terminal(mdp, &vf.values()) };
                    Critic::Exact(v0)
                }
                (_, CriticKind::Mlp) => {
                    let opt = Optimizer::new(cfg.value_optimizer, vf.n_params())?;
                    Critic::Mlp(vf, opt)
                }
            })
        } else {
            None
        };
        Ok(Self {
            mdp,
            cfg,
            rng,
            actor,
            critic,
        })
    }

    fn table(&self) -> PolicyTable {
        match &self.actor {
            Actor::Softmax(p, _) => p.to_table(),
            Actor::Greedy(t) => t.clone(),
        }
    }

    fn critic_values(&self) -> Option<Vec<f64>> {
        self.critic.as_ref().map(|c| match c {
            Critic::Mlp(vf, _) => mask_terminal(self.mdp, &vf.values()),
            Critic::Exact(v) => v.clone(),
        })
    }

    fn critic_weights(&self, table: &PolicyTable) -> Result<Vec<f64>> {
        Ok(match self.cfg.critic_weighting {
            CriticWeighting::Initial => self.mdp.initial_dist().probs().to_vec(),
            CriticWeighting::Stationary => long_run_distribution(self.mdp, table)?.probs().to_vec(),
        })
    }

    fn mc_values(&mut self, table: &PolicyTable) -> Result<Vec<f64>> {
        let horizon = default_horizon(self.mdp.discount());
        (0..self.mdp.n_states())
            .map(|s| mc_target(self.mdp, table, s, horizon, self.cfg.mc_rollouts, &mut self.rng))
            .collect()
    }

    /// Fits the critic to `table` for `iters` steps.
    fn evaluate(&mut self, table: &PolicyTable, iters: InnerIters) -> Result<usize> {
        let mdp = self.mdp;
        let cfg = self.cfg;
        let weights = self.critic_weights(table)?;
        let mc = match cfg.critic_target {
            CriticTarget::Mc => Some(self.mc_values(table)?),
            CriticTarget::Td => None,
        };
        let Some(critic) = self.critic.as_mut() else {
            return Ok(0);
        };
        match critic {
            Critic::Exact(v) => {
                *v = exact_policy_evaluation(mdp, table)?.into_inner();
                Ok(1)
            }
            Critic::Mlp(vf, opt) => {
                let cap = match iters {
                    InnerIters::Fixed(m) => m,
                    InnerIters::Converge => cfg.max_pev_steps,
                };
                let all: Vec<usize> = (0..mdp.n_states()).collect();
                let mut previous: Option<Vec<f64>> = None;
                let mut steps = 0;
                while steps < cap {
                    let mut converged = false;
                    let mut failure = None;
                    let (outputs, grad) = vf.gradient_from_outputs(&all, |out| {
                        let targets = match &mc {
                            Some(t) => t.clone(),
                            None => match expected_td_targets(mdp, table, out) {
                                Ok(t) => t,
                                Err(e) => {
                                    failure = Some(e);
                                    return vec![0.0; out.len()];
                                }
                            },
                        };
                        let residual = (0..out.len())
                            .filter(|&s| weights[s] > 0.0)
                            .fold(0.0f64, |m, s| m.max((targets[s] - out[s]).abs()));
                        converged = residual < cfg.value_tol;
                        (0..out.len()).map(|s| weights[s] * (targets[s] - out[s])).collect()
                    })?;
                    if let Some(e) = failure {
                        return Err(e);
                    }
                    if outputs.iter().any(|x| !x.is_finite()) {
                        return Err(Error::Diverged {
                            iteration: steps,
                            reason: "critic output is not finite".into(),
                        });
                    }
                    if iters == InnerIters::Converge {
                        let still = previous
                            .as_ref()
                            .is_some_and(|p| max_norm_diff(p, &outputs) < cfg.value_change_tol);
                        if converged || still {
                            break;
                        }
                    }
                    opt.step(vf.params_mut(), &grad, Direction::Ascent)?;
                    previous = Some(outputs);
                    steps += 1;
                }
                Ok(steps)
            }
        }
    }

    fn true_values(&mut self, table: &PolicyTable) -> Result<Vec<f64>> {
        match self.cfg.true_value_estimate {
            Estimate::Exact => Ok(exact_policy_evaluation(self.mdp, table)?.into_inner()),
            Estimate::Sampled => self.mc_values(table),
        }
    }

    fn gradient_inputs(
        &mut self,
        estimator: Estimator,
        table: &PolicyTable,
        critic_values: Option<&[f64]>,
    ) -> Result<GradientInputs> {
        let (dist, source) = estimator.pairing();
        let mdp = self.mdp;
        let mut inputs = GradientInputs::default();
        match (dist, self.cfg.dist_estimate) {
            (DistKind::Initial, _) => inputs.initial = mdp.initial_dist().probs().to_vec(),
            (DistKind::Dvf, Estimate::Exact) => {
                inputs.dvf = discounted_visiting_frequency(mdp, table, mdp.discount(), self.cfg.chain_mode)?
                    .weights()
                    .to_vec()
            }
            (DistKind::Dvf, Estimate::Sampled) => {
                let d = sample_dvf(
                    mdp,
                    table,
                    mdp.discount(),
                    self.cfg.chain_mode,
                    self.cfg.dvf_trajectories,
                    &mut self.rng,
                )?;
                let scale = 1.0 / (1.0 - mdp.discount());
                inputs.dvf = d.probs().iter().map(|p| p * scale).collect();
            }
            (DistKind::Stationary, Estimate::Exact) => {
                inputs.stationary = long_run_distribution(mdp, table)?.probs().to_vec()
            }
            (DistKind::Stationary, Estimate::Sampled) => {
                inputs.stationary =
                    sample_stationary(mdp, table, 1000, self.cfg.stationary_samples, &mut self.rng)?
                        .probs()
                        .to_vec()
            }
        }
        match source {
            ValueSource::TrueValue => inputs.true_value = self.true_values(table)?,
            ValueSource::Approximate => {
                inputs.approx_value = match critic_values {
                    Some(v) => v.to_vec(),
                    None => self.critic_values().expect("critic methods own a critic"),
                }
            }
        }
        Ok(inputs)
    }

    fn policy_gradient(
        &mut self,
        estimator: Estimator,
        table: &PolicyTable,
        critic_values: Option<&[f64]>,
    ) -> Result<(Vec<f64>, Vec<f64>)> {
        let inputs = self.gradient_inputs(estimator, table, critic_values)?;
        let Actor::Softmax(policy, _) = &self.actor else {
            unreachable!("gradient methods own a softmax actor")
        };
        let grad = exact_policy_gradient(self.mdp, policy, estimator, &inputs)?.into_grad();
        let used = inputs.value(estimator.pairing().1).to_vec();
        Ok((grad, used))
    }

    /// Improves the actor. Returns the gradient max-norm at the first step
    /// (NaN for greedy actors) and the value vector the improvement used.
    fn improve(&mut self, table: &PolicyTable, converge: bool) -> Result<(f64, Vec<f64>)> {
        let mdp = self.mdp;
        let cfg = self.cfg;
        match cfg.method.estimator() {
            None => {
                let values = self.critic_values().expect("greedy methods own a critic");
                let greedy = greedy_improvement(mdp, &StateVector::new(values.clone())?)?;
                self.actor = Actor::Greedy(greedy);
                Ok((f64::NAN, values))
            }
            Some(estimator) => {
                if converge {
                    if let Actor::Softmax(_, opt) = &mut self.actor {
                        opt.reset();
                    }
                }
                let cap = if converge { cfg.max_pim_steps } else { 1 };
                let mut first_norm = f64::NAN;
                let mut used = Vec::new();
                let mut current = table.clone();
                // the critic is frozen during improvement
                let frozen = self.critic_values();
                for step in 0..cap {
                    let (grad, values) = self.policy_gradient(estimator, &current, frozen.as_deref())?;
                    let norm = max_abs(&grad);
                    if step == 0 {
                        first_norm = norm;
                        used = values;
                    }
                    if converge && norm < cfg.policy_tol {
                        break;
                    }
                    let Actor::Softmax(policy, opt) = &mut self.actor else {
                        unreachable!()
                    };
                    opt.step(policy.logits_mut(), &grad, Direction::Ascent)?;
                    if policy.logits().iter().any(|x| !x.is_finite()) {
                        return Err(Error::Diverged {
                            iteration: step,
                            reason: "policy logits are not finite".into(),
                        });
                    }
                    current = policy.to_table();
                }
                Ok((first_norm, used))
            }
        }
    }
}

/// Runs `cfg.method` on `mdp`.
pub fn train(mdp: &TabularMDP, cfg: &TrainConfig, benchmark: &Benchmark) -> Result<TrainTrace> {
    cfg.validate()?;
    let start = Instant::now();
    let mut run = Run::new(mdp, cfg)?;
    let converge = cfg.m == InnerIters::Converge;
    let bench_at = |k: usize, evaluated: &PolicyTable| -> Result<Vec<f64>> {
        match benchmark {
            Benchmark::Sequence(seq) => {
                let last = seq.len().checked_sub(1).ok_or_else(|| Error::input("empty benchmark"))?;
                Ok(seq[k.min(last)].values().to_vec())
            }
            Benchmark::EvaluatedPolicy => Ok(exact_policy_evaluation(mdp, evaluated)?.into_inner()),
        }
    };

    let mut records = Vec::new();
    let mut snapshots = Vec::new();
    let table0 = run.table();
    let v0 = run.critic_values();
    let mut first = measure_trace_metrics(mdp, &table0, v0.as_deref(), &bench_at(0, &table0)?)?;
    if let Some(v) = &v0 {
        first.epsilon = max_norm_diff(v, exact_policy_evaluation(mdp, &table0)?.values());
        first.delta = greedy_gap(mdp, &table0, v)?;
    }
    if let Some(estimator) = cfg.method.estimator() {
        first.grad_norm = max_abs(&run.policy_gradient(estimator, &table0, None)?.0);
    }
    if cfg.keep_snapshots {
        snapshots.push(Snapshot {
            values: v0.clone().unwrap_or_else(|| exact_policy_evaluation(mdp, &table0).map(|v| v.into_inner()).unwrap_or_default()),
            policy: table0.clone(),
        });
    }
    records.push(first);

    let mut status = RunStatus::IterationCap;
    for k in 1..=cfg.policy_iters {
        let table = run.table();
        let outcome = (|| -> Result<TraceRecord> {
            run.evaluate(&table, cfg.m)?;
            let fitted = run.critic_values();
            let epsilon = match &fitted {
                Some(v) => max_norm_diff(v, exact_policy_evaluation(mdp, &table)?.values()),
                None => f64::NAN,
            };
            let (grad_norm, used) = run.improve(&table, converge)?;
            let improved = run.table();
            let mut rec = measure_trace_metrics(mdp, &improved, fitted.as_deref(), &bench_at(k, &table)?)?;
            rec.iteration = k;
            rec.epsilon = epsilon;
            rec.delta = greedy_gap(mdp, &improved, &used)?;
            rec.grad_norm = grad_norm;
            rec.elapsed_secs = start.elapsed().as_secs_f64();
            Ok(rec)
        })();
        let rec = match outcome {
            Ok(r) => r,
            Err(Error::Diverged { iteration, reason }) => {
                status = RunStatus::Aborted(format!("outer iteration {k}, step {iteration}: {reason}"));
                break;
            }
            Err(e) => return Err(e),
        };
        if !(rec.value_mean_initial.is_finite() && rec.value_mean_stationary.is_finite()) {
            status = RunStatus::Aborted(format!("outer iteration {k}: value mean is not finite"));
            records.push(rec);
            break;
        }
        if cfg.keep_snapshots {
            snapshots.push(Snapshot {
                values: run.critic_values().unwrap_or_else(|| {
                    exact_policy_evaluation(mdp, &run.table()).map(|v| v.into_inner()).unwrap_or_default()
                }),
                policy: run.table(),
            });
        }
        let gradient_done = !converge && cfg.method.estimator().is_some() && rec.grad_norm < cfg.policy_tol;
        records.push(rec);
        let entropy_done = !converge
            && cfg.entropy_window > 0
            && records.len() > cfg.entropy_window
            && (records[records.len() - 1].entropy - records[records.len() - 1 - cfg.entropy_window].entropy).abs()
                < cfg.entropy_tol;
        if gradient_done || entropy_done {
            status = RunStatus::Converged;
            break;
        }
    }
    Ok(TrainTrace {
        method: cfg.method,
        records,
        status,
        final_policy: run.table(),
        final_values: run.critic_values(),
        snapshots,
    })
}

/// Plain gradient ascent on the direct estimator.
pub fn run_direct(mdp: &TabularMDP, cfg: &TrainConfig) -> Result<TrainTrace> {
    let cfg = TrainConfig {
        method: Method::Direct,
        ..cfg.clone()
    };
    train(mdp, &cfg, &Benchmark::EvaluatedPolicy)
}

/// Critic updates alternating with ascent on the indirect
/// estimator.
pub fn run_indirect(mdp: &TabularMDP, cfg: &TrainConfig, benchmark: &Benchmark) -> Result<TrainTrace> {
    let cfg = TrainConfig {
        method: Method::Indirect,
        ..cfg.clone()
    };
    train(mdp, &cfg, benchmark)
}

/// Greedy improvement through the model on top of a learned critic.
pub fn run_value_based(mdp: &TabularMDP, cfg: &TrainConfig, benchmark: &Benchmark) -> Result<TrainTrace> {
    let cfg = TrainConfig {
        method: Method::ValueBased,
        ..cfg.clone()
    };
    train(mdp, &cfg, benchmark)
}

/// Exact evaluation plus greedy improvement, traced like the learners.
pub fn run_policy_iteration(mdp: &TabularMDP, cfg: &TrainConfig, benchmark: &Benchmark) -> Result<TrainTrace> {
    let cfg = TrainConfig {
        method: Method::PolicyIteration,
        critic: CriticKind::Exact,
        ..cfg.clone()
    };
    train(mdp, &cfg, benchmark)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_gridworld, GridSpec, InitialDistMode};
    use crate::solvers::value_iteration;

    fn default_mdp() -> TabularMDP {
        build_gridworld(&GridSpec::default_map(), 0.9, &InitialDistMode::UniformAll).unwrap()
    }

    fn small_cfg(method: Method) -> TrainConfig {
        TrainConfig {
            method,
            hidden: vec![16, 16],
            policy_iters: 30,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn inner_iters_serde() {
        #[derive(Serialize, Deserialize, PartialEq, Debug)]
        struct W {
            m: InnerIters,
        }
        for m in [InnerIters::Fixed(5), InnerIters::Converge] {
            let text = toml::to_string(&W { m }).unwrap();
            assert_eq!(toml::from_str::<W>(&text).unwrap(), W { m });
        }
        assert!(toml::from_str::<W>("m = \"often\"").is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
    }

    #[test]
    fn metrics_of_known_policies() {
        let mdp = default_mdp();
        let uniform = PolicyTable::uniform(16, 4);
        let v = exact_policy_evaluation(&mdp, &uniform).unwrap();
        let r = measure_trace_metrics(&mdp, &uniform, Some(v.values()), v.values()).unwrap();
        assert_eq!(r.value_mse, 0.0);
        assert!((r.entropy - 4f64.ln()).abs() < 1e-12);
        let greedy = greedy_improvement(&mdp, &v).unwrap();
        let r = measure_trace_metrics(&mdp, &greedy, None, v.values()).unwrap();
        assert_eq!(r.entropy, 0.0);
        assert!(r.value_mse.is_nan());
    }

    #[test]
    fn exact_critic_value_based_is_policy_iteration() {
        let mdp = default_mdp();
        let cfg = TrainConfig {
            m: InnerIters::Converge,
            policy_iters: 10,
            policy_init: PolicyInit::Dummy,
            zero_value_init: true,
            critic: CriticKind::Exact,
            ..small_cfg(Method::ValueBased)
        };
        let up = PolicyTable::deterministic(4, &[0; 16]).unwrap();
        let bench = policy_iteration_benchmark(&mdp, &up).unwrap();
        let trace = run_value_based(&mdp, &cfg, &Benchmark::Sequence(bench.clone())).unwrap();
        let mses: Vec<f64> = trace.records.iter().map(|r| r.value_mse).collect();
        assert!(mses.iter().all(|m| *m == 0.0), "{mses:?}");
        let pi = policy_iteration(&mdp, &up).unwrap();
        assert_eq!(trace.final_policy.argmax_actions(), pi.greedy_actions());
        let again = run_policy_iteration(&mdp, &cfg, &Benchmark::Sequence(bench)).unwrap();
        let csv = |t: &TrainTrace| {
            let mut buf = Vec::new();
            t.write_csv(&mut buf).unwrap();
            buf
        };
        assert_eq!(csv(&again), csv(&trace));
    }

    #[test]
    fn dummy_initial_record_is_dummy_value() {
        let mdp = default_mdp();
        let cfg = TrainConfig {
            policy_init: PolicyInit::Dummy,
            policy_iters: 1,
            ..small_cfg(Method::Indirect)
        };
        let trace = run_indirect(&mdp, &cfg, &Benchmark::EvaluatedPolicy).unwrap();
        let table = SoftmaxTabularPolicy::biased(16, 4, 0, 10.0).to_table();
        let v = exact_policy_evaluation(&mdp, &table).unwrap();
        let mean = v.weighted_mean(mdp.initial_dist().probs());
        assert!((trace.records[0].value_mean_initial - mean).abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rate_freezes_the_trace() {
        let mdp = default_mdp();
        let cfg = TrainConfig {
            policy_optimizer: OptimizerConfig::adam(0.0),
            policy_iters: 5,
            entropy_window: 0,
            ..small_cfg(Method::Direct)
        };
        let trace = run_direct(&mdp, &cfg).unwrap();
        assert_eq!(trace.records.len(), 6);
        for r in &trace.records[1..] {
            assert_eq!(r.value_mean_initial, trace.records[0].value_mean_initial);
            assert_eq!(r.entropy, trace.records[0].entropy);
        }
    }

    #[test]
    fn direct_method_approaches_optimum() {
        let mdp = default_mdp();
        let cfg = TrainConfig {
            policy_optimizer: OptimizerConfig::adam(0.05),
            policy_iters: 500,
            entropy_window: 0,
            ..small_cfg(Method::Direct)
        };
        let trace = run_direct(&mdp, &cfg).unwrap();
        let vstar = value_iteration(&mdp, 1e-12).unwrap();
        let opt_mean = vstar.values.weighted_mean(long_run_distribution(&mdp, &vstar.policy).unwrap().probs());
        let got = trace.last().value_mean_stationary;
        assert!((got - opt_mean).abs() <= 0.02 * opt_mean, "{got} vs {opt_mean}");
    }

    #[test]
    fn invalid_config_is_rejected() {
        let mdp = default_mdp();
        let cfg = TrainConfig {
            m: InnerIters::Fixed(0),
            ..small_cfg(Method::Indirect)
        };
        assert!(matches!(train(&mdp, &cfg, &Benchmark::EvaluatedPolicy), Err(Error::Config { .. })));
    }
}
