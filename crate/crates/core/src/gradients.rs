//! The five policy-gradient estimators and the critic gradient.
//!
//! Every estimator is the same exact kernel
//!
//! ```text
//! g[s, b] = w(s) π(b|s) (q(s, b) − Σ_a π(a|s) q(s, a)),
//! q(s, a) = Σ_s' p(s'|s, a) [r + γ value(s')]
//! ```
//!
//! with a different `(w, value)` pair:
//!
//! | estimator  | w              | value        |
//! |------------|----------------|--------------|
//! | direct     | DVF            | true value   |
//! | indirect   | initial `d0`   | approximate  |
//! | unified    | stationary     | approximate  |
//! | baseline1  | initial `d0`   | true value   |
//! | baseline2  | stationary     | true value   |
//!
//! Terminal states carry no gradient and their value is read as zero.

use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::approximators::{MlpValueFunction, SoftmaxTabularPolicy};
use crate::error::{check_len, Error, Result};
use crate::io::{csv_writer, fmt_f64};
use crate::mdp::{PolicyTable, StateDistribution, TabularMDP};
use crate::sampling::{sample_categorical, step};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    Direct,
    Indirect,
    Unified,
    Baseline1,
    Baseline2,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistKind {
    Dvf,
    Initial,
    Stationary,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueSource {
    TrueValue,
    Approximate,
}

impl Estimator {
    pub const ALL: [Estimator; 5] = [
        Estimator::Direct,
        Estimator::Indirect,
        Estimator::Unified,
        Estimator::Baseline1,
        Estimator::Baseline2,
    ];

    pub fn pairing(self) -> (DistKind, ValueSource) {
        match self {
            Estimator::Direct => (DistKind::Dvf, ValueSource::TrueValue),
            Estimator::Indirect => (DistKind::Initial, ValueSource::Approximate),
            Estimator::Unified => (DistKind::Stationary, ValueSource::Approximate),
            Estimator::Baseline1 => (DistKind::Initial, ValueSource::TrueValue),
            Estimator::Baseline2 => (DistKind::Stationary, ValueSource::TrueValue),
        }
    }

    pub fn from_pairing(dist: DistKind, value: ValueSource) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.pairing() == (dist, value))
            .ok_or_else(|| {
                Error::input(format!(
                    "no estimator uses {} with {}",
                    dist.name(),
                    value.name()
                ))
            })
    }

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Direct => "direct",
            Estimator::Indirect => "indirect",
            Estimator::Unified => "unified",
            Estimator::Baseline1 => "baseline1",
            Estimator::Baseline2 => "baseline2",
        }
    }

    pub fn uses_critic(self) -> bool {
        self.pairing().1 == ValueSource::Approximate
    }
}

impl std::str::FromStr for Estimator {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::input(format!("unknown estimator {s:?}")))
    }
}

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl DistKind {
    pub fn name(self) -> &'static str {
        match self {
            DistKind::Dvf => "dvf",
            DistKind::Initial => "initial",
            DistKind::Stationary => "stationary",
        }
    }
}

impl ValueSource {
    pub fn name(self) -> &'static str {
        match self {
            ValueSource::TrueValue => "true_value",
            ValueSource::Approximate => "approximate",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradientReport {
    grad: Vec<f64>,
    estimator: Estimator,
    dist_used: DistKind,
    value_source: ValueSource,
    scale_note: f64,
}

impl GradientReport {
    /// Rejects `(dist_used, value_source)` pairs that do not belong to
    /// `estimator`.
    pub fn new(
        grad: Vec<f64>,
        estimator: Estimator,
        dist_used: DistKind,
        value_source: ValueSource,
        scale_note: f64,
    ) -> Result<Self> {
        if estimator.pairing() != (dist_used, value_source) {
            return Err(Error::input(format!(
                "{estimator} must use {:?}, got ({}, {})",
                estimator.pairing(),
                dist_used.name(),
                value_source.name()
            )));
        }
        Ok(Self {
            grad,
            estimator,
            dist_used,
            value_source,
            scale_note,
        })
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn into_grad(self) -> Vec<f64> {
        self.grad
    }

    pub fn estimator(&self) -> Estimator {
        self.estimator
    }

    pub fn dist_used(&self) -> DistKind {
        self.dist_used
    }

    pub fn value_source(&self) -> ValueSource {
        self.value_source
    }

    pub fn scale_note(&self) -> f64 {
        self.scale_note
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.grad)
    }

    pub fn max_abs(&self) -> f64 {
        self.grad.iter().fold(0.0, |m, x| m.max(x.abs()))
    }

    /// A `#` metadata line, then `coordinate,value` rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(
            out,
            "# estimator={} dist={} value={} scale={}",
            self.estimator,
            self.dist_used.name(),
            self.value_source.name(),
            fmt_f64(self.scale_note)
        )?;
        let mut w = csv_writer(out);
        w.write_record(["coordinate", "value"])?;
        for (i, g) in self.grad.iter().enumerate() {
            w.write_record([i.to_string(), fmt_f64(*g)])?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn l2_norm(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn cosine_similarity(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (l2_norm(a) * l2_norm(b))
}

/// Copy of `value` with terminal entries set to zero.
pub fn mask_terminal(mdp: &TabularMDP, value: &[f64]) -> Vec<f64> {
    let mut v = value.to_vec();
    for &t in mdp.terminal_states() {
        v[t] = 0.0;
    }
    v
}

/// The shared exact kernel over the full logit table.
pub fn exact_gradient_kernel(
    mdp: &TabularMDP,
    policy: &SoftmaxTabularPolicy,
    weights: &[f64],
    value: &[f64],
) -> Result<Vec<f64>> {
    let n = mdp.n_states();
    let na = mdp.n_actions();
    check_len("gradient weights", n, weights.len())?;
    mdp.check_vector(value)?;
    check_len("policy states", n, policy.n_states())?;
    check_len("policy actions", na, policy.n_actions())?;
    if weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
        return Err(Error::input("gradient weights must be finite and nonnegative"));
    }
    let value = mask_terminal(mdp, value);
    let mut grad = vec![0.0; n * na];
    let mut q = vec![0.0; na];
    for s in 0..n {
        if mdp.is_terminal(s) || weights[s] == 0.0 {
            continue;
        }
        let probs = policy.probabilities(s)?;
        for (a, qa) in q.iter_mut().enumerate() {
            *qa = mdp.q_value(s, a, &value);
        }
        let mean: f64 = probs.iter().zip(&q).map(|(p, x)| p * x).sum();
        for b in 0..na {
            grad[s * na + b] = weights[s] * probs[b] * (q[b] - mean);
        }
    }
    Ok(grad)
}

/// Everything the five estimators may draw on. Fields an estimator does not
/// use may be left empty.
#[derive(Clone, Debug, Default)]
pub struct GradientInputs {
    pub dvf: Vec<f64>,
    pub initial: Vec<f64>,
    pub stationary: Vec<f64>,
    pub true_value: Vec<f64>,
    pub approx_value: Vec<f64>,
}

impl GradientInputs {
    pub fn dist(&self, kind: DistKind) -> &[f64] {
        match kind {
            DistKind::Dvf => &self.dvf,
            DistKind::Initial => &self.initial,
            DistKind::Stationary => &self.stationary,
        }
    }

    pub fn value(&self, source: ValueSource) -> &[f64] {
        match source {
            ValueSource::TrueValue => &self.true_value,
            ValueSource::Approximate => &self.approx_value,
        }
    }
}

/// Exact gradient of `estimator`, taking its distribution and value from
/// `inputs` according to the method table.
pub fn exact_policy_gradient(
    mdp: &TabularMDP,
    policy: &SoftmaxTabularPolicy,
    estimator: Estimator,
    inputs: &GradientInputs,
) -> Result<GradientReport> {
    let (dist, source) = estimator.pairing();
    let grad = exact_gradient_kernel(mdp, policy, inputs.dist(dist), inputs.value(source))?;
    GradientReport::new(grad, estimator, dist, source, 1.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TransitionBatch {
    transitions: Vec<Transition>,
    behavior: DistKind,
}

impl TransitionBatch {
    pub fn new(transitions: Vec<Transition>, behavior: DistKind) -> Result<Self> {
        if transitions.is_empty() {
            return Err(Error::input("transition batch is empty"));
        }
        Ok(Self {
            transitions,
            behavior,
        })
    }

    /// Draws `n` independent transitions with `s ~ dist`, `a ~ π(·|s)`.
    pub fn sample<R: Rng + ?Sized>(
        mdp: &TabularMDP,
        policy: &PolicyTable,
        dist: &StateDistribution,
        behavior: DistKind,
        n: usize,
        rng: &mut R,
    ) -> Result<Self> {
        check_len("behavior distribution", mdp.n_states(), dist.len())?;
        let transitions = (0..n)
            .map(|_| {
                let s = sample_categorical(dist.probs(), rng);
                let (a, r, next) = step(mdp, policy, s, rng);
                Transition {
                    state: s,
                    action: a,
                    reward: r,
                    next_state: next,
                }
            })
            .collect();
        Self::new(transitions, behavior)
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn behavior(&self) -> DistKind {
        self.behavior
    }

    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }
}

/// Batch mean of `∇ log π(a|s) [r + γ V(s')]`. The estimator is identified
/// from the batch's behavior distribution and `value_source`.
pub fn sampled_policy_gradient(
    mdp: &TabularMDP,
    policy: &SoftmaxTabularPolicy,
    batch: &TransitionBatch,
    value: &[f64],
    value_source: ValueSource,
) -> Result<GradientReport> {
    mdp.check_vector(value)?;
    let estimator = Estimator::from_pairing(batch.behavior(), value_source)?;
    let value = mask_terminal(mdp, value);
    let na = policy.n_actions();
    let mut grad = vec![0.0; policy.logits().len()];
    for t in batch.transitions() {
        if mdp.is_terminal(t.state) {
            continue;
        }
        let target = td_target(mdp, &value, t.reward, t.next_state);
        let probs = policy.probabilities(t.state)?;
        for (b, p) in probs.iter().enumerate() {
            let indicator = if b == t.action { 1.0 } else { 0.0 };
            grad[t.state * na + b] += (indicator - p) * target;
        }
    }
    let count = batch.len() as f64;
    grad.iter_mut().for_each(|g| *g /= count);
    GradientReport::new(grad, estimator, batch.behavior(), value_source, 1.0)
}

/// Ascent direction `Σ_s w(s) (G(s) − V(s, w)) ∇_w V(s, w)`.
pub fn critic_gradient(vf: &MlpValueFunction, targets: &[f64], weights: &[f64]) -> Result<Vec<f64>> {
    let n = vf.n_states();
    check_len("critic targets", n, targets.len())?;
    check_len("critic weights", n, weights.len())?;
    let states: Vec<usize> = (0..n).filter(|&s| weights[s] > 0.0).collect();
    if let Some(s) = states.iter().find(|&&s| !targets[s].is_finite()) {
        return Err(Error::input(format!("missing critic target for state {s}")));
    }
    if states.is_empty() {
        return Ok(vec![0.0; vf.n_params()]);
    }
    let values = vf.forward_batch(&states)?;
    let coeffs: Vec<f64> = states
        .iter()
        .zip(&values)
        .map(|(&s, v)| weights[s] * (targets[s] - v))
        .collect();
    vf.weighted_gradient(&states, &coeffs)
}

/// `r + γ V_old(s')`, with a terminal `s'` contributing zero.
pub fn td_target(mdp: &TabularMDP, v_old: &[f64], reward: f64, next_state: usize) -> f64 {
    let v = if mdp.is_terminal(next_state) {
        0.0
    } else {
        v_old[next_state]
    };
    reward + mdp.discount() * v
}

/// Expected TD target per state under `policy`, enumerating actions and
/// successors. Terminal states get target 0.
pub fn expected_td_targets(mdp: &TabularMDP, policy: &PolicyTable, v_old: &[f64]) -> Result<Vec<f64>> {
    mdp.check_policy(policy)?;
    mdp.check_vector(v_old)?;
    let v = mask_terminal(mdp, v_old);
    Ok((0..mdp.n_states())
        .map(|s| {
            if mdp.is_terminal(s) {
                return 0.0;
            }
            policy
                .row(s)
                .iter()
                .enumerate()
                .map(|(a, p)| p * mdp.q_value(s, a, &v))
                .sum()
        })
        .collect())
}

/// Mean discounted return of `n_rollouts` episodes from `s`, truncated at
/// `horizon` steps or on entering a terminal state.
pub fn mc_target<R: Rng + ?Sized>(
    mdp: &TabularMDP,
    policy: &PolicyTable,
    s: usize,
    horizon: usize,
    n_rollouts: usize,
    rng: &mut R,
) -> Result<f64> {
    mdp.check_policy(policy)?;
    if s >= mdp.n_states() {
        return Err(Error::input(format!("state {s} out of range")));
    }
    if n_rollouts == 0 {
        return Err(Error::input("need at least one rollout"));
    }
    if mdp.discount().powf(horizon as f64) >= 1e-9 {
        return Err(Error::input(format!(
            "horizon {horizon} too short: discount^horizon must be below 1e-9"
        )));
    }
    if mdp.is_terminal(s) {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for _ in 0..n_rollouts {
        let mut state = s;
        let mut scale = 1.0;
        let mut ret = 0.0;
        for _ in 0..horizon {
            let (_, r, next) = step(mdp, policy, state, rng);
            ret += scale * r;
            if mdp.is_terminal(next) {
                break;
            }
            scale *= mdp.discount();
            state = next;
        }
        total += ret;
    }
    Ok(total / n_rollouts as f64)
}

/// Smallest horizon with `γ^H < 1e-9`.
pub fn default_horizon(discount: f64) -> usize {
    (1e-9f64.ln() / discount.ln()).floor() as usize + 1
}

/// `(δ + 2γε) / (1 − γ)²`.
pub fn error_bound_diagnostic(eps: f64, delta: f64, discount: f64) -> Result<f64> {
    if !(eps >= 0.0 && delta >= 0.0) {
        return Err(Error::input("eps and delta must be nonnegative"));
    }
    if !(discount > 0.0 && discount < 1.0) {
        return Err(Error::input(format!("discount {discount} must be in (0, 1)")));
    }
    Ok((delta + 2.0 * discount * eps) / (1.0 - discount).powi(2))
}
