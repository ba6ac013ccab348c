//! Finite MDP representation and the two fundamental operators in vector form.
//!
//! Transition and reward tensors are stored flat and indexed `[s][a][s']`.
//! Terminal states are absorbing with zero reward; every value computation in
//! the crate relies on that convention.

use std::ops::{Deref, Index};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

const STOCHASTIC_TOL: f64 = 1e-12;
const DISTRIBUTION_TOL: f64 = 1e-10;
const POLICY_ROW_TOL: f64 = 1e-8;

/// A length-n value vector over states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateVector(Vec<f64>);

impl StateVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::input(format!("state value {i} is not finite")));
        }
        Ok(Self(values))
    }

    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self(vec![c; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn max_abs_diff(&self, other: &StateVector) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Weighted mean `Σ_s w(s) v(s)`.
    pub fn weighted_mean(&self, weights: &[f64]) -> f64 {
        self.0.iter().zip(weights).map(|(v, w)| v * w).sum()
    }
}

impl Deref for StateVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// A probability vector over states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateDistribution {
    probs: Vec<f64>,
}

impl StateDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::input("empty distribution"));
        }
        if let Some(i) = probs.iter().position(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::input(format!(
                "distribution entry {i} = {} is negative or not finite",
                probs[i]
            )));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > DISTRIBUTION_TOL {
            return Err(Error::input(format!("distribution sums to {sum}, not 1")));
        }
        Ok(Self { probs })
    }

    /// Normalizes a nonnegative vector with positive mass.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) || weights.iter().any(|w| *w < 0.0 || !w.is_finite()) {
            return Err(Error::input("weights must be nonnegative with positive mass"));
        }
        Self::new(weights.iter().map(|w| w / sum).collect())
    }

    pub fn uniform_over(n: usize, support: &[usize]) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::input("uniform distribution over an empty support"));
        }
        let mut probs = vec![0.0; n];
        for &s in support {
            if s >= n {
                return Err(Error::input(format!("state {s} out of range 0..{n}")));
            }
            probs[s] = 1.0;
        }
        Self::from_weights(&probs)
    }

    pub fn point(n: usize, s: usize) -> Result<Self> {
        Self::uniform_over(n, &[s])
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn support(&self) -> Vec<usize> {
        self.probs
            .iter()
            .enumerate()
            .filter(|(_, p)| **p > 0.0)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn max_abs_diff(&self, other: &[f64]) -> f64 {
        self.probs
            .iter()
            .zip(other)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl Index<usize> for StateDistribution {
    type Output = f64;
    fn index(&self, s: usize) -> &f64 {
        &self.probs[s]
    }
}

/// Unnormalized state weights such as the discounted visiting frequency.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisitationWeights {
    weights: Vec<f64>,
    total_mass: f64,
}

impl VisitationWeights {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.iter().any(|w| !w.is_finite() || *w < -1e-12) {
            return Err(Error::input("visitation weights must be finite and nonnegative"));
        }
        let weights: Vec<f64> = weights.into_iter().map(|w| w.max(0.0)).collect();
        let total_mass = weights.iter().sum();
        Ok(Self { weights, total_mass })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.total_mass
    }

    pub fn scaled(&self, c: f64) -> Vec<f64> {
        self.weights.iter().map(|w| w * c).collect()
    }

    pub fn normalized(&self) -> Result<StateDistribution> {
        StateDistribution::from_weights(&self.weights)
    }
}

/// Per-state action distributions, row-major `n_states × n_actions`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolicyTable {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl PolicyTable {
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        check_len("policy table", n_states * n_actions, probs.len())?;
        for s in 0..n_states {
            let row = &probs[s * n_actions..(s + 1) * n_actions];
            if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                return Err(Error::input(format!("policy row {s} has a negative entry")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > POLICY_ROW_TOL {
                return Err(Error::input(format!(
                    "policy row {s} sums to {sum}, not 1"
                )));
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            probs: vec![1.0 / n_actions as f64; n_states * n_actions],
        }
    }

    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::input(format!("action {a} out of range in state {s}")));
            }
            probs[s * n_actions + a] = 1.0;
        }
        Ok(Self {
            n_states: actions.len(),
            n_actions,
            probs,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.probs
    }

    /// Argmax per state, lowest index on ties.
    pub fn argmax_actions(&self) -> Vec<usize> {
        (0..self.n_states).map(|s| argmax(self.row(s))).collect()
    }
}

/// Index of the maximum, lowest index on ties.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in xs.iter().enumerate().skip(1) {
        if *x > xs[best] {
            best = i;
        }
    }
    best
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TabularMDP {
    n_states: usize,
    n_actions: usize,
    /// p(s'|s,a), flattened `[s][a][s']`.
    transition: Vec<f64>,
    /// r(s,a,s'), flattened `[s][a][s']`.
    reward: Vec<f64>,
    initial_dist: StateDistribution,
    discount: f64,
    terminal_states: Vec<usize>,
}

impl TabularMDP {
    /// Builds and validates an MDP. `discount` may equal 1 here; operations
    /// that need a contraction check `discount < 1` themselves.
    pub fn new(
        n_states: usize,
        n_actions: usize,
        transition: Vec<f64>,
        reward: Vec<f64>,
        initial_dist: StateDistribution,
        discount: f64,
        terminal_states: Vec<usize>,
    ) -> Result<Self> {
        if n_states == 0 || n_actions == 0 {
            return Err(Error::input("MDP needs at least one state and one action"));
        }
        let len = n_states * n_actions * n_states;
        check_len("transition tensor", len, transition.len())?;
        check_len("reward tensor", len, reward.len())?;
        check_len("initial distribution", n_states, initial_dist.len())?;
        if !(discount > 0.0 && discount <= 1.0) {
            return Err(Error::input(format!("discount {discount} outside (0, 1]")));
        }
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = &transition[(s * n_actions + a) * n_states..][..n_states];
                if row.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
                    return Err(Error::Structure(format!(
                        "p(.|{s},{a}) has a negative entry"
                    )));
                }
                let sum: f64 = row.iter().sum();
                if (sum - 1.0).abs() > STOCHASTIC_TOL {
                    return Err(Error::Structure(format!("p(.|{s},{a}) sums to {sum}")));
                }
            }
        }
        if reward.iter().any(|r| !r.is_finite()) {
            return Err(Error::Structure("reward tensor has non-finite entries".into()));
        }
        let mut terminal_states = terminal_states;
        terminal_states.sort_unstable();
        terminal_states.dedup();
        for &t in &terminal_states {
            if t >= n_states {
                return Err(Error::Structure(format!("terminal state {t} out of range")));
            }
            if initial_dist[t] != 0.0 {
                return Err(Error::Structure(format!(
                    "initial distribution puts mass on terminal state {t}"
                )));
            }
            for a in 0..n_actions {
                let base = (t * n_actions + a) * n_states;
                if transition[base + t] != 1.0 || reward[base + t] != 0.0 {
                    return Err(Error::Structure(format!(
                        "terminal state {t} must self-loop with zero reward"
                    )));
                }
            }
        }
        Ok(Self {
            n_states,
            n_actions,
            transition,
            reward,
            initial_dist,
            discount,
            terminal_states,
        })
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn initial_dist(&self) -> &StateDistribution {
        &self.initial_dist
    }

    pub fn terminal_states(&self) -> &[usize] {
        &self.terminal_states
    }

    pub fn is_terminal(&self, s: usize) -> bool {
        self.terminal_states.binary_search(&s).is_ok()
    }

    pub fn non_terminal_states(&self) -> Vec<usize> {
        (0..self.n_states).filter(|s| !self.is_terminal(*s)).collect()
    }

    /// p(.|s,a) as a slice over successor states.
    pub fn transition_row(&self, s: usize, a: usize) -> &[f64] {
        &self.transition[(s * self.n_actions + a) * self.n_states..][..self.n_states]
    }

    pub fn reward_row(&self, s: usize, a: usize) -> &[f64] {
        &self.reward[(s * self.n_actions + a) * self.n_states..][..self.n_states]
    }

    pub fn transition(&self, s: usize, a: usize, next: usize) -> f64 {
        self.transition_row(s, a)[next]
    }

    pub fn reward(&self, s: usize, a: usize, next: usize) -> f64 {
        self.reward_row(s, a)[next]
    }

    pub fn with_discount(&self, discount: f64) -> Result<Self> {
        let mut m = self.clone();
        if !(discount > 0.0 && discount <= 1.0) {
            return Err(Error::input(format!("discount {discount} outside (0, 1]")));
        }
        m.discount = discount;
        Ok(m)
    }

    pub fn with_initial_dist(&self, d0: StateDistribution) -> Result<Self> {
        Self::new(
            self.n_states,
            self.n_actions,
            self.transition.clone(),
            self.reward.clone(),
            d0,
            self.discount,
            self.terminal_states.clone(),
        )
    }

    /// One-step lookahead `Σ_{s'} p(s'|s,a)[r + γ v(s')]`.
    pub fn q_value(&self, s: usize, a: usize, v: &[f64]) -> f64 {
        let p = self.transition_row(s, a);
        let r = self.reward_row(s, a);
        let mut q = 0.0;
        for next in 0..self.n_states {
            if p[next] != 0.0 {
                q += p[next] * (r[next] + self.discount * v[next]);
            }
        }
        q
    }

    /// Expected immediate reward of (s, a).
    pub fn expected_reward(&self, s: usize, a: usize) -> f64 {
        self.transition_row(s, a)
            .iter()
            .zip(self.reward_row(s, a))
            .map(|(p, r)| p * r)
            .sum()
    }

    pub(crate) fn check_policy(&self, policy: &PolicyTable) -> Result<()> {
        check_len("policy states", self.n_states, policy.n_states())?;
        check_len("policy actions", self.n_actions, policy.n_actions())
    }

    pub(crate) fn check_vector(&self, v: &[f64]) -> Result<()> {
        check_len("state vector", self.n_states, v.len())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: TabularMDP = serde_json::from_str(text)?;
        Self::new(
            raw.n_states,
            raw.n_actions,
            raw.transition,
            raw.reward,
            raw.initial_dist,
            raw.discount,
            raw.terminal_states,
        )
    }
}

/// `P_π(s, s') = Σ_a π(a|s) p(s'|s,a)`; rows sum to one.
pub fn policy_transition_matrix(mdp: &TabularMDP, policy: &PolicyTable) -> Result<DMatrix<f64>> {
    mdp.check_policy(policy)?;
    let n = mdp.n_states();
    let mut p = DMatrix::zeros(n, n);
    for s in 0..n {
        for a in 0..mdp.n_actions() {
            let pa = policy.prob(s, a);
            if pa == 0.0 {
                continue;
            }
            for (next, t) in mdp.transition_row(s, a).iter().enumerate() {
                p[(s, next)] += pa * t;
            }
        }
    }
    Ok(p)
}

/// `r_π(s) = Σ_a π(a|s) Σ_{s'} p(s'|s,a) r(s,a,s')`.
pub fn policy_reward_vector(mdp: &TabularMDP, policy: &PolicyTable) -> Result<StateVector> {
    mdp.check_policy(policy)?;
    let r = (0..mdp.n_states())
        .map(|s| {
            (0..mdp.n_actions())
                .map(|a| policy.prob(s, a) * mdp.expected_reward(s, a))
                .sum()
        })
        .collect();
    Ok(StateVector(r))
}

/// `T_π v = r_π + γ P_π v`.
pub fn apply_self_consistency_operator(
    mdp: &TabularMDP,
    policy: &PolicyTable,
    v: &StateVector,
) -> Result<StateVector> {
    mdp.check_policy(policy)?;
    mdp.check_vector(v)?;
    let out = (0..mdp.n_states())
        .map(|s| {
            (0..mdp.n_actions())
                .map(|a| {
                    let pa = policy.prob(s, a);
                    if pa == 0.0 {
                        0.0
                    } else {
                        pa * mdp.q_value(s, a, v)
                    }
                })
                .sum()
        })
        .collect();
    Ok(StateVector(out))
}

/// `(T_* v)(s) = max_a Σ_{s'} p(s'|s,a)[r + γ v(s')]` together with the
/// lowest-index argmax per state.
pub fn apply_bellman_operator(mdp: &TabularMDP, v: &StateVector) -> Result<(StateVector, Vec<usize>)> {
    mdp.check_vector(v)?;
    let mut values = Vec::with_capacity(mdp.n_states());
    let mut greedy = Vec::with_capacity(mdp.n_states());
    for s in 0..mdp.n_states() {
        let q: Vec<f64> = (0..mdp.n_actions()).map(|a| mdp.q_value(s, a, v)).collect();
        let a = argmax(&q);
        values.push(q[a]);
        greedy.push(a);
    }
    Ok((StateVector(values), greedy))
}

pub(crate) fn to_dvector(v: &[f64]) -> DVector<f64> {
    DVector::from_column_slice(v)
}
