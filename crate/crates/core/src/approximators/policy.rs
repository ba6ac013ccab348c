use rand::Rng;

use crate::error::{check_len, Error, Result};
use crate::io::NamedTensor;
use crate::mdp::PolicyTable;

/// Tabular softmax policy: one logit per (state, action).
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxTabularPolicy {
    n_states: usize,
    n_actions: usize,
    logits: Vec<f64>,
}

/// Row softmax with max subtraction.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|x| (x - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// `−Σ π log π`, with `0 log 0 = 0`.
pub fn entropy(probs: &[f64]) -> f64 {
    0.0 - probs
        .iter()
        .filter(|p| **p > 0.0)
        .map(|p| p * p.ln())
        .sum::<f64>()
}

impl SoftmaxTabularPolicy {
    pub fn new(n_states: usize, n_actions: usize, logits: Vec<f64>) -> Result<Self> {
        check_len("policy logits", n_states * n_actions, logits.len())?;
        if logits.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numerical("non-finite policy logit".into()));
        }
        Ok(Self {
            n_states,
            n_actions,
            logits,
        })
    }

    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self {
            n_states,
            n_actions,
            logits: vec![0.0; n_states * n_actions],
        }
    }

    /// Every state prefers `action` with logit `strength`, others 0.
    pub fn biased(n_states: usize, n_actions: usize, action: usize, strength: f64) -> Self {
        let mut p = Self::zeros(n_states, n_actions);
        for s in 0..n_states {
            p.logits[s * n_actions + action] = strength;
        }
        p
    }

    /// Uniform in `±sqrt(6 / (n_states + n_actions))`, treating the table as a
    /// linear layer over a one-hot state input.
    pub fn xavier<R: Rng + ?Sized>(n_states: usize, n_actions: usize, rng: &mut R) -> Self {
        let bound = (6.0 / (n_states + n_actions) as f64).sqrt();
        let logits = (0..n_states * n_actions)
            .map(|_| rng.random_range(-bound..bound))
            .collect();
        Self {
            n_states,
            n_actions,
            logits,
        }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn logits(&self) -> &[f64] {
        &self.logits
    }

    pub fn logits_mut(&mut self) -> &mut [f64] {
        &mut self.logits
    }

    fn check_state(&self, s: usize) -> Result<()> {
        if s < self.n_states {
            Ok(())
        } else {
            Err(Error::input(format!("state {s} out of range 0..{}", self.n_states)))
        }
    }

    pub fn probabilities(&self, s: usize) -> Result<Vec<f64>> {
        self.check_state(s)?;
        Ok(softmax(&self.logits[s * self.n_actions..(s + 1) * self.n_actions]))
    }

    pub fn to_table(&self) -> PolicyTable {
        let probs = (0..self.n_states)
            .flat_map(|s| softmax(&self.logits[s * self.n_actions..(s + 1) * self.n_actions]))
            .collect();
        PolicyTable::new(self.n_states, self.n_actions, probs).expect("softmax rows are normalized")
    }

    /// Gradient of `log π(a|s)` over the whole logit table; only row `s` is
    /// nonzero, with entries `1{a = b} − π(b|s)`.
    pub fn log_gradient(&self, s: usize, a: usize) -> Result<Vec<f64>> {
        let probs = self.probabilities(s)?;
        if a >= self.n_actions {
            return Err(Error::input(format!("action {a} out of range")));
        }
        let mut g = vec![0.0; self.logits.len()];
        for (b, p) in probs.iter().enumerate() {
            g[s * self.n_actions + b] = f64::from(u8::from(a == b)) - p;
        }
        Ok(g)
    }

    pub fn entropy(&self, s: usize) -> Result<f64> {
        Ok(entropy(&self.probabilities(s)?))
    }

    /// Unweighted mean entropy over `states`.
    pub fn mean_entropy(&self, states: &[usize]) -> Result<f64> {
        if states.is_empty() {
            return Ok(0.0);
        }
        let mut total = 0.0;
        for &s in states {
            total += self.entropy(s)?;
        }
        Ok(total / states.len() as f64)
    }

    pub fn to_tensors(&self) -> Vec<NamedTensor> {
        vec![NamedTensor {
            name: "logits".into(),
            shape: vec![self.n_states, self.n_actions],
            data: self.logits.clone(),
        }]
    }

    pub fn from_tensors(tensors: &[NamedTensor]) -> Result<Self> {
        let t = tensors
            .iter()
            .find(|t| t.name == "logits")
            .ok_or_else(|| Error::Structure("checkpoint has no logits tensor".into()))?;
        if t.shape.len() != 2 {
            return Err(Error::Structure("logits tensor must be 2-D".into()));
        }
        Self::new(t.shape[0], t.shape[1], t.data.clone())
    }
}

/// Mean entropy of an arbitrary policy table over `states`.
pub fn mean_table_entropy(policy: &PolicyTable, states: &[usize]) -> f64 {
    if states.is_empty() {
        return 0.0;
    }
    states.iter().map(|&s| entropy(policy.row(s))).sum::<f64>() / states.len() as f64
}
