//! Ground-truth solvers: exact policy evaluation, greedy improvement, policy
//! iteration and value iteration.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::{fmt_f64, csv_writer};
use crate::mdp::{
    apply_bellman_operator, apply_self_consistency_operator, policy_reward_vector,
    policy_transition_matrix, to_dvector, PolicyTable, StateVector, TabularMDP,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveResult {
    pub values: StateVector,
    pub policy: PolicyTable,
    pub iterations: usize,
    pub residual: f64,
    /// Values of every evaluated policy, in order (policy iteration only).
    #[serde(default)]
    pub value_history: Vec<StateVector>,
}

impl SolveResult {
    pub fn greedy_actions(&self) -> Vec<usize> {
        self.policy.argmax_actions()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv_writer(out);
        w.write_record(["state", "value", "greedy_action"])?;
        for (s, a) in self.greedy_actions().into_iter().enumerate() {
            w.write_record([s.to_string(), fmt_f64(self.values[s]), a.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn require_contraction(mdp: &TabularMDP) -> Result<()> {
    if mdp.discount() < 1.0 {
        Ok(())
    } else {
        Err(Error::input("exact solvers need discount < 1"))
    }
}

/// Solves `(I − γ P_π) v = r_π` by LU decomposition.
pub fn exact_policy_evaluation(mdp: &TabularMDP, policy: &PolicyTable) -> Result<StateVector> {
    require_contraction(mdp)?;
    let n = mdp.n_states();
    let p = policy_transition_matrix(mdp, policy)?;
    let r = policy_reward_vector(mdp, policy)?;
    let a = DMatrix::identity(n, n) - p * mdp.discount();
    let v = a
        .lu()
        .solve(&to_dvector(&r))
        .ok_or_else(|| Error::Numerical("singular policy-evaluation system".into()))?;
    let mut v: Vec<f64> = v.iter().copied().collect();
    // absorbing, zero-reward states; pin them against pivoting round-off
    for &t in mdp.terminal_states() {
        v[t] = 0.0;
    }
    StateVector::new(v)
}

/// Deterministic greedy policy with `T_π' v = T_* v`, lowest index on ties.
pub fn greedy_improvement(mdp: &TabularMDP, v: &StateVector) -> Result<PolicyTable> {
    let (_, actions) = apply_bellman_operator(mdp, v)?;
    PolicyTable::deterministic(mdp.n_actions(), &actions)
}

/// Alternates exact evaluation and greedy improvement until the greedy action
/// set repeats.
pub fn policy_iteration(mdp: &TabularMDP, init_policy: &PolicyTable) -> Result<SolveResult> {
    require_contraction(mdp)?;
    mdp.check_policy(init_policy)?;
    let max_iters = 10_000;
    let mut policy = init_policy.clone();
    let mut history = Vec::new();
    let mut previous: Option<Vec<usize>> = None;
    for it in 1..=max_iters {
        let v = exact_policy_evaluation(mdp, &policy)?;
        history.push(v.clone());
        let improved = greedy_improvement(mdp, &v)?;
        let actions = improved.argmax_actions();
        let stable = previous.as_ref() == Some(&actions) || improved == policy;
        if stable {
            let tv = apply_self_consistency_operator(mdp, &policy, &v)?;
            return Ok(SolveResult {
                residual: tv.max_abs_diff(&v),
                values: v,
                policy,
                iterations: it,
                value_history: history,
            });
        }
        previous = Some(actions);
        policy = improved;
    }
    Err(Error::Numerical("policy iteration did not stabilise".into()))
}

/// Iterates `T_*` from zero until successive iterates differ by at most `tol`.
pub fn value_iteration(mdp: &TabularMDP, tol: f64) -> Result<SolveResult> {
    require_contraction(mdp)?;
    if !(tol > 0.0) {
        return Err(Error::input("tolerance must be positive"));
    }
    let mut v = StateVector::zeros(mdp.n_states());
    let mut iterations = 0;
    loop {
        let (next, _) = apply_bellman_operator(mdp, &v)?;
        iterations += 1;
        let residual = next.max_abs_diff(&v);
        v = next;
        if residual <= tol {
            let policy = greedy_improvement(mdp, &v)?;
            return Ok(SolveResult {
                values: v,
                policy,
                iterations,
                residual,
                value_history: Vec::new(),
            });
        }
        if iterations > 100_000_000 {
            return Err(Error::Numerical("value iteration did not converge".into()));
        }
    }
}
