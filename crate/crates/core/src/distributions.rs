//! State-distribution analytics: t-step distributions, the discounted visiting
//! frequency (DVF), and the stationary distribution of the restart chain.
//!
//! The stationary distribution is only defined on the restart chain. In that
//! chain any transition that would enter a terminal state lands on a fresh
//! draw from `d0` instead, and terminal rows themselves point at `d0`. Terminal
//! states are therefore transient and carry zero stationary mass, and on a
//! connected map the non-terminal states form a single recurrent class.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};
use crate::mdp::{
    policy_transition_matrix, to_dvector, PolicyTable, StateDistribution, TabularMDP,
    VisitationWeights,
};
use crate::sampling::sample_categorical;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChainMode {
    /// Terminal states absorb; the episodic chain.
    Absorbing,
    /// Terminal entries restart from `d0`.
    #[default]
    Restart,
}

impl std::str::FromStr for ChainMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "absorbing" => Ok(ChainMode::Absorbing),
            "restart" => Ok(ChainMode::Restart),
            other => Err(Error::input(format!("unknown chain mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for ChainMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ChainMode::Absorbing => "absorbing",
            ChainMode::Restart => "restart",
        })
    }
}

/// Row-stochastic state-to-state matrix of the selected chain.
pub fn chain_matrix(mdp: &TabularMDP, policy: &PolicyTable, mode: ChainMode) -> Result<DMatrix<f64>> {
    let mut p = policy_transition_matrix(mdp, policy)?;
    if mode == ChainMode::Absorbing || mdp.terminal_states().is_empty() {
        return Ok(p);
    }
    let n = mdp.n_states();
    let d0 = mdp.initial_dist().probs();
    for s in 0..n {
        let mut leak = 0.0;
        for &t in mdp.terminal_states() {
            leak += p[(s, t)];
            p[(s, t)] = 0.0;
        }
        if mdp.is_terminal(s) {
            leak = 1.0;
            for j in 0..n {
                p[(s, j)] = 0.0;
            }
        }
        if leak > 0.0 {
            for j in 0..n {
                p[(s, j)] += leak * d0[j];
            }
        }
    }
    Ok(p)
}

fn propagate(pt: &DMatrix<f64>, d: &DVector<f64>) -> DVector<f64> {
    pt * d
}

/// `d^t = (P^T)^t d0`, renormalized against rounding drift.
pub fn t_step_distribution(
    mdp: &TabularMDP,
    policy: &PolicyTable,
    t: usize,
    mode: ChainMode,
) -> Result<StateDistribution> {
    t_step_distribution_from(mdp, policy, t, mode, mdp.initial_dist())
}

pub fn t_step_distribution_from(
    mdp: &TabularMDP,
    policy: &PolicyTable,
    t: usize,
    mode: ChainMode,
    start: &StateDistribution,
) -> Result<StateDistribution> {
    check_len("start distribution", mdp.n_states(), start.len())?;
    let pt = chain_matrix(mdp, policy, mode)?.transpose();
    let mut d = to_dvector(start.probs());
    for _ in 0..t {
        d = propagate(&pt, &d);
    }
    StateDistribution::from_weights(d.as_slice())
}

/// `d^γ = (I − γ P^T)^{-1} d0` by direct solve.
pub fn discounted_visiting_frequency(
    mdp: &TabularMDP,
    policy: &PolicyTable,
    discount: f64,
    mode: ChainMode,
) -> Result<VisitationWeights> {
    discounted_visiting_frequency_from(mdp, policy, discount, mode, mdp.initial_dist())
}

/// DVF of the chain defined by `mdp` (whose `d0` drives restarts) when the
/// process starts from `start` instead of `d0`.
pub fn discounted_visiting_frequency_from(
    mdp: &TabularMDP,
    policy: &PolicyTable,
    discount: f64,
    mode: ChainMode,
    start: &StateDistribution,
) -> Result<VisitationWeights> {
    if discount >= 1.0 {
        return Err(Error::input(
            "the DVF diverges for discount >= 1; use stationary_distribution for the limit",
        ));
    }
    if !(discount > 0.0) {
        return Err(Error::input(format!("discount {discount} must be in (0, 1)")));
    }
    check_len("start distribution", mdp.n_states(), start.len())?;
    let n = mdp.n_states();
    let pt = chain_matrix(mdp, policy, mode)?.transpose();
    let a = DMatrix::identity(n, n) - pt * discount;
    let w = a
        .lu()
        .solve(&to_dvector(start.probs()))
        .ok_or_else(|| Error::Numerical("singular DVF system".into()))?;
    VisitationWeights::new(w.iter().copied().collect())
}

/// Truncated series `Σ_{t<=horizon} γ^t d^t`, the independent route to the DVF.
pub fn dvf_series(
    mdp: &TabularMDP,
    policy: &PolicyTable,
    discount: f64,
    mode: ChainMode,
    start: &StateDistribution,
    horizon: usize,
) -> Result<Vec<f64>> {
    let pt = chain_matrix(mdp, policy, mode)?.transpose();
    let mut d = to_dvector(start.probs());
    let mut acc = d.clone();
    let mut scale = 1.0;
    for _ in 0..horizon {
        d = propagate(&pt, &d);
        scale *= discount;
        acc += &d * scale;
    }
    Ok(acc.iter().copied().collect())
}

/// States that matter for the ergodicity check: non-terminal states when the
/// chain restarts (terminals are transient there), otherwise all states.
fn recurrent_candidates(mdp: &TabularMDP, mode: ChainMode) -> Vec<usize> {
    match mode {
        ChainMode::Restart if !mdp.terminal_states().is_empty() => mdp.non_terminal_states(),
        _ => (0..mdp.n_states()).collect(),
    }
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Structural check that the chain restricted to its candidate states is
/// irreducible and aperiodic. Finite irreducible chains are positive recurrent.
pub fn check_ergodic(mdp: &TabularMDP, policy: &PolicyTable, mode: ChainMode) -> Result<()> {
    let p = chain_matrix(mdp, policy, mode)?;
    let states = recurrent_candidates(mdp, mode);
    let n = mdp.n_states();
    let mut member = vec![false; n];
    for &s in &states {
        member[s] = true;
    }
    let root = mdp
        .initial_dist()
        .support()
        .into_iter()
        .find(|s| member[*s])
        .unwrap_or(states[0]);

    let bfs = |forward: bool| {
        let mut level = vec![usize::MAX; n];
        level[root] = 0;
        let mut queue = std::collections::VecDeque::from([root]);
        while let Some(u) = queue.pop_front() {
            for &v in &states {
                let w = if forward { p[(u, v)] } else { p[(v, u)] };
                if w > 0.0 && level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    queue.push_back(v);
                }
            }
        }
        level
    };
    let fwd = bfs(true);
    let bwd = bfs(false);
    let unreachable: Vec<usize> = states
        .iter()
        .copied()
        .filter(|&s| fwd[s] == usize::MAX || bwd[s] == usize::MAX)
        .collect();
    if !unreachable.is_empty() {
        return Err(Error::Reducible { unreachable });
    }
    let mut period = 0;
    for &u in &states {
        for &v in &states {
            if p[(u, v)] > 0.0 {
                let diff = (fwd[u] + 1).abs_diff(fwd[v]);
                period = gcd(period, diff);
            }
        }
    }
    if period != 1 {
        return Err(Error::Periodic { period });
    }
    Ok(())
}

/// Solves `d = P^T d`, `Σ d = 1` on the restart chain.
pub fn stationary_distribution(
    mdp: &TabularMDP,
    policy: &PolicyTable,
    mode: ChainMode,
    tol: f64,
) -> Result<StateDistribution> {
    if mode == ChainMode::Absorbing && !mdp.terminal_states().is_empty() {
        return Err(Error::Precondition(
            "absorbing chains are not irreducible; use the restart chain".into(),
        ));
    }
    check_ergodic(mdp, policy, mode)?;
    solve_stationary(mdp, policy, mode, tol)
}

fn solve_stationary(
    mdp: &TabularMDP,
    policy: &PolicyTable,
    mode: ChainMode,
    tol: f64,
) -> Result<StateDistribution> {
    let n = mdp.n_states();
    let pt = chain_matrix(mdp, policy, mode)?.transpose();
    let mut a = &pt - DMatrix::identity(n, n);
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let d = a
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numerical("singular stationary system".into()))?;
    let mut d: Vec<f64> = d.iter().map(|x| x.max(0.0)).collect();
    // Terminals are transient on the restart chain; drop LU round-off there.
    if mode == ChainMode::Restart {
        for &t in mdp.terminal_states() {
            d[t] = 0.0;
        }
    }
    let dist = StateDistribution::from_weights(&d)?;
    let moved = propagate(&pt, &to_dvector(dist.probs()));
    let residual = dist.max_abs_diff(moved.as_slice());
    if residual > tol {
        return Err(Error::Numerical(format!(
            "stationary residual {residual:e} exceeds tolerance {tol:e}"
        )));
    }
    Ok(dist)
}

/// Long-run state frequency used for evaluation. Equals the stationary
/// distribution when the restart chain is ergodic; otherwise falls back to the
/// Abel limit `(1 − γ) d^γ` at γ = 1 − 1e-9, which exists for any chain.
pub fn long_run_distribution(mdp: &TabularMDP, policy: &PolicyTable) -> Result<StateDistribution> {
    match stationary_distribution(mdp, policy, ChainMode::Restart, 1e-9) {
        Ok(d) => Ok(d),
        Err(Error::Reducible { .. } | Error::Periodic { .. } | Error::Numerical(_)) => {
            let gamma = 1.0 - 1e-9;
            let w = discounted_visiting_frequency(mdp, policy, gamma, ChainMode::Restart)?;
            StateDistribution::from_weights(w.weights())
        }
        Err(e) => Err(e),
    }
}

/// Distribution over states after `t` steps from a single state `s0`.
pub fn transition_row_power(
    mdp: &TabularMDP,
    policy: &PolicyTable,
    mode: ChainMode,
    s0: usize,
    t: usize,
) -> Result<Vec<f64>> {
    let start = StateDistribution::point(mdp.n_states(), s0)?;
    Ok(t_step_distribution_from(mdp, policy, t, mode, &start)?.probs().to_vec())
}

/// Cesàro average `(1/N) Σ_{t=1..N} P^t(·|s0)`.
pub fn cesaro_average(
    mdp: &TabularMDP,
    policy: &PolicyTable,
    mode: ChainMode,
    s0: usize,
    n_steps: usize,
) -> Result<Vec<f64>> {
    if n_steps == 0 {
        return Err(Error::input("Cesàro average needs N >= 1"));
    }
    let pt = chain_matrix(mdp, policy, mode)?.transpose();
    let mut d = to_dvector(StateDistribution::point(mdp.n_states(), s0)?.probs());
    let mut acc = DVector::zeros(mdp.n_states());
    for _ in 0..n_steps {
        d = propagate(&pt, &d);
        acc += &d;
    }
    Ok(acc.iter().map(|x| x / n_steps as f64).collect())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    pub discount: f64,
    /// `‖(1 − γ) d^γ − d^π‖∞`
    pub gap: f64,
}

/// Gap between the rescaled DVF and the stationary distribution on the restart
/// chain, one row per discount. `start` defaults to the MDP's `d0`.
pub fn verify_proposition_2(
    mdp: &TabularMDP,
    policy: &PolicyTable,
    gammas: &[f64],
    start: Option<&StateDistribution>,
) -> Result<Vec<GapRow>> {
    let stationary = stationary_distribution(mdp, policy, ChainMode::Restart, 1e-10)?;
    let start = start.unwrap_or(mdp.initial_dist());
    gammas
        .iter()
        .map(|&g| {
            if !(g > 0.0 && g < 1.0) {
                return Err(Error::input(format!("discount {g} outside (0, 1)")));
            }
            let w = discounted_visiting_frequency_from(mdp, policy, g, ChainMode::Restart, start)?;
            Ok(GapRow {
                discount: g,
                gap: stationary.max_abs_diff(&w.scaled(1.0 - g)),
            })
        })
        .collect()
}

/// Geometric-horizon trajectory sampling of the normalized DVF: trajectories
/// start from `d0` and the state at step `t` is kept with probability `γ^t`.
pub fn sample_dvf<R: Rng + ?Sized>(
    mdp: &TabularMDP,
    policy: &PolicyTable,
    discount: f64,
    mode: ChainMode,
    n_trajectories: usize,
    rng: &mut R,
) -> Result<StateDistribution> {
    if !(discount > 0.0 && discount < 1.0) {
        return Err(Error::input("sampled DVF needs discount in (0, 1)"));
    }
    if n_trajectories == 0 {
        return Err(Error::input("need at least one trajectory"));
    }
    let p = chain_matrix(mdp, policy, mode)?;
    let n = mdp.n_states();
    let rows: Vec<Vec<f64>> = (0..n).map(|s| p.row(s).iter().copied().collect()).collect();
    let horizon = (1e-9f64.ln() / discount.ln()).ceil() as usize;
    let mut counts = vec![0.0; n];
    for _ in 0..n_trajectories {
        let mut s = sample_categorical(mdp.initial_dist().probs(), rng);
        let mut keep = 1.0;
        for _ in 0..=horizon {
            if rng.random::<f64>() < keep {
                counts[s] += 1.0;
            }
            keep *= discount;
            s = sample_categorical(&rows[s], rng);
        }
    }
    StateDistribution::from_weights(&counts)
}

/// Empirical state frequency of one long restart-chain run after burn-in.
pub fn sample_stationary<R: Rng + ?Sized>(
    mdp: &TabularMDP,
    policy: &PolicyTable,
    burn_in: usize,
    n_steps: usize,
    rng: &mut R,
) -> Result<StateDistribution> {
    let p = chain_matrix(mdp, policy, ChainMode::Restart)?;
    let n = mdp.n_states();
    let rows: Vec<Vec<f64>> = (0..n).map(|s| p.row(s).iter().copied().collect()).collect();
    let mut s = sample_categorical(mdp.initial_dist().probs(), rng);
    let mut counts = vec![0.0; n];
    for i in 0..burn_in + n_steps {
        if i >= burn_in {
            counts[s] += 1.0;
        }
        s = sample_categorical(&rows[s], rng);
    }
    StateDistribution::from_weights(&counts)
}
