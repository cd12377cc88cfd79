//! Exact `Q*` by value iteration on the expected-reward MDP.

use serde::Serialize;

use crate::agents::{Agent, QTable};
use crate::error::{Error, Result};
use crate::mdp::TabularMdp;

#[derive(Debug, Clone, PartialEq)]
pub struct OptimalQ {
    pub values: QTable,
    /// Sup-norm change of the final sweep.
    pub residual: f64,
    pub iterations: usize,
    /// Sup-norm change of every sweep, in order.
    pub sweep_changes: Vec<f64>,
    terminal: Vec<bool>,
}

/// Upper bound on sweeps needed from a zero start:
/// `ceil(log(tol (1 - gamma) / R) / log gamma)` with `R` the largest
/// absolute mean reward.
pub fn sweep_bound(mdp: &TabularMdp, tolerance: f64) -> usize {
    let gamma = mdp.discount();
    let r = mdp.max_abs_mean_reward();
    if r == 0.0 || gamma == 0.0 {
        return 1;
    }
    let n = (tolerance * (1.0 - gamma) / r).ln() / gamma.ln();
    n.ceil().max(1.0) as usize
}

/// `(T Q)(s, a) = sum_s' p(s'|s,a) [rbar(s'|s,a) + gamma max_a' Q(s', a')]`,
/// with the max taken as 0 at terminal `s'`.
pub fn bellman_backup(mdp: &TabularMdp, q: &QTable, out: &mut QTable) {
    let gamma = mdp.discount();
    let state_values: Vec<f64> = (0..mdp.num_states())
        .map(|s| {
            if mdp.is_terminal(s) {
                0.0
            } else {
                q.row(s).iter().copied().fold(f64::NEG_INFINITY, f64::max)
            }
        })
        .collect();
    for s in 0..mdp.num_states() {
        for a in 0..mdp.num_actions(s) {
            let v = mdp
                .outcomes(s, a)
                .iter()
                .map(|o| o.prob * (o.reward.mean() + gamma * state_values[o.next]))
                .sum();
            out.set(s, a, v);
        }
    }
}

fn sup_diff(a: &QTable, b: &QTable) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Sup-norm Bellman residual `||T Q - Q||`.
pub fn bellman_residual(mdp: &TabularMdp, q: &QTable) -> f64 {
    let mut next = q.clone();
    bellman_backup(mdp, q, &mut next);
    sup_diff(q, &next)
}

/// Jacobi value iteration from `Q = 0` until a sweep changes no entry by
/// more than `tolerance`.
pub fn value_iteration(mdp: &TabularMdp, tolerance: f64, max_iters: usize) -> Result<OptimalQ> {
    if tolerance.is_nan() || tolerance <= 0.0 {
        return Err(Error::InvalidArgument(format!("tolerance {tolerance} must be > 0")));
    }
    let mut q = QTable::zeros(mdp);
    let mut next = q.clone();
    let mut changes = Vec::new();
    for _ in 0..max_iters {
        bellman_backup(mdp, &q, &mut next);
        let change = sup_diff(&q, &next);
        std::mem::swap(&mut q, &mut next);
        changes.push(change);
        if change <= tolerance {
            return Ok(OptimalQ {
                values: q,
                residual: change,
                iterations: changes.len(),
                sweep_changes: changes,
                terminal: (0..mdp.num_states()).map(|s| mdp.is_terminal(s)).collect(),
            });
        }
    }
    Err(Error::NotConverged {
        iterations: max_iters,
        residual: changes.last().copied().unwrap_or(f64::INFINITY),
    })
}

impl OptimalQ {
    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values.get(state, action)
    }

    pub fn is_terminal(&self, state: usize) -> bool {
        self.terminal[state]
    }

    pub fn learnable_pairs(&self) -> usize {
        (0..self.terminal.len())
            .filter(|&s| !self.terminal[s])
            .map(|s| self.values.num_actions(s))
            .sum()
    }

    /// Rows `state,action,q_star` with display labels.
    pub fn rows<'a>(&'a self, mdp: &'a TabularMdp) -> impl Iterator<Item = OracleRow<'a>> + 'a {
        (0..mdp.num_states()).flat_map(move |s| {
            (0..mdp.num_actions(s)).map(move |a| OracleRow {
                state: mdp.state_label(s),
                action: mdp.action_label(s, a),
                q_star: self.get(s, a),
            })
        })
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct OracleRow<'a> {
    pub state: &'a str,
    pub action: &'a str,
    pub q_star: f64,
}

/// Mean `|Q(s,a) - Q*(s,a)|` over non-terminal `(s, a)` pairs.
pub fn q_distance(table: &QTable, optimal: &OptimalQ) -> Result<f64> {
    if !table.same_shape(&optimal.values) {
        return Err(Error::LengthMismatch {
            expected: optimal.values.values().len(),
            actual: table.values().len(),
        });
    }
    Ok(mean_abs_error(optimal, |s, a| table.get(s, a)))
}

/// [`q_distance`] of an agent's reported estimate (`(Q_A + Q_B) / 2` for
/// double Q-learning).
pub fn agent_distance(agent: &Agent, optimal: &OptimalQ) -> Result<f64> {
    if !agent.primary().same_shape(&optimal.values) {
        return Err(Error::LengthMismatch {
            expected: optimal.values.values().len(),
            actual: agent.primary().values().len(),
        });
    }
    Ok(mean_abs_error(optimal, |s, a| agent.estimate_at(s, a)))
}

fn mean_abs_error(optimal: &OptimalQ, value: impl Fn(usize, usize) -> f64) -> f64 {
    let mut total = 0.0;
    let mut count = 0usize;
    for s in (0..optimal.terminal.len()).filter(|&s| !optimal.terminal[s]) {
        for a in 0..optimal.values.num_actions(s) {
            total += (value(s, a) - optimal.get(s, a)).abs();
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}
