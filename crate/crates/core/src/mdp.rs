//! Finite MDPs with stochastic rewards, and the maximization-bias benchmark.
//!
//! States and actions are dense 0-based indices. Labels exist only for
//! display (oracle CSV, environment files).

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Tolerance on the sum of each transition row.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// Name of the built-in maximization-bias environment.
pub const MAX_BIAS: &str = "max-bias";

/// State indices of the maximization-bias environment.
pub mod max_bias {
    pub const A: usize = 0;
    pub const B: usize = 1;
    pub const C: usize = 2;
    pub const D: usize = 3;
    /// Actions at `A`.
    pub const LEFT: usize = 0;
    pub const RIGHT: usize = 1;
    pub const B_ACTIONS: usize = 8;
    pub const B_REWARD_MEAN: f64 = -0.1;
    pub const B_REWARD_STD: f64 = 1.0;
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RewardDist {
    Constant { mean: f64 },
    Gaussian { mean: f64, std: f64 },
}

impl RewardDist {
    pub fn constant(mean: f64) -> Self {
        RewardDist::Constant { mean }
    }

    pub fn gaussian(mean: f64, std: f64) -> Self {
        RewardDist::Gaussian { mean, std }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            RewardDist::Constant { mean } | RewardDist::Gaussian { mean, .. } => mean,
        }
    }

    pub fn std(&self) -> f64 {
        match *self {
            RewardDist::Constant { .. } => 0.0,
            RewardDist::Gaussian { std, .. } => std,
        }
    }

    /// Constant rewards consume no randomness.
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        match *self {
            RewardDist::Constant { mean } => mean,
            RewardDist::Gaussian { mean, std } => mean + std * rng.standard_normal(),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            RewardDist::Constant { mean } if mean.is_finite() => Ok(()),
            RewardDist::Gaussian { mean, std } if mean.is_finite() && std.is_finite() && std > 0.0 => {
                Ok(())
            }
            other => Err(Error::InvalidMdp(format!("bad reward distribution {other:?}"))),
        }
    }
}

/// One branch of a `(state, action)` transition row.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outcome {
    pub next: usize,
    pub prob: f64,
    pub reward: RewardDist,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Transition {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
    pub is_terminal: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ActionSpec {
    #[serde(default)]
    label: Option<String>,
    outcomes: Vec<Outcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateSpec {
    #[serde(default)]
    label: Option<String>,
    #[serde(default)]
    terminal: bool,
    #[serde(default)]
    actions: Vec<ActionSpec>,
}

/// On-disk environment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MdpSpec {
    discount: f64,
    #[serde(default)]
    start: usize,
    #[serde(default)]
    tracked_action: Option<usize>,
    states: Vec<StateSpec>,
}

/// Immutable after construction; share freely across runs.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    state_labels: Vec<String>,
    action_labels: Vec<Vec<String>>,
    terminal: Vec<bool>,
    /// `rows[s][a]` is the categorical next-state distribution of `(s, a)`.
    rows: Vec<Vec<Vec<Outcome>>>,
    start_state: usize,
    discount: f64,
    /// Action at the start state whose selection frequency the harness
    /// reports (the suboptimal `Left` in `max-bias`).
    tracked_action: Option<usize>,
}

impl TabularMdp {
    pub fn num_states(&self) -> usize {
        self.terminal.len()
    }

    pub fn num_actions(&self, state: usize) -> usize {
        self.rows[state].len()
    }

    pub fn actions_per_state(&self) -> Vec<usize> {
        self.rows.iter().map(Vec::len).collect()
    }

    pub fn is_terminal(&self, state: usize) -> bool {
        self.terminal[state]
    }

    pub fn start_state(&self) -> usize {
        self.start_state
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn tracked_action(&self) -> Option<usize> {
        self.tracked_action
    }

    pub fn state_label(&self, state: usize) -> &str {
        &self.state_labels[state]
    }

    pub fn action_label(&self, state: usize, action: usize) -> &str {
        &self.action_labels[state][action]
    }

    pub fn outcomes(&self, state: usize, action: usize) -> &[Outcome] {
        &self.rows[state][action]
    }

    /// Largest absolute reward mean; bounds `|Q*|` by `r_max / (1 - discount)`.
    pub fn max_abs_mean_reward(&self) -> f64 {
        self.rows
            .iter()
            .flatten()
            .flatten()
            .map(|o| o.reward.mean().abs())
            .fold(0.0, f64::max)
    }

    /// Same environment with a different discount factor.
    pub fn with_discount(mut self, discount: f64) -> Result<Self> {
        check_discount(discount)?;
        self.discount = discount;
        Ok(self)
    }

    /// Samples a transition. The next state is drawn by inverse CDF over the
    /// row (one uniform per step, even for deterministic rows), then the
    /// reward of the chosen branch is sampled.
    pub fn step(&self, state: usize, action: usize, rng: &mut RngStream) -> Result<Transition> {
        self.check_state_action(state, action)?;
        let row = &self.rows[state][action];
        let u = rng.uniform();
        let mut cumulative = 0.0;
        let mut chosen = None;
        for outcome in row {
            if outcome.prob <= 0.0 {
                continue;
            }
            cumulative += outcome.prob;
            chosen = Some(outcome);
            if u < cumulative {
                break;
            }
        }
        // Validation guarantees at least one branch with positive mass.
        let outcome = chosen.expect("validated row has positive mass");
        Ok(Transition {
            state,
            action,
            reward: outcome.reward.sample(rng),
            next_state: outcome.next,
            is_terminal: self.terminal[outcome.next],
        })
    }

    pub fn check_state_action(&self, state: usize, action: usize) -> Result<()> {
        if state >= self.num_states() {
            return Err(Error::StateOutOfRange {
                state,
                num_states: self.num_states(),
            });
        }
        if self.terminal[state] {
            return Err(Error::TerminalState(state));
        }
        let available = self.num_actions(state);
        if action >= available {
            return Err(Error::ActionOutOfRange {
                state,
                action,
                available,
            });
        }
        Ok(())
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let spec: MdpSpec =
            serde_json::from_str(text).map_err(|e| Error::InvalidMdp(e.to_string()))?;
        Self::from_spec(spec)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let spec: MdpSpec = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_spec(spec)
    }

    pub fn to_json_string(&self) -> String {
        let spec = MdpSpec {
            discount: self.discount,
            start: self.start_state,
            tracked_action: self.tracked_action,
            states: (0..self.num_states())
                .map(|s| StateSpec {
                    label: Some(self.state_labels[s].clone()),
                    terminal: self.terminal[s],
                    actions: self.rows[s]
                        .iter()
                        .zip(&self.action_labels[s])
                        .map(|(outcomes, label)| ActionSpec {
                            label: Some(label.clone()),
                            outcomes: outcomes.clone(),
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&spec).expect("mdp spec serializes")
    }

    fn from_spec(spec: MdpSpec) -> Result<Self> {
        check_discount(spec.discount)?;
        let n = spec.states.len();
        if n == 0 {
            return Err(Error::InvalidMdp("no states".into()));
        }
        if spec.start >= n {
            return Err(Error::InvalidMdp(format!("start state {} out of range", spec.start)));
        }
        if spec.states[spec.start].terminal {
            return Err(Error::InvalidMdp("start state is terminal".into()));
        }
        if let Some(a) = spec.tracked_action {
            if a >= spec.states[spec.start].actions.len() {
                return Err(Error::InvalidMdp(format!(
                    "tracked action {a} out of range at start state"
                )));
            }
        }

        let mut state_labels = Vec::with_capacity(n);
        let mut action_labels = Vec::with_capacity(n);
        let mut terminal = Vec::with_capacity(n);
        let mut rows = Vec::with_capacity(n);
        for (s, state) in spec.states.into_iter().enumerate() {
            if state.terminal && !state.actions.is_empty() {
                return Err(Error::InvalidMdp(format!("terminal state {s} declares actions")));
            }
            if !state.terminal && state.actions.is_empty() {
                return Err(Error::InvalidMdp(format!("non-terminal state {s} has no actions")));
            }
            let mut labels = Vec::with_capacity(state.actions.len());
            let mut state_rows = Vec::with_capacity(state.actions.len());
            for (a, action) in state.actions.into_iter().enumerate() {
                validate_row(s, a, n, &action.outcomes)?;
                labels.push(action.label.unwrap_or_else(|| a.to_string()));
                state_rows.push(action.outcomes);
            }
            state_labels.push(state.label.unwrap_or_else(|| s.to_string()));
            action_labels.push(labels);
            terminal.push(state.terminal);
            rows.push(state_rows);
        }

        Ok(Self {
            state_labels,
            action_labels,
            terminal,
            rows,
            start_state: spec.start,
            discount: spec.discount,
            tracked_action: spec.tracked_action,
        })
    }
}

fn check_discount(discount: f64) -> Result<()> {
    if (0.0..1.0).contains(&discount) {
        Ok(())
    } else {
        Err(Error::InvalidMdp(format!("discount {discount} not in [0, 1)")))
    }
}

fn validate_row(state: usize, action: usize, num_states: usize, row: &[Outcome]) -> Result<()> {
    if row.is_empty() {
        return Err(Error::InvalidMdp(format!("({state}, {action}) has no outcomes")));
    }
    let mut seen = vec![false; num_states];
    let mut total = 0.0;
    for o in row {
        if o.next >= num_states {
            return Err(Error::InvalidMdp(format!(
                "({state}, {action}) leads to unknown state {}",
                o.next
            )));
        }
        if std::mem::replace(&mut seen[o.next], true) {
            return Err(Error::InvalidMdp(format!(
                "({state}, {action}) lists next state {} twice",
                o.next
            )));
        }
        if !o.prob.is_finite() || o.prob < 0.0 {
            return Err(Error::InvalidMdp(format!(
                "({state}, {action}) has invalid probability {}",
                o.prob
            )));
        }
        o.reward.validate()?;
        total += o.prob;
    }
    if (total - 1.0).abs() > ROW_SUM_TOLERANCE {
        return Err(Error::InvalidMdp(format!(
            "({state}, {action}) probabilities sum to {total}"
        )));
    }
    Ok(())
}

/// The two-decision benchmark: from `A`, `Right` ends the episode in `C`
/// with reward 0 and `Left` moves to `B` with reward 0. Each of the eight
/// actions in `B` ends in `D` with a Gaussian(-0.1, 1) reward.
pub fn make_max_bias_env(discount: f64) -> Result<TabularMdp> {
    use max_bias::*;
    check_discount(discount)?;
    let det = |next, reward| {
        vec![Outcome {
            next,
            prob: 1.0,
            reward,
        }]
    };
    let rows = vec![
        vec![det(B, RewardDist::constant(0.0)), det(C, RewardDist::constant(0.0))],
        (0..B_ACTIONS)
            .map(|_| det(D, RewardDist::gaussian(B_REWARD_MEAN, B_REWARD_STD)))
            .collect(),
        Vec::new(),
        Vec::new(),
    ];
    Ok(TabularMdp {
        state_labels: ["A", "B", "C", "D"].map(String::from).to_vec(),
        action_labels: vec![
            vec!["left".into(), "right".into()],
            (0..B_ACTIONS).map(|a| a.to_string()).collect(),
            Vec::new(),
            Vec::new(),
        ],
        terminal: vec![false, false, true, true],
        rows,
        start_state: A,
        discount,
        tracked_action: Some(LEFT),
    })
}

/// Resolves a built-in environment name.
pub fn builtin(name: &str, discount: f64) -> Result<TabularMdp> {
    match name {
        MAX_BIAS => make_max_bias_env(discount),
        other => Err(Error::InvalidArgument(format!("unknown environment `{other}`"))),
    }
}

#[cfg(test)]
mod tests {
    use super::max_bias::*;
    use super::*;

    fn three_way() -> TabularMdp {
        TabularMdp::from_json_str(
            r#"{
              "discount": 0.9,
              "states": [
                {"label": "s", "actions": [{"outcomes": [
                  {"next": 0, "prob": 0.2, "reward": {"kind": "constant", "mean": 1.0}},
                  {"next": 1, "prob": 0.5, "reward": {"kind": "constant", "mean": 2.0}},
                  {"next": 2, "prob": 0.3, "reward": {"kind": "gaussian", "mean": 0.0, "std": 1.0}}
                ]}]},
                {"label": "x", "terminal": true},
                {"label": "y", "terminal": true}
              ]
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn max_bias_shape() {
        let env = make_max_bias_env(0.99).unwrap();
        assert_eq!(env.num_states(), 4);
        assert_eq!(env.actions_per_state(), vec![2, 8, 0, 0]);
        assert_eq!(env.start_state(), A);
        assert!(env.is_terminal(C) && env.is_terminal(D));
        for a in 0..B_ACTIONS {
            let row = env.outcomes(B, a);
            assert_eq!(row.len(), 1);
            assert_eq!(row[0].next, D);
            assert_eq!(row[0].reward.mean(), -0.1);
            assert_eq!(row[0].reward.std(), 1.0);
        }
    }

    #[test]
    fn max_bias_deterministic_moves() {
        let env = make_max_bias_env(0.99).unwrap();
        let mut rng = RngStream::new(0, 0);
        for _ in 0..100 {
            let right = env.step(A, RIGHT, &mut rng).unwrap();
            assert_eq!((right.reward, right.next_state, right.is_terminal), (0.0, C, true));
            let left = env.step(A, LEFT, &mut rng).unwrap();
            assert_eq!((left.reward, left.next_state, left.is_terminal), (0.0, B, false));
        }
    }

    #[test]
    fn terminal_and_range_errors() {
        let env = make_max_bias_env(0.99).unwrap();
        let mut rng = RngStream::new(0, 0);
        assert!(matches!(env.step(C, 0, &mut rng), Err(Error::TerminalState(C))));
        assert!(matches!(env.step(D, 0, &mut rng), Err(Error::TerminalState(D))));
        assert!(matches!(env.step(9, 0, &mut rng), Err(Error::StateOutOfRange { .. })));
        assert!(matches!(env.step(A, 2, &mut rng), Err(Error::ActionOutOfRange { .. })));
    }

    #[test]
    fn degenerate_constant_row() {
        let env = TabularMdp::from_json_str(
            r#"{"discount": 0.5, "states": [{"actions": [{"outcomes": [
                {"next": 0, "prob": 1.0, "reward": {"kind": "constant", "mean": 5.0}}]}]}]}"#,
        )
        .unwrap();
        let mut rng = RngStream::new(3, 0);
        for _ in 0..50 {
            let t = env.step(0, 0, &mut rng).unwrap();
            assert_eq!((t.reward, t.next_state, t.is_terminal), (5.0, 0, false));
        }
    }

    #[test]
    fn categorical_frequencies_match_row() {
        let env = three_way();
        let mut rng = RngStream::new(11, 0);
        let n = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..n {
            counts[env.step(0, 0, &mut rng).unwrap().next_state] += 1;
        }
        for (o, &c) in env.outcomes(0, 0).iter().zip(&counts) {
            let p = o.prob;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            let freq = c as f64 / n as f64;
            assert!((freq - p).abs() < 3.0 * se, "freq {freq} vs {p}");
        }
    }

    #[test]
    fn gaussian_reward_mean() {
        let env = make_max_bias_env(0.99).unwrap();
        let mut rng = RngStream::new(5, 0);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|i| env.step(B, i % B_ACTIONS, &mut rng).unwrap().reward)
            .sum::<f64>()
            / n as f64;
        assert!((mean + 0.1).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn same_seed_same_transitions() {
        let env = three_way();
        let run = |seed| {
            let mut rng = RngStream::new(seed, 2);
            (0..1000)
                .map(|_| {
                    let t = env.step(0, 0, &mut rng).unwrap();
                    (t.next_state, t.reward.to_bits())
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(run(42), run(42));
        assert_ne!(run(42), run(43));
    }

    #[test]
    fn rejects_bad_rows() {
        let bad_sum = r#"{"discount": 0.5, "states": [{"actions": [{"outcomes": [
            {"next": 0, "prob": 0.5, "reward": {"kind": "constant", "mean": 0.0}}]}]}]}"#;
        assert!(TabularMdp::from_json_str(bad_sum).is_err());
        let bad_discount = r#"{"discount": 1.0, "states": [{"actions": [{"outcomes": [
            {"next": 0, "prob": 1.0, "reward": {"kind": "constant", "mean": 0.0}}]}]}]}"#;
        assert!(TabularMdp::from_json_str(bad_discount).is_err());
        let zero_std = r#"{"discount": 0.5, "states": [{"actions": [{"outcomes": [
            {"next": 0, "prob": 1.0, "reward": {"kind": "gaussian", "mean": 0.0, "std": 0.0}}]}]}]}"#;
        assert!(TabularMdp::from_json_str(zero_std).is_err());
        let terminal_start = r#"{"discount": 0.5, "states": [{"terminal": true}]}"#;
        assert!(TabularMdp::from_json_str(terminal_start).is_err());
    }

    #[test]
    fn json_round_trip_of_builtin() {
        let env = make_max_bias_env(0.99).unwrap();
        let back = TabularMdp::from_json_str(&env.to_json_string()).unwrap();
        assert_eq!(env, back);
    }
}
