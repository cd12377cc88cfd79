//! Tabular learners: Q-learning, double Q-learning, smoothed Q-learning and
//! SARSA, plus the epsilon-greedy behaviour policy they share.
//!
//! All four apply `Q(s,a) += alpha (target - Q(s,a))` to a single entry and
//! differ only in the bootstrap term of `target = r + gamma * bootstrap`
//! (0 when `s'` is terminal):
//!
//! | agent        | bootstrap                                   |
//! |--------------|---------------------------------------------|
//! | `q`          | `max_a' Q(s',a')`                           |
//! | `smoothed-q` | `sum_a' q_t(a'|s') Q(s',a')`                |
//! | `double-q`   | `Q_B(s', argmax_a' Q_A(s',a'))` (or A<->B)  |
//! | `sarsa`      | `Q(s', a')` for the behaviour action `a'`   |

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{TabularMdp, Transition};
use crate::rng::RngStream;
use crate::smoothing::{argmax_lowest, SmoothingSpec};

/// Dense `(state, action) -> value` table laid out state by state.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    offsets: Vec<usize>,
    values: Vec<f64>,
}

impl QTable {
    pub fn from_shape(actions_per_state: &[usize], fill: f64) -> Self {
        let mut offsets = Vec::with_capacity(actions_per_state.len() + 1);
        offsets.push(0);
        for &n in actions_per_state {
            offsets.push(offsets.last().unwrap() + n);
        }
        let len = *offsets.last().unwrap();
        Self {
            offsets,
            values: vec![fill; len],
        }
    }

    pub fn zeros(mdp: &TabularMdp) -> Self {
        Self::from_shape(&mdp.actions_per_state(), 0.0)
    }

    pub fn num_states(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_actions(&self, state: usize) -> usize {
        self.offsets[state + 1] - self.offsets[state]
    }

    pub fn shape(&self) -> Vec<usize> {
        (0..self.num_states()).map(|s| self.num_actions(s)).collect()
    }

    pub fn same_shape(&self, other: &QTable) -> bool {
        self.offsets == other.offsets
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[self.offsets[state]..self.offsets[state + 1]]
    }

    pub fn row_mut(&mut self, state: usize) -> &mut [f64] {
        &mut self.values[self.offsets[state]..self.offsets[state + 1]]
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.row(state)[action]
    }

    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.row_mut(state)[action] = value;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    fn index(&self, state: usize, action: usize) -> Result<usize> {
        if state >= self.num_states() {
            return Err(Error::StateOutOfRange {
                state,
                num_states: self.num_states(),
            });
        }
        let available = self.num_actions(state);
        if action >= available {
            return Err(Error::ActionOutOfRange {
                state,
                action,
                available,
            });
        }
        Ok(self.offsets[state] + action)
    }

    fn check_state(&self, state: usize) -> Result<()> {
        if state < self.num_states() {
            Ok(())
        } else {
            Err(Error::StateOutOfRange {
                state,
                num_states: self.num_states(),
            })
        }
    }
}

/// Initial table values. Text form: `zeros`, `const:C`, `uniform:LO:HI`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum InitSpec {
    #[default]
    Zeros,
    Constant(f64),
    Uniform { lo: f64, hi: f64 },
}

impl InitSpec {
    pub fn build(&self, mdp: &TabularMdp, rng: &mut RngStream) -> QTable {
        let mut table = QTable::zeros(mdp);
        match *self {
            InitSpec::Zeros => {}
            InitSpec::Constant(c) => table.values_mut().fill(c),
            InitSpec::Uniform { lo, hi } => {
                for v in table.values_mut() {
                    *v = lo + (hi - lo) * rng.uniform();
                }
            }
        }
        table
    }

    /// Largest `|Q_0|` this spec can produce.
    pub fn max_abs(&self) -> f64 {
        match *self {
            InitSpec::Zeros => 0.0,
            InitSpec::Constant(c) => c.abs(),
            InitSpec::Uniform { lo, hi } => lo.abs().max(hi.abs()),
        }
    }
}

impl fmt::Display for InitSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            InitSpec::Zeros => f.write_str("zeros"),
            InitSpec::Constant(c) => write!(f, "const:{c}"),
            InitSpec::Uniform { lo, hi } => write!(f, "uniform:{lo}:{hi}"),
        }
    }
}

impl FromStr for InitSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |p: &str| {
            p.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::Parse(format!("bad number `{p}` in init `{s}`")))
        };
        match parts.as_slice() {
            ["zeros"] => Ok(InitSpec::Zeros),
            ["const", c] => Ok(InitSpec::Constant(num(c)?)),
            ["uniform", lo, hi] => {
                let (lo, hi) = (num(lo)?, num(hi)?);
                if lo > hi {
                    return Err(Error::Parse(format!("uniform init needs lo <= hi in `{s}`")));
                }
                Ok(InitSpec::Uniform { lo, hi })
            }
            _ => Err(Error::Parse(format!("unknown init `{s}`"))),
        }
    }
}

impl TryFrom<String> for InitSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<InitSpec> for String {
    fn from(s: InitSpec) -> String {
        s.to_string()
    }
}

/// What the schedule index `t` counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ScheduleClock {
    /// Transitions observed by the agent so far, plus one.
    #[default]
    GlobalStep,
    /// Prior updates of the `(s, a)` entry being updated, plus one.
    PerVisit,
    /// Episodes started so far (the current episode's 1-based index).
    PerEpisode,
}

impl FromStr for ScheduleClock {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global-step" | "global" => Ok(ScheduleClock::GlobalStep),
            "per-visit" | "visit" => Ok(ScheduleClock::PerVisit),
            "per-episode" | "episode" => Ok(ScheduleClock::PerEpisode),
            other => Err(Error::Parse(format!("unknown clock `{other}`"))),
        }
    }
}

/// Learner names as used on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AgentName {
    Q,
    DoubleQ,
    Sarsa,
    SmoothedQ,
}

impl AgentName {
    pub const ALL: [AgentName; 4] = [
        AgentName::Q,
        AgentName::DoubleQ,
        AgentName::Sarsa,
        AgentName::SmoothedQ,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            AgentName::Q => "q",
            AgentName::DoubleQ => "double-q",
            AgentName::Sarsa => "sarsa",
            AgentName::SmoothedQ => "smoothed-q",
        }
    }
}

impl fmt::Display for AgentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        AgentName::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| Error::Parse(format!("unknown agent `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AgentKind {
    Q,
    DoubleQ,
    SmoothedQ(SmoothingSpec),
    Sarsa,
}

impl AgentKind {
    /// `smoothing` is only consulted for `smoothed-q`.
    pub fn new(name: AgentName, smoothing: SmoothingSpec) -> Self {
        match name {
            AgentName::Q => AgentKind::Q,
            AgentName::DoubleQ => AgentKind::DoubleQ,
            AgentName::Sarsa => AgentKind::Sarsa,
            AgentName::SmoothedQ => AgentKind::SmoothedQ(smoothing),
        }
    }

    pub fn name(&self) -> AgentName {
        match self {
            AgentKind::Q => AgentName::Q,
            AgentKind::DoubleQ => AgentName::DoubleQ,
            AgentKind::SmoothedQ(_) => AgentName::SmoothedQ,
            AgentKind::Sarsa => AgentName::Sarsa,
        }
    }
}

fn terminal_or(tr: &Transition, bootstrap: impl FnOnce() -> Result<f64>) -> Result<f64> {
    if tr.is_terminal {
        Ok(0.0)
    } else {
        bootstrap()
    }
}

/// `r + gamma max_a' Q(s', a')`.
pub fn q_target(table: &QTable, gamma: f64, tr: &Transition) -> Result<f64> {
    let boot = terminal_or(tr, || {
        table.check_state(tr.next_state)?;
        let row = table.row(tr.next_state);
        Ok(row[argmax_lowest(row)])
    })?;
    Ok(tr.reward + gamma * boot)
}

/// `r + gamma sum_a' q_t(a'|s') Q(s', a')`.
pub fn smoothed_target(
    table: &QTable,
    gamma: f64,
    spec: &SmoothingSpec,
    t: u64,
    tr: &Transition,
) -> Result<f64> {
    let boot = terminal_or(tr, || {
        table.check_state(tr.next_state)?;
        spec.smoothed_value(table.row(tr.next_state), t)
    })?;
    Ok(tr.reward + gamma * boot)
}

/// `r + gamma Q_eval(s', argmax_a' Q_select(s', a'))`.
pub fn double_target(
    select: &QTable,
    evaluate: &QTable,
    gamma: f64,
    tr: &Transition,
) -> Result<f64> {
    let boot = terminal_or(tr, || {
        select.check_state(tr.next_state)?;
        let best = argmax_lowest(select.row(tr.next_state));
        Ok(evaluate.get(tr.next_state, best))
    })?;
    Ok(tr.reward + gamma * boot)
}

/// `r + gamma Q(s', a')`.
pub fn sarsa_target(
    table: &QTable,
    gamma: f64,
    tr: &Transition,
    next_action: Option<usize>,
) -> Result<f64> {
    let boot = terminal_or(tr, || {
        let a = next_action.ok_or(Error::MissingNextAction(tr.next_state))?;
        Ok(table.values[table.index(tr.next_state, a)?])
    })?;
    Ok(tr.reward + gamma * boot)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("learning rate {alpha} not in (0, 1]")))
    }
}

fn apply(table: &mut QTable, tr: &Transition, alpha: f64, target: f64) -> Result<()> {
    let idx = table.index(tr.state, tr.action)?;
    let old = table.values[idx];
    let new = old + alpha * (target - old);
    if !new.is_finite() {
        return Err(Error::NonFinite(format!(
            "update of ({}, {}) produced {new}",
            tr.state, tr.action
        )));
    }
    table.values[idx] = new;
    Ok(())
}

/// Learner state for one run. Not shared between runs.
#[derive(Debug, Clone)]
pub struct Agent {
    kind: AgentKind,
    primary: QTable,
    /// `Q_B`; present only for double Q-learning.
    secondary: Option<QTable>,
    gamma: f64,
    clock: ScheduleClock,
    steps: u64,
    episodes: u64,
    visits: Vec<u64>,
}

impl Agent {
    /// Builds an agent whose table(s) are drawn from `init`. Double
    /// Q-learning draws `Q_A` then `Q_B`.
    pub fn new(
        kind: AgentKind,
        mdp: &TabularMdp,
        init: InitSpec,
        clock: ScheduleClock,
        rng: &mut RngStream,
    ) -> Self {
        let primary = init.build(mdp, rng);
        let secondary = matches!(kind, AgentKind::DoubleQ).then(|| init.build(mdp, rng));
        Self::assemble(kind, primary, secondary, mdp.discount(), clock)
    }

    /// Starts from an explicit table (copied into both halves for double Q).
    pub fn from_table(kind: AgentKind, table: QTable, gamma: f64, clock: ScheduleClock) -> Self {
        let secondary = matches!(kind, AgentKind::DoubleQ).then(|| table.clone());
        Self::assemble(kind, table, secondary, gamma, clock)
    }

    pub fn from_tables(table_a: QTable, table_b: QTable, gamma: f64, clock: ScheduleClock) -> Result<Self> {
        if !table_a.same_shape(&table_b) {
            return Err(Error::InvalidArgument("double Q tables differ in shape".into()));
        }
        Ok(Self::assemble(AgentKind::DoubleQ, table_a, Some(table_b), gamma, clock))
    }

    fn assemble(
        kind: AgentKind,
        primary: QTable,
        secondary: Option<QTable>,
        gamma: f64,
        clock: ScheduleClock,
    ) -> Self {
        let visits = vec![0; primary.values.len()];
        Self {
            kind,
            primary,
            secondary,
            gamma,
            clock,
            steps: 0,
            episodes: 0,
            visits,
        }
    }

    pub fn kind(&self) -> &AgentKind {
        &self.kind
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// The table the agent learns (`Q_A` for double Q-learning).
    pub fn primary(&self) -> &QTable {
        &self.primary
    }

    pub fn secondary(&self) -> Option<&QTable> {
        self.secondary.as_ref()
    }

    /// Transitions observed so far.
    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Marks the start of an episode (drives [`ScheduleClock::PerEpisode`]).
    pub fn start_episode(&mut self) {
        self.episodes += 1;
    }

    /// Schedule index for the next update of `(state, action)`.
    pub fn clock_for(&self, state: usize, action: usize) -> Result<u64> {
        Ok(match self.clock {
            ScheduleClock::GlobalStep => self.steps + 1,
            ScheduleClock::PerVisit => self.visits[self.primary.index(state, action)?] + 1,
            ScheduleClock::PerEpisode => self.episodes.max(1),
        })
    }

    /// Reported estimate: the primary table, or `(Q_A + Q_B) / 2`.
    pub fn estimate(&self) -> QTable {
        match &self.secondary {
            None => self.primary.clone(),
            Some(b) => {
                let mut out = self.primary.clone();
                for (v, w) in out.values.iter_mut().zip(&b.values) {
                    *v = 0.5 * (*v + w);
                }
                out
            }
        }
    }

    /// `estimate()[state][action]` without building a table.
    pub fn estimate_at(&self, state: usize, action: usize) -> f64 {
        let a = self.primary.get(state, action);
        match &self.secondary {
            None => a,
            Some(b) => 0.5 * (a + b.get(state, action)),
        }
    }

    /// Greedy-evaluation value used by action selection (`Q_A + Q_B` for
    /// double Q-learning).
    fn eval_at(&self, state: usize, action: usize) -> f64 {
        let a = self.primary.get(state, action);
        match &self.secondary {
            None => a,
            Some(b) => a + b.get(state, action),
        }
    }

    /// Epsilon-greedy: with probability `epsilon` a uniformly random action,
    /// otherwise a uniformly random maximizer of the evaluation row.
    pub fn select_action(&self, state: usize, epsilon: f64, rng: &mut RngStream) -> Result<usize> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidArgument(format!("epsilon {epsilon} not in [0, 1]")));
        }
        self.primary.check_state(state)?;
        let n = self.primary.num_actions(state);
        if n == 0 {
            return Err(Error::TerminalState(state));
        }
        if rng.uniform() < epsilon {
            return Ok(rng.below(n));
        }
        let mut best = f64::NEG_INFINITY;
        let mut ties = 0;
        for a in 0..n {
            let v = self.eval_at(state, a);
            if v > best {
                best = v;
                ties = 1;
            } else if v == best {
                ties += 1;
            }
        }
        let pick = if ties > 1 { rng.below(ties) } else { 0 };
        Ok((0..n)
            .filter(|&a| self.eval_at(state, a) == best)
            .nth(pick)
            .expect("tie index within tie count"))
    }

    fn require(&self, expected: AgentName) -> Result<()> {
        let actual = self.kind.name();
        if actual == expected {
            Ok(())
        } else {
            Err(Error::WrongAgent {
                expected: expected.as_str(),
                actual: actual.as_str(),
            })
        }
    }

    fn advance(&mut self, tr: &Transition) -> Result<()> {
        let idx = self.primary.index(tr.state, tr.action)?;
        self.visits[idx] += 1;
        self.steps += 1;
        Ok(())
    }

    pub fn q_update(&mut self, tr: &Transition, alpha: f64) -> Result<()> {
        self.require(AgentName::Q)?;
        check_alpha(alpha)?;
        let target = q_target(&self.primary, self.gamma, tr)?;
        apply(&mut self.primary, tr, alpha, target)?;
        self.advance(tr)
    }

    pub fn smoothed_q_update(&mut self, tr: &Transition, alpha: f64) -> Result<()> {
        let AgentKind::SmoothedQ(spec) = self.kind else {
            return Err(Error::WrongAgent {
                expected: AgentName::SmoothedQ.as_str(),
                actual: self.kind.name().as_str(),
            });
        };
        check_alpha(alpha)?;
        let t = self.clock_for(tr.state, tr.action)?;
        let target = smoothed_target(&self.primary, self.gamma, &spec, t, tr)?;
        apply(&mut self.primary, tr, alpha, target)?;
        self.advance(tr)
    }

    /// Flips a fair coin on `rng`; heads updates `Q_A` using `Q_B` to
    /// evaluate `Q_A`'s greedy action, tails the mirror image. Returns
    /// whether `Q_A` was the table updated.
    pub fn double_q_update(&mut self, tr: &Transition, alpha: f64, rng: &mut RngStream) -> Result<bool> {
        self.require(AgentName::DoubleQ)?;
        check_alpha(alpha)?;
        let update_a = rng.coin();
        self.double_q_update_branch(tr, alpha, update_a)?;
        Ok(update_a)
    }

    /// One fixed branch of [`double_q_update`](Self::double_q_update).
    pub fn double_q_update_branch(&mut self, tr: &Transition, alpha: f64, update_a: bool) -> Result<()> {
        self.require(AgentName::DoubleQ)?;
        check_alpha(alpha)?;
        let b = self.secondary.as_mut().expect("double Q keeps two tables");
        let (learner, other) = if update_a {
            (&mut self.primary, &*b)
        } else {
            (b, &self.primary)
        };
        let target = double_target(learner, other, self.gamma, tr)?;
        apply(learner, tr, alpha, target)?;
        self.advance(tr)
    }

    pub fn sarsa_update(&mut self, tr: &Transition, next_action: Option<usize>, alpha: f64) -> Result<()> {
        self.require(AgentName::Sarsa)?;
        check_alpha(alpha)?;
        let target = sarsa_target(&self.primary, self.gamma, tr, next_action)?;
        apply(&mut self.primary, tr, alpha, target)?;
        self.advance(tr)
    }

    /// Dispatches to the update of this agent's kind.
    pub fn observe(
        &mut self,
        tr: &Transition,
        next_action: Option<usize>,
        alpha: f64,
        rng: &mut RngStream,
    ) -> Result<()> {
        match self.kind {
            AgentKind::Q => self.q_update(tr, alpha),
            AgentKind::SmoothedQ(_) => self.smoothed_q_update(tr, alpha),
            AgentKind::DoubleQ => self.double_q_update(tr, alpha, rng).map(|_| ()),
            AgentKind::Sarsa => self.sarsa_update(tr, next_action, alpha),
        }
    }
}
