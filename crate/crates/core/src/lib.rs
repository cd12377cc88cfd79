//! Tabular value learning on finite MDPs: standard, double and smoothed
//! Q-learning plus SARSA, an exact value-iteration oracle, and a
//! seed-reproducible Monte Carlo harness for the maximization-bias benchmark.
//!
//! The smoothed update replaces the hard `max` in the Q-learning bootstrap
//! with an expectation under a distribution `q_t(a | s')` that concentrates
//! on the greedy action as `t` grows (see [`smoothing`]).

pub mod agents;
pub mod cli;
pub mod error;
pub mod harness;
pub mod mdp;
pub mod oracle;
pub mod rng;
pub mod schedules;
pub mod smoothing;

pub use agents::{Agent, AgentKind, InitSpec, QTable, ScheduleClock};
pub use error::{Error, Result};
pub use harness::{AggregateSeries, ExperimentConfig, RunTrace};
pub use mdp::{RewardDist, TabularMdp, Transition};
pub use oracle::OptimalQ;
pub use rng::RngStream;
pub use schedules::Schedule;
pub use smoothing::{ActionDistribution, SmoothingSpec};
