//! Bootstrap distributions `q_t(a | s')` over the actions of the next state.
//!
//! The smoothed target replaces `max_a Q(s', a)` with
//! `sum_a q_t(a | s') Q(s', a)`, which never exceeds the max. Every family
//! here concentrates on the greedy action as its schedule advances: softmax
//! as `beta_t` grows, clipped max as `delta_t` shrinks.
//!
//! Text form: `max`, `softmax:<schedule>`, `clipped:<schedule>`, e.g.
//! `softmax:linear:0.1:0.1` or `clipped:exp:0.02`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedules::Schedule;

/// Tolerance on the total mass of an [`ActionDistribution`].
pub const MASS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct ActionDistribution {
    probs: Vec<f64>,
}

impl ActionDistribution {
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    /// Dot product with `q_row`.
    pub fn expected_value(&self, q_row: &[f64]) -> Result<f64> {
        if q_row.len() != self.probs.len() {
            return Err(Error::LengthMismatch {
                expected: self.probs.len(),
                actual: q_row.len(),
            });
        }
        Ok(self.probs.iter().zip(q_row).map(|(p, q)| p * q).sum())
    }

    /// Total-variation distance to `other`.
    pub fn total_variation(&self, other: &ActionDistribution) -> f64 {
        0.5 * self
            .probs
            .iter()
            .zip(&other.probs)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum SmoothingSpec {
    HardMax,
    /// Inverse temperature schedule `beta_t`.
    Softmax(Schedule),
    /// Off-greedy mass schedule `delta_t`.
    ClippedMax(Schedule),
}

impl SmoothingSpec {
    pub fn smooth(&self, q_row: &[f64], t: u64) -> Result<ActionDistribution> {
        check_row(q_row)?;
        match self {
            SmoothingSpec::HardMax => {
                if t == 0 {
                    return Err(Error::ZeroStep(t));
                }
                Ok(hard_max(q_row))
            }
            SmoothingSpec::Softmax(beta) => Ok(softmax(q_row, beta.nonnegative_value(t)?)),
            SmoothingSpec::ClippedMax(delta) => Ok(clipped_max(q_row, delta.unit_value(t)?)),
        }
    }

    /// `sum_a q_t(a | s') q_row[a]`.
    pub fn smoothed_value(&self, q_row: &[f64], t: u64) -> Result<f64> {
        self.smooth(q_row, t)?.expected_value(q_row)
    }
}

impl fmt::Display for SmoothingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SmoothingSpec::HardMax => f.write_str("max"),
            SmoothingSpec::Softmax(s) => write!(f, "softmax:{s}"),
            SmoothingSpec::ClippedMax(s) => write!(f, "clipped:{s}"),
        }
    }
}

impl FromStr for SmoothingSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "max" || s == "hard-max" {
            return Ok(SmoothingSpec::HardMax);
        }
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Parse(format!("unknown smoothing `{s}`")))?;
        match kind {
            "softmax" => Ok(SmoothingSpec::Softmax(rest.parse()?)),
            "clipped" | "clipped-max" => Ok(SmoothingSpec::ClippedMax(rest.parse()?)),
            other => Err(Error::Parse(format!("unknown smoothing kind `{other}`"))),
        }
    }
}

impl TryFrom<String> for SmoothingSpec {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<SmoothingSpec> for String {
    fn from(s: SmoothingSpec) -> String {
        s.to_string()
    }
}

fn check_row(q_row: &[f64]) -> Result<()> {
    if q_row.is_empty() {
        return Err(Error::InvalidArgument("empty Q row".into()));
    }
    if let Some(q) = q_row.iter().find(|q| !q.is_finite()) {
        return Err(Error::NonFinite(format!("Q row entry {q}")));
    }
    Ok(())
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax_lowest(q_row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &q) in q_row.iter().enumerate().skip(1) {
        if q > q_row[best] {
            best = i;
        }
    }
    best
}

pub fn hard_max(q_row: &[f64]) -> ActionDistribution {
    let mut probs = vec![0.0; q_row.len()];
    probs[argmax_lowest(q_row)] = 1.0;
    ActionDistribution { probs }
}

/// `probs ∝ exp(beta q)`, evaluated as `exp(beta (q - max q))`.
pub fn softmax(q_row: &[f64], beta: f64) -> ActionDistribution {
    let top = q_row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = q_row.iter().map(|q| (beta * (q - top)).exp()).collect();
    // The max entry contributes exp(0) = 1, so the sum is >= 1.
    let total: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= total;
    }
    ActionDistribution { probs }
}

/// `1 - delta` on the greedy action, `delta / (A - 1)` on each other one.
pub fn clipped_max(q_row: &[f64], delta: f64) -> ActionDistribution {
    let n = q_row.len();
    if n == 1 {
        return ActionDistribution { probs: vec![1.0] };
    }
    let best = argmax_lowest(q_row);
    let off = delta / (n - 1) as f64;
    let mut probs = vec![off; n];
    probs[best] = 1.0 - delta;
    ActionDistribution { probs }
}

/// `gamma delta (|max_a Q(s', a)| + |Q(s', b-)|)` with `b-` the lowest-valued
/// non-greedy action: the slack between the smoothed and the hard-max
/// bootstrap that must vanish as `delta -> 0` for the smoothed iteration to
/// keep the contraction of standard Q-learning.
pub fn bound_slack(q_row: &[f64], delta: f64, gamma: f64) -> f64 {
    if q_row.len() < 2 {
        return 0.0;
    }
    let best = argmax_lowest(q_row);
    let worst = q_row
        .iter()
        .enumerate()
        .filter(|&(i, _)| i != best)
        .map(|(_, &q)| q)
        .fold(f64::INFINITY, f64::min);
    gamma * delta * (q_row[best].abs() + worst.abs())
}
