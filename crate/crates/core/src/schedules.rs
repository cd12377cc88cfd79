//! Scalar schedules indexed by a step counter `t >= 1`.
//!
//! Text form (CLI and config files): `const:C`, `hyperbolic:C:K`,
//! `linear:C:M`, `exp:K`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Schedule {
    /// `c`
    Constant { value: f64 },
    /// `c / (1 + k t)`
    Hyperbolic { base: f64, rate: f64 },
    /// `c + m (t - 1)`
    Linear { base: f64, slope: f64 },
    /// `exp(-k t)`
    ExponentialDecay { rate: f64 },
}

impl Schedule {
    pub fn constant(value: f64) -> Self {
        Schedule::Constant { value }
    }

    pub fn hyperbolic(base: f64, rate: f64) -> Self {
        Schedule::Hyperbolic { base, rate }
    }

    pub fn linear(base: f64, slope: f64) -> Self {
        Schedule::Linear { base, slope }
    }

    pub fn exponential_decay(rate: f64) -> Self {
        Schedule::ExponentialDecay { rate }
    }

    pub fn value(&self, t: u64) -> Result<f64> {
        if t == 0 {
            return Err(Error::ZeroStep(t));
        }
        Ok(self.eval(t as f64))
    }

    /// [`value`](Self::value) clamped to `[0, 1]`, for rates and probabilities.
    pub fn unit_value(&self, t: u64) -> Result<f64> {
        self.value(t).map(|v| v.clamp(0.0, 1.0))
    }

    /// [`value`](Self::value) floored at 0, for inverse temperatures.
    pub fn nonnegative_value(&self, t: u64) -> Result<f64> {
        self.value(t).map(|v| v.max(0.0))
    }

    fn eval(&self, t: f64) -> f64 {
        match *self {
            Schedule::Constant { value } => value,
            Schedule::Hyperbolic { base, rate } => base / (1.0 + rate * t),
            Schedule::Linear { base, slope } => base + slope * (t - 1.0),
            Schedule::ExponentialDecay { rate } => (-rate * t).exp(),
        }
    }

    fn validate(&self) -> Result<()> {
        let params: &[f64] = match self {
            Schedule::Constant { value } => &[*value],
            Schedule::Hyperbolic { base, rate } => {
                if *rate < 0.0 {
                    return Err(Error::Parse(format!("hyperbolic rate must be >= 0, got {rate}")));
                }
                &[*base, *rate]
            }
            Schedule::Linear { base, slope } => &[*base, *slope],
            Schedule::ExponentialDecay { rate } => {
                if *rate <= 0.0 {
                    return Err(Error::Parse(format!("exp rate must be > 0, got {rate}")));
                }
                &[*rate]
            }
        };
        if params.iter().all(|p| p.is_finite()) {
            Ok(())
        } else {
            Err(Error::Parse(format!("non-finite schedule parameter in {self}")))
        }
    }
}

impl fmt::Display for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::Constant { value } => write!(f, "const:{value}"),
            Schedule::Hyperbolic { base, rate } => write!(f, "hyperbolic:{base}:{rate}"),
            Schedule::Linear { base, slope } => write!(f, "linear:{base}:{slope}"),
            Schedule::ExponentialDecay { rate } => write!(f, "exp:{rate}"),
        }
    }
}

impl FromStr for Schedule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |i: usize| -> Result<f64> {
            parts[i]
                .parse::<f64>()
                .map_err(|_| Error::Parse(format!("bad number `{}` in schedule `{s}`", parts[i])))
        };
        let arity = |n: usize| -> Result<()> {
            if parts.len() == n + 1 {
                Ok(())
            } else {
                Err(Error::Parse(format!(
                    "schedule `{s}`: `{}` takes {n} parameter(s)",
                    parts[0]
                )))
            }
        };
        let schedule = match parts[0] {
            "const" | "constant" => {
                arity(1)?;
                Schedule::constant(num(1)?)
            }
            "hyperbolic" => {
                arity(2)?;
                Schedule::hyperbolic(num(1)?, num(2)?)
            }
            "linear" => {
                arity(2)?;
                Schedule::linear(num(1)?, num(2)?)
            }
            "exp" | "exponential-decay" => {
                arity(1)?;
                Schedule::exponential_decay(num(1)?)
            }
            other => return Err(Error::Parse(format!("unknown schedule kind `{other}`"))),
        };
        schedule.validate()?;
        Ok(schedule)
    }
}

impl TryFrom<String> for Schedule {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Schedule> for String {
    fn from(s: Schedule) -> String {
        s.to_string()
    }
}

/// Finite-horizon evidence for the step-size conditions
/// `sum a_t = inf`, `sum a_t^2 < inf`, `0 <= a_t <= 1`.
///
/// The trends are judged by a dyadic-block comparison: for a series whose
/// terms behave like `t^-p`, the block sum over `(H/2, H]` divided by the
/// block over `(H/4, H/2]` tends to `2^(1-p)`. A ratio near or above 1
/// (harmonic or slower) indicates divergence; a ratio clearly below 1
/// indicates summability.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RobbinsMonroReport {
    pub horizon: u64,
    pub partial_sum: f64,
    pub partial_sum_squares: f64,
    /// Sum of squares over the first half `[1, H/2]`.
    pub head_sq_sum: f64,
    /// Sum of squares over the second half `(H/2, H]`.
    pub tail_sq_sum: f64,
    pub sum_block_ratio: f64,
    pub sq_block_ratio: f64,
    pub sum_diverges: bool,
    pub squares_converge: bool,
    pub within_unit_interval: bool,
}

impl RobbinsMonroReport {
    pub fn satisfied(&self) -> bool {
        self.sum_diverges && self.squares_converge && self.within_unit_interval
    }
}

pub const MIN_RM_HORIZON: u64 = 10_000;
/// Block ratio at or above which a series is treated as non-summable.
const DIVERGENCE_RATIO: f64 = 0.9;

pub fn check_robbins_monro(schedule: &Schedule, horizon: u64) -> Result<RobbinsMonroReport> {
    if horizon < MIN_RM_HORIZON {
        return Err(Error::InvalidArgument(format!(
            "horizon must be >= {MIN_RM_HORIZON}, got {horizon}"
        )));
    }
    let half = horizon / 2;
    let quarter = horizon / 4;
    let (mut sum, mut sq) = (0.0, 0.0);
    let (mut head_sq, mut tail_sq) = (0.0, 0.0);
    let (mut q3_sum, mut q3_sq, mut q4_sum, mut q4_sq) = (0.0, 0.0, 0.0, 0.0);
    let mut in_unit = true;
    for t in 1..=horizon {
        let a = schedule.value(t)?;
        let a2 = a * a;
        in_unit &= (0.0..=1.0).contains(&a);
        sum += a;
        sq += a2;
        if t <= half {
            head_sq += a2;
        } else {
            tail_sq += a2;
        }
        if t > quarter && t <= half {
            q3_sum += a;
            q3_sq += a2;
        } else if t > half {
            q4_sum += a;
            q4_sq += a2;
        }
    }
    let ratio = |late: f64, early: f64| if early > 0.0 { late / early } else { 0.0 };
    let sum_block_ratio = ratio(q4_sum, q3_sum);
    let sq_block_ratio = ratio(q4_sq, q3_sq);
    Ok(RobbinsMonroReport {
        horizon,
        partial_sum: sum,
        partial_sum_squares: sq,
        head_sq_sum: head_sq,
        tail_sq_sum: tail_sq,
        sum_block_ratio,
        sq_block_ratio,
        sum_diverges: sum_block_ratio >= DIVERGENCE_RATIO,
        squares_converge: sq_block_ratio < DIVERGENCE_RATIO,
        within_unit_interval: in_unit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_values() {
        // 0.1 / 1.001 and e^-1, 30-digit mpmath evaluations.
        let alpha = Schedule::hyperbolic(0.1, 0.001).value(1).unwrap();
        assert_relative_eq!(alpha, 0.099_900_099_900_099_9, max_relative = 1e-15);
        assert_eq!(Schedule::linear(0.1, 0.1).value(1).unwrap(), 0.1);
        let delta = Schedule::exponential_decay(0.02).value(50).unwrap();
        assert_relative_eq!(delta, 0.367_879_441_171_442_32, max_relative = 1e-15);
    }

    #[test]
    fn zero_step_is_an_error() {
        for s in [
            Schedule::constant(0.1),
            Schedule::hyperbolic(0.1, 0.001),
            Schedule::linear(0.1, 0.1),
            Schedule::exponential_decay(0.02),
        ] {
            assert!(matches!(s.value(0), Err(Error::ZeroStep(0))));
        }
    }

    #[test]
    fn monotone_per_kind() {
        let hyp = Schedule::hyperbolic(0.1, 0.001);
        let lin = Schedule::linear(0.1, 0.1);
        let exp = Schedule::exponential_decay(0.02);
        let ts: Vec<u64> = (0..10_000u64).map(|i| 1 + i * 37).collect();
        for w in ts.windows(2) {
            let (a, b) = (w[0], w[1]);
            assert!(hyp.value(b).unwrap() < hyp.value(a).unwrap());
            assert!(hyp.value(b).unwrap() > 0.0);
            assert!(lin.value(b).unwrap() >= lin.value(a).unwrap());
            // exp underflows to exactly 0 far out; strictness holds until then.
            let (ea, eb) = (exp.value(a).unwrap(), exp.value(b).unwrap());
            assert!(eb < ea || ea == 0.0);
            assert!((0.0..=1.0).contains(&eb));
        }
        assert!(exp.value(1).unwrap() < 1.0 && exp.value(1).unwrap() > 0.0);
    }

    #[test]
    fn clamping() {
        assert_eq!(Schedule::constant(1.5).unit_value(3).unwrap(), 1.0);
        assert_eq!(Schedule::linear(0.1, -1.0).unit_value(3).unwrap(), 0.0);
        assert_eq!(Schedule::linear(0.1, -1.0).nonnegative_value(3).unwrap(), 0.0);
        assert_eq!(Schedule::linear(0.1, 0.1).nonnegative_value(11).unwrap(), 1.1);
    }

    #[test]
    fn text_form() {
        for text in ["hyperbolic:0.1:0.001", "linear:0.1:0.1", "exp:0.02", "const:0.1"] {
            let s: Schedule = text.parse().unwrap();
            assert_eq!(s.to_string(), text);
        }
        assert_eq!(
            "exponential-decay:0.5".parse::<Schedule>().unwrap(),
            Schedule::exponential_decay(0.5)
        );
        for bad in ["", "hyperbolic:0.1", "exp:x", "exp:-1", "cubic:1", "linear:1:2:3", "const:nan"] {
            assert!(bad.parse::<Schedule>().is_err(), "{bad}");
        }
    }

    #[test]
    fn serde_uses_text_form() {
        let json = serde_json::to_string(&Schedule::hyperbolic(0.1, 0.001)).unwrap();
        assert_eq!(json, "\"hyperbolic:0.1:0.001\"");
        let back: Schedule = serde_json::from_str(&json).unwrap();
        assert_eq!(back, Schedule::hyperbolic(0.1, 0.001));
    }

    #[test]
    fn robbins_monro_hyperbolic() {
        let r = check_robbins_monro(&Schedule::hyperbolic(0.1, 0.001), 1_000_000).unwrap();
        // Direct fsum in numpy: 690.8255362148963, 9.985011661666338,
        // head 9.975041606746242, tail 0.009970054920096583.
        assert_relative_eq!(r.partial_sum, 690.825_536_214_896_3, max_relative = 1e-9);
        assert_relative_eq!(r.partial_sum_squares, 9.985_011_661_666_338, max_relative = 1e-9);
        assert_relative_eq!(r.head_sq_sum, 9.975_041_606_746_242, max_relative = 1e-9);
        assert_relative_eq!(r.tail_sq_sum, 0.009_970_054_920_096_583, max_relative = 1e-9);
        assert!(r.partial_sum > 50.0);
        assert!(r.tail_sq_sum < r.head_sq_sum);
        assert!(r.satisfied(), "{r:?}");
    }

    #[test]
    fn robbins_monro_constant_fails_square_summability() {
        let r = check_robbins_monro(&Schedule::constant(0.1), 100_000).unwrap();
        assert_relative_eq!(r.partial_sum_squares, 0.01 * 100_000.0, max_relative = 1e-9);
        assert!(r.sum_diverges);
        assert!(!r.squares_converge);
        assert!(!r.satisfied());
    }

    #[test]
    fn robbins_monro_exp_fails_divergence() {
        let r = check_robbins_monro(&Schedule::exponential_decay(0.02), 100_000).unwrap();
        // Geometric series 1 / (e^0.02 - 1).
        assert_relative_eq!(r.partial_sum, 49.501_666_655_555_745, max_relative = 1e-12);
        assert!(!r.sum_diverges);
        assert!(r.squares_converge);
    }

    #[test]
    fn robbins_monro_harmonic_family() {
        let harmonic = check_robbins_monro(&Schedule::hyperbolic(1.0, 1.0), 1_000_000).unwrap();
        assert!(harmonic.satisfied());
        assert!(check_robbins_monro(&Schedule::constant(0.1), 100).is_err());
        let big = check_robbins_monro(&Schedule::constant(2.0), 10_000).unwrap();
        assert!(!big.within_unit_interval);
    }
}
