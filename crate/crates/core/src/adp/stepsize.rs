//! Stepsize rules for smoothing observations into the value table.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Target of the McClain sequence that drives the BAKF smoothing weights.
pub const BAKF_MCCLAIN_TARGET: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "value")]
pub enum StepsizeRule {
    /// `1 / N(s)`.
    Harmonic,
    /// A fixed `c` after the first visit.
    Constant(f64),
    /// Bias-adjusted Kalman filter, floored at `1 / N(s)`.
    Bakf,
}

impl StepsizeRule {
    pub fn validate(&self) -> Result<()> {
        match self {
            StepsizeRule::Constant(c) if !(*c > 0.0 && *c <= 1.0) => Err(Error::Config(format!(
                "constant stepsize must lie in (0, 1], got {c}"
            ))),
            _ => Ok(()),
        }
    }
}

impl fmt::Display for StepsizeRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StepsizeRule::Harmonic => write!(f, "harmonic"),
            StepsizeRule::Constant(c) => write!(f, "constant:{c}"),
            StepsizeRule::Bakf => write!(f, "bakf"),
        }
    }
}

impl FromStr for StepsizeRule {
    type Err = Error;

    fn from_str(s: &str) -> Result<StepsizeRule> {
        let rule = match s {
            "harmonic" => StepsizeRule::Harmonic,
            "bakf" => StepsizeRule::Bakf,
            _ => match s.strip_prefix("constant:") {
                Some(c) => StepsizeRule::Constant(
                    c.parse()
                        .map_err(|_| Error::Config(format!("bad constant stepsize {c:?}")))?,
                ),
                None => {
                    return Err(Error::Config(format!(
                        "unknown stepsize {s:?}; expected harmonic, constant:<c> or bakf"
                    )))
                }
            },
        };
        rule.validate()?;
        Ok(rule)
    }
}

/// Running statistics of one state under BAKF.
#[derive(Debug, Clone, Copy, PartialEq)]
struct BakfStats {
    bias: f64,
    second_moment: f64,
    lambda: f64,
    eta: f64,
}

/// Per-state visit counts and adaptive statistics for one training run.
#[derive(Debug, Clone)]
pub struct Stepsizes {
    rule: StepsizeRule,
    visits: HashMap<usize, u32>,
    bakf: HashMap<usize, BakfStats>,
}

impl Stepsizes {
    pub fn new(rule: StepsizeRule) -> Stepsizes {
        Stepsizes {
            rule,
            visits: HashMap::new(),
            bakf: HashMap::new(),
        }
    }

    pub fn rule(&self) -> StepsizeRule {
        self.rule
    }

    pub fn visits(&self, key: usize) -> u32 {
        self.visits.get(&key).copied().unwrap_or(0)
    }

    pub fn visited_states(&self) -> usize {
        self.visits.len()
    }

    /// Records a visit to `key` with the current estimate `old` and the new
    /// observation `obs`, and returns the stepsize to smooth with.
    pub fn next(&mut self, key: usize, old: f64, obs: f64) -> f64 {
        let n = {
            let v = self.visits.entry(key).or_insert(0);
            *v += 1;
            *v
        };
        let alpha = match self.rule {
            StepsizeRule::Harmonic => 1.0 / n as f64,
            StepsizeRule::Constant(c) => {
                if n == 1 {
                    1.0
                } else {
                    c
                }
            }
            StepsizeRule::Bakf => self.bakf_step(key, n, old, obs),
        };
        debug_assert!((0.0..=1.0).contains(&alpha));
        alpha.clamp(0.0, 1.0)
    }

    fn bakf_step(&mut self, key: usize, n: u32, old: f64, obs: f64) -> f64 {
        if n == 1 {
            self.bakf.insert(
                key,
                BakfStats {
                    bias: 0.0,
                    second_moment: 0.0,
                    lambda: 1.0,
                    eta: 0.0,
                },
            );
            return 1.0;
        }
        let st = self.bakf.get_mut(&key).expect("first visit creates the statistics");
        // the first error initializes the statistics
        let eta = if st.eta == 0.0 {
            1.0
        } else {
            st.eta / (1.0 + st.eta - BAKF_MCCLAIN_TARGET)
        };
        let err = obs - old;
        st.bias = (1.0 - eta) * st.bias + eta * err;
        st.second_moment = (1.0 - eta) * st.second_moment + eta * err * err;
        st.eta = eta;
        let variance = ((st.second_moment - st.bias * st.bias) / (1.0 + st.lambda)).max(0.0);
        let alpha = if st.second_moment <= f64::EPSILON * (1.0 + old.abs()) {
            1.0
        } else {
            1.0 - variance / st.second_moment
        };
        let alpha = alpha.clamp(1.0 / n as f64, 1.0);
        st.lambda = (1.0 - alpha) * (1.0 - alpha) * st.lambda + alpha * alpha;
        alpha
    }
}

/// `(1 - alpha) old + alpha obs`.
#[inline]
pub fn smooth(old: f64, obs: f64, alpha: f64) -> f64 {
    (1.0 - alpha) * old + alpha * obs
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn smooth_examples() {
        assert_eq!(smooth(2.0, 4.0, 1.0), 4.0);
        assert_eq!(smooth(2.0, 4.0, 0.0), 2.0);
        assert_eq!(smooth(2.0, 4.0, 0.5), 3.0);
    }

    #[test]
    fn harmonic_counts_visits() {
        let mut s = Stepsizes::new(StepsizeRule::Harmonic);
        assert_eq!(s.next(7, 0.0, 1.0), 1.0);
        assert_eq!(s.next(7, 0.0, 1.0), 0.5);
        assert_eq!(s.next(7, 0.0, 1.0), 1.0 / 3.0);
        assert_eq!(s.next(8, 0.0, 1.0), 1.0);
    }

    #[test]
    fn every_rule_starts_at_one() {
        for rule in [StepsizeRule::Harmonic, StepsizeRule::Constant(0.1), StepsizeRule::Bakf] {
            let mut s = Stepsizes::new(rule);
            assert_eq!(s.next(0, 5.0, -3.0), 1.0);
        }
        let mut s = Stepsizes::new(StepsizeRule::Constant(0.1));
        s.next(0, 0.0, 0.0);
        assert_eq!(s.next(0, 0.0, 0.0), 0.1);
    }

    #[test]
    fn bakf_stays_near_one_without_noise() {
        // a drifting target seen without noise is pure bias
        let mut s = Stepsizes::new(StepsizeRule::Bakf);
        let mut est = 0.0;
        for n in 0..200 {
            let obs = 10.0 + n as f64;
            let a = s.next(1, est, obs);
            assert!(a > 0.9, "visit {n}: alpha {a}");
            est = smooth(est, obs, a);
        }
        // a constant target is matched after the first visit
        let mut s = Stepsizes::new(StepsizeRule::Bakf);
        let mut est = 0.0;
        for _ in 0..50 {
            let a = s.next(2, est, 3.0);
            assert!(a > 0.9);
            est = smooth(est, 3.0, a);
        }
    }

    #[test]
    fn bakf_shrinks_under_pure_noise() {
        let mut s = Stepsizes::new(StepsizeRule::Bakf);
        let mut est = 0.0;
        let mut last = 1.0;
        let mut x: u64 = 12345;
        for _ in 0..2000 {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let noise = ((x >> 11) as f64 / (1u64 << 53) as f64 - 0.5) * 20.0;
            last = s.next(3, est, noise);
            est = smooth(est, noise, last);
        }
        assert!(last < 0.2, "alpha {last}");
    }

    #[test]
    fn parses_cli_forms() {
        assert_eq!("harmonic".parse::<StepsizeRule>().unwrap(), StepsizeRule::Harmonic);
        assert_eq!("constant:0.25".parse::<StepsizeRule>().unwrap(), StepsizeRule::Constant(0.25));
        assert_eq!("bakf".parse::<StepsizeRule>().unwrap(), StepsizeRule::Bakf);
        assert!("constant:2".parse::<StepsizeRule>().is_err());
        assert!("kalman".parse::<StepsizeRule>().is_err());
    }

    proptest! {
        #[test]
        fn stepsizes_lie_in_unit_interval(obs in proptest::collection::vec(-1e4f64..1e4, 1..60), rule in 0usize..3) {
            let rule = [StepsizeRule::Harmonic, StepsizeRule::Constant(0.3), StepsizeRule::Bakf][rule];
            let mut s = Stepsizes::new(rule);
            let mut est = 0.0;
            for (n, &o) in obs.iter().enumerate() {
                let a = s.next(0, est, o);
                prop_assert!((0.0..=1.0).contains(&a));
                if rule != StepsizeRule::Constant(0.3) {
                    prop_assert!(a >= 1.0 / (n + 1) as f64 - 1e-15);
                }
                est = smooth(est, o, a);
            }
        }
    }
}
