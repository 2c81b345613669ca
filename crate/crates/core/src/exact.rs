//! Backward dynamic programming over the pre-decision lattice.

use std::sync::Arc;

use rayon::prelude::*;

use crate::dynamics::Dynamics;
use crate::error::{Error, Result};
use crate::lattice::Layout;
use crate::market::{BidPair, State, TerminalContribution};
use crate::table::ValueTable;

/// Default cap on `(T + 1) * |S|` for an exact solve.
pub const DEFAULT_STATE_CAP: u128 = 200_000_000;

#[derive(Debug, Clone)]
pub struct ExactSolution {
    /// `V*_t` for `t = 0..=T`.
    pub values: ValueTable,
    /// Optimal bid index per `(t, state)` for `t = 0..T`, period-major.
    pub policy: Vec<u32>,
    states_per_period: usize,
}

impl ExactSolution {
    pub fn decision(&self, t: usize, pre: usize) -> usize {
        self.policy[t * self.states_per_period + pre] as usize
    }
}

/// `C_{t,t+2}(s, b)` with exact expectations.
pub fn expected_contribution(d: &Dynamics, s: &State, bid: usize, t: usize) -> Result<f64> {
    d.require_enumerable("expected contribution")?;
    check_period(d, t)?;
    Ok(d.contributions(t, d.space().pre_index(s))[bid])
}

/// Best bid for `s` at `t` against the next-period slice `next`; ties go to
/// the lexicographically smallest bid. Returns `(bid, value)`.
pub fn greedy_bid(d: &Dynamics, t: usize, pre: usize, next: &[f64]) -> (usize, f64) {
    let c = d.contributions(t, pre);
    let branches = d.transitions(t, pre);
    let space = d.space();
    let mut best = (0, f64::NEG_INFINITY);
    for (b, &cb) in c.iter().enumerate() {
        let v = cb
            + branches
                .iter()
                .map(|br| br.prob * next[br.next_index(space, b)])
                .sum::<f64>();
        if v > best.1 {
            best = (b, v);
        }
    }
    best
}

/// Greedy decision from a pre-decision table populated at `t + 1`.
pub fn greedy_policy(d: &Dynamics, table: &ValueTable, s: &State, t: usize) -> Result<BidPair> {
    d.require_enumerable("greedy policy from a pre-decision table")?;
    check_period(d, t)?;
    if table.layout() != Layout::Pre {
        return Err(Error::Config("greedy_policy needs a pre-decision table".into()));
    }
    table.check_compatible(d)?;
    let (b, _) = greedy_bid(d, t, d.space().pre_index(s), table.period(t + 1));
    Ok(d.config().grid.pair(b))
}

fn check_period(d: &Dynamics, t: usize) -> Result<()> {
    if t >= d.horizon() {
        return Err(Error::Domain(format!(
            "decision period {t} outside 0..{}",
            d.horizon()
        )));
    }
    Ok(())
}

pub fn backward_dp(d: &Dynamics) -> Result<ExactSolution> {
    backward_dp_capped(d, DEFAULT_STATE_CAP)
}

pub fn backward_dp_capped(d: &Dynamics, state_cap: u128) -> Result<ExactSolution> {
    let n = d.space().num_pre();
    let needed = n as u128 * (d.horizon() as u128 + 1);
    if needed > state_cap {
        return Err(Error::Capacity {
            what: "backward dynamic programming",
            needed,
            cap: state_cap,
            hint: "shrink the instance or train with Monotone-ADP",
        });
    }
    d.prepare_exact()?;
    let horizon = d.horizon();
    let mut values = ValueTable::for_dynamics(Layout::Pre, d);
    values.period_mut(horizon).copy_from_slice(&d.terminal_values());
    let mut policy = vec![0u32; horizon * n];
    for t in (0..horizon).rev() {
        let (head, tail) = values.values_mut().split_at_mut((t + 1) * n);
        let next = &tail[..n];
        let now = &mut head[t * n..];
        let decisions = &mut policy[t * n..(t + 1) * n];
        now.par_iter_mut()
            .zip(decisions.par_iter_mut())
            .enumerate()
            .for_each(|(i, (v, b))| {
                let (bid, best) = greedy_bid(d, t, i, next);
                *v = best;
                *b = bid as u32;
            });
    }
    Ok(ExactSolution {
        values,
        policy,
        states_per_period: n,
    })
}

/// Re-solves with `V*_0` (shifted to be nonnegative) as the terminal value
/// until the optimal decisions stop changing, to avoid the end-of-horizon
/// sell-off a zero terminal value induces. Returns the last solution and the
/// number of solves.
pub fn refine_terminal(d: &Dynamics, max_rounds: usize) -> Result<(ExactSolution, usize)> {
    let mut current = backward_dp(d)?;
    let mut rounds = 1;
    while rounds < max_rounds.max(1) {
        let v0 = current.values.period(0);
        let min = v0.iter().cloned().fold(f64::INFINITY, f64::min);
        let terminal: Arc<[f64]> = v0.iter().map(|v| v - min).collect();
        let cfg = d
            .config()
            .clone()
            .with_terminal(TerminalContribution::Table(terminal));
        let next_d = Dynamics::new(cfg, d.model_arc())?;
        let next = backward_dp(&next_d)?;
        rounds += 1;
        let converged = next.policy == current.policy;
        current = next;
        if converged {
            break;
        }
    }
    Ok((current, rounds))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::audit_monotone;
    use crate::market::{settle_hour, BetaTable, BidGrid, MarketConfig};
    use crate::price::{integer_support, DiscreteDistribution, Seasonal, SeasonalNoise, Trend};

    fn det_model(m: usize) -> SeasonalNoise {
        SeasonalNoise::new(
            Seasonal { amplitude: 15.0, mean: 50.0, period: 4.0, trend: Trend::Sin },
            DiscreteDistribution::point(0.0),
            m,
        )
        .unwrap()
    }

    fn tiny(horizon: usize, k: f64) -> Dynamics {
        let cfg = MarketConfig::new(
            1,
            horizon,
            2,
            1,
            k,
            BidGrid::from_levels(vec![40.0, 50.0, 60.0]).unwrap(),
            BetaTable::from_values(vec![0.8, 1.0]).unwrap(),
        )
        .unwrap();
        Dynamics::new(cfg, Arc::new(det_model(1))).unwrap()
    }

    /// Plays every bid sequence from `s` against the deterministic prices.
    fn brute_force(d: &Dynamics, t: usize, s: State) -> f64 {
        if t == d.horizon() {
            return d.terminal_value(&s);
        }
        let cfg = d.config();
        let mut prices = Vec::new();
        d.model().sample_hour(t, 0, &Default::default(), &mut rand::SeedableRng::seed_from_u64(0), &mut prices);
        let first = settle_hour(cfg, s.resource, s.lifetime, &prices, cfg.grid.pair(s.prev_bid));
        let mut next_prices = Vec::new();
        d.model().sample_hour(t + 1, 0, &Default::default(), &mut rand::SeedableRng::seed_from_u64(0), &mut next_prices);
        (0..cfg.grid.num_pairs())
            .map(|b| {
                let c = settle_hour(cfg, first.resource, first.lifetime, &next_prices, cfg.grid.pair(b)).revenue;
                let s1 = State { resource: first.resource, lifetime: first.lifetime, prev_bid: b, price_state: 0 };
                c + brute_force(d, t + 1, s1)
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    #[test]
    fn matches_exhaustive_bid_sequences() {
        let d = tiny(3, 1.0);
        let sol = backward_dp(&d).unwrap();
        for t in 0..=3 {
            for i in 0..d.space().num_pre() {
                let s = d.space().pre_state(i);
                let bf = brute_force(&d, t, s);
                assert!((sol.values.get(t, i) - bf).abs() < 1e-9, "t={t} s={s:?}");
            }
        }
    }

    #[test]
    fn single_stage_is_max_contribution() {
        let d = tiny(1, 1.0);
        let sol = backward_dp(&d).unwrap();
        for i in 0..d.space().num_pre() {
            let c = d.contributions(0, i);
            let best = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(sol.values.get(0, i), best);
        }
    }

    #[test]
    fn deterministic_contribution_is_hourly_revenue() {
        let d = tiny(2, 1.0);
        let cfg = d.config();
        let s = State { resource: 1, lifetime: 1, prev_bid: 0, price_state: 0 };
        let p0 = [det_model(1).seasonal.at(0.0)];
        let p1 = [det_model(1).seasonal.at(1.0)];
        let first = settle_hour(cfg, 1, 1, &p0, cfg.grid.pair(0));
        for b in 0..cfg.grid.num_pairs() {
            let want = settle_hour(cfg, first.resource, first.lifetime, &p1, cfg.grid.pair(b)).revenue;
            assert_eq!(expected_contribution(&d, &s, b, 0).unwrap(), want);
        }
    }

    #[test]
    fn never_clearing_bid_earns_nothing() {
        let cfg = MarketConfig::new(
            1,
            2,
            2,
            1,
            1.0,
            BidGrid::from_levels(vec![0.0, 3000.0]).unwrap(),
            BetaTable::constant(1.0, 1).unwrap(),
        )
        .unwrap();
        let d = Dynamics::new(cfg, Arc::new(SeasonalNoise::variation1(1).unwrap())).unwrap();
        let idle = d.config().grid.idle_pair();
        for i in 0..d.space().num_pre() {
            let s = d.space().pre_state(i);
            assert_eq!(expected_contribution(&d, &s, idle, 0).unwrap(), 0.0);
        }
    }

    #[test]
    fn values_are_monotone() {
        let cfg = MarketConfig::new(
            1,
            4,
            3,
            2,
            1.0,
            BidGrid::linear(35.0, 65.0, 4).unwrap(),
            BetaTable::power(2, 6.0).unwrap(),
        )
        .unwrap();
        let model = SeasonalNoise::new(
            Seasonal { amplitude: 15.0, mean: 50.0, period: 8.0, trend: Trend::Sin },
            DiscreteDistribution::pseudonormal(integer_support(-10, 10), 0.0, 5.0).unwrap(),
            1,
        )
        .unwrap();
        let d = Dynamics::new(cfg, Arc::new(model)).unwrap();
        let sol = backward_dp(&d).unwrap();
        for t in 0..=4 {
            assert_eq!(audit_monotone(d.space(), Layout::Pre, sol.values.period(t)), None);
        }
        // contributions are monotone in the pre-decision state for each bid
        for t in 0..4 {
            for b in 0..d.num_bids() {
                let slice: Vec<f64> = (0..d.space().num_pre()).map(|i| d.contributions(t, i)[b]).collect();
                assert_eq!(audit_monotone(d.space(), Layout::Pre, &slice), None);
            }
        }
    }

    #[test]
    fn greedy_ties_break_lexicographically_and_ignore_shifts() {
        let d = tiny(2, 1.0);
        let sol = backward_dp(&d).unwrap();
        let flat = vec![0.0; d.space().num_pre()];
        for i in 0..d.space().num_pre() {
            let (b, _) = greedy_bid(&d, 1, i, &flat);
            let c = d.contributions(1, i);
            let best = c.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert_eq!(b, c.iter().position(|&v| v == best).unwrap());
            let shifted: Vec<f64> = sol.values.period(1).iter().map(|v| v + 17.0).collect();
            assert_eq!(greedy_bid(&d, 0, i, &shifted).0, greedy_bid(&d, 0, i, sol.values.period(1)).0);
            assert_eq!(greedy_bid(&d, 0, i, sol.values.period(1)).0, sol.decision(0, i));
        }
    }

    #[test]
    fn frictionless_instance_dominates() {
        let costly = tiny(3, 1.0);
        let mut cfg = costly.config().clone();
        cfg.penalty_k = 0.0;
        cfg.beta = BetaTable::constant(1.0, 1).unwrap();
        let free = Dynamics::new(cfg, Arc::new(det_model(1))).unwrap();
        let a = backward_dp(&free).unwrap();
        let b = backward_dp(&costly).unwrap();
        assert!(a.values.values().iter().zip(b.values.values()).all(|(x, y)| x + 1e-9 >= *y));
    }

    #[test]
    fn capacity_and_capability_errors() {
        let d = tiny(2, 1.0);
        assert!(matches!(backward_dp_capped(&d, 10), Err(Error::Capacity { .. })));
        let replay = crate::price::HistoricalReplay::new(vec![vec![50.0; 24]], 1).unwrap();
        let d = Dynamics::new(d.config().clone(), Arc::new(replay)).unwrap();
        assert!(matches!(backward_dp(&d), Err(Error::Capability(_))));
    }

    #[test]
    fn terminal_refinement_converges() {
        let d = tiny(3, 1.0);
        let (sol, rounds) = refine_terminal(&d, 10).unwrap();
        assert!(rounds >= 2 && rounds <= 10);
        for t in 0..=3 {
            assert_eq!(audit_monotone(d.space(), Layout::Pre, sol.values.period(t)), None);
        }
    }
}
