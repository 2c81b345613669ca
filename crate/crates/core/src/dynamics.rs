//! Cached one-step dynamics shared by the exact solver, the ADP trainers and
//! the greedy policies.
//!
//! Period `t` transitions with the prices of hour `t` (settled by the previous
//! bid) and the bid `b_t` earns the revenue of hour `t + 1`. For enumerable
//! models both are exact expectations; for data-driven models the contribution
//! is the average over the training days.

use std::sync::{Arc, OnceLock};

use crate::error::{Error, Result};
use crate::lattice::StateSpace;
use crate::market::{settle_hour, MarketConfig, State, TerminalContribution};
use crate::price::{HourOutcome, PriceModel};

/// One branch of the transition from `S_t` to `S_{t+1}`, one per enumerated
/// price outcome.
///
/// Branches are deliberately not merged: every expectation is then summed over
/// the same outcomes in the same order for every state, and since rounding is
/// monotone, pathwise dominance carries over to the computed values exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub resource: u32,
    pub lifetime: u32,
    pub price_state: u32,
    pub prob: f64,
}

impl Branch {
    /// Pre-decision index of the next state when the bid `bid` was placed.
    #[inline]
    pub fn next_index(&self, space: &StateSpace, bid: usize) -> usize {
        space.pre_index(&State {
            resource: self.resource,
            lifetime: self.lifetime,
            prev_bid: bid,
            price_state: self.price_state as usize,
        })
    }
}

#[derive(Debug)]
pub struct Dynamics {
    cfg: MarketConfig,
    model: Arc<dyn PriceModel>,
    space: StateSpace,
    outcomes: Vec<OnceLock<Result<Arc<[HourOutcome]>, String>>>,
    transitions: Vec<OnceLock<Box<[Branch]>>>,
    hour_revenue: Vec<OnceLock<Box<[f64]>>>,
    contributions: Vec<OnceLock<Box<[f64]>>>,
}

impl Dynamics {
    pub fn new(cfg: MarketConfig, model: Arc<dyn PriceModel>) -> Result<Dynamics> {
        cfg.validate()?;
        if model.settlements_per_hour() != cfg.settlements_per_hour {
            return Err(Error::Config(format!(
                "price model has {} settlements per hour, market expects {}",
                model.settlements_per_hour(),
                cfg.settlements_per_hour
            )));
        }
        if cfg.horizon == 0 {
            return Err(Error::Config("horizon T must be >= 1".into()));
        }
        if let Some(hours) = model.hours() {
            if cfg.horizon + 1 > hours {
                return Err(Error::Config(format!(
                    "horizon T = {} needs {} hours of prices, model provides {hours}",
                    cfg.horizon,
                    cfg.horizon + 1
                )));
            }
        }
        if model.max_price() > cfg.price_bound {
            return Err(Error::Config(format!(
                "price model reaches {}, above the price bound {}",
                model.max_price(),
                cfg.price_bound
            )));
        }
        let space = StateSpace::new(&cfg, model.num_states());
        if let TerminalContribution::Table(values) = &cfg.terminal {
            if values.len() != space.num_pre() {
                return Err(Error::Config(format!(
                    "terminal table has {} entries, state space has {}",
                    values.len(),
                    space.num_pre()
                )));
            }
        }
        let t = cfg.horizon;
        let n_ps = space.num_price_states();
        let rl = space.r_levels() * space.l_levels();
        Ok(Dynamics {
            outcomes: (0..(t + 1) * n_ps).map(|_| OnceLock::new()).collect(),
            transitions: (0..t * space.num_pre()).map(|_| OnceLock::new()).collect(),
            hour_revenue: (0..(t + 1) * n_ps * rl).map(|_| OnceLock::new()).collect(),
            contributions: (0..t * space.num_pre()).map(|_| OnceLock::new()).collect(),
            cfg,
            model,
            space,
        })
    }

    pub fn config(&self) -> &MarketConfig {
        &self.cfg
    }

    pub fn model(&self) -> &dyn PriceModel {
        self.model.as_ref()
    }

    pub fn model_arc(&self) -> Arc<dyn PriceModel> {
        Arc::clone(&self.model)
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn horizon(&self) -> usize {
        self.cfg.horizon
    }

    pub fn num_bids(&self) -> usize {
        self.space.num_pairs()
    }

    pub fn can_enumerate(&self) -> bool {
        self.model.can_enumerate()
    }

    pub fn require_enumerable(&self, what: &str) -> Result<()> {
        if self.model.can_enumerate() {
            Ok(())
        } else {
            Err(Error::Capability(format!(
                "{what} needs an enumerable price model"
            )))
        }
    }

    /// Enumerated outcomes of hour `hour` from price state `ps`.
    pub fn outcomes(&self, hour: usize, ps: usize) -> Result<Arc<[HourOutcome]>> {
        let slot = &self.outcomes[hour * self.space.num_price_states() + ps];
        slot.get_or_init(|| {
            self.model
                .enumerate_hour(hour, ps)
                .map(Arc::from)
                .map_err(|e| e.to_string())
        })
        .clone()
        .map_err(Error::Capability)
    }

    /// Checks that every hour the solvers touch can be enumerated.
    pub fn prepare_exact(&self) -> Result<()> {
        self.require_enumerable("exact expectation")?;
        for hour in 0..=self.cfg.horizon {
            for ps in 0..self.space.num_price_states() {
                match self.model.enumerate_hour(hour, ps) {
                    Ok(out) => {
                        let _ = self.outcomes[hour * self.space.num_price_states() + ps]
                            .set(Ok(Arc::from(out)));
                    }
                    Err(e) => return Err(e),
                }
            }
        }
        Ok(())
    }

    /// Distribution of `(R_{t+1}, L_{t+1}, P^s_{t+1})` given the pre-decision state.
    ///
    /// Panics if the model is not enumerable; call [`Dynamics::prepare_exact`] first.
    pub fn transitions(&self, t: usize, pre: usize) -> &[Branch] {
        self.transitions[t * self.space.num_pre() + pre].get_or_init(|| {
            let s = self.space.pre_state(pre);
            let bid = self.cfg.grid.pair(s.prev_bid);
            let outcomes = self
                .outcomes(t, s.price_state)
                .expect("transitions need an enumerable model");
            outcomes
                .iter()
                .map(|o| {
                    let h = settle_hour(&self.cfg, s.resource, s.lifetime, &o.prices, bid);
                    Branch {
                        resource: h.resource,
                        lifetime: h.lifetime,
                        price_state: o.next_state as u32,
                        prob: o.prob,
                    }
                })
                .collect()
        })
    }

    /// `E[C(r, l, P_hour, b)]` over hour `hour` from price state `ps`, for every bid.
    pub fn hour_revenue(&self, hour: usize, ps: usize, r: u32, l: u32) -> &[f64] {
        let sp = &self.space;
        let idx = ((hour * sp.num_price_states() + ps) * sp.r_levels() + r as usize)
            * sp.l_levels()
            + l as usize;
        self.hour_revenue[idx].get_or_init(|| {
            let outcomes = self
                .outcomes(hour, ps)
                .expect("hour revenue needs an enumerable model");
            let grid = &self.cfg.grid;
            (0..grid.num_pairs())
                .map(|b| {
                    let pair = grid.pair(b);
                    outcomes
                        .iter()
                        .map(|o| o.prob * settle_hour(&self.cfg, r, l, &o.prices, pair).revenue)
                        .sum()
                })
                .collect()
        })
    }

    /// Contribution estimate `C_{t,t+2}(S_t, b)` for every bid `b`.
    pub fn contributions(&self, t: usize, pre: usize) -> &[f64] {
        self.contributions[t * self.space.num_pre() + pre].get_or_init(|| {
            if self.model.can_enumerate() {
                let mut acc = vec![0.0; self.num_bids()];
                for br in self.transitions(t, pre) {
                    let rev =
                        self.hour_revenue(t + 1, br.price_state as usize, br.resource, br.lifetime);
                    for (a, v) in acc.iter_mut().zip(rev) {
                        *a += br.prob * v;
                    }
                }
                acc.into_boxed_slice()
            } else {
                self.empirical_contributions(t, pre)
            }
        })
    }

    fn empirical_contributions(&self, t: usize, pre: usize) -> Box<[f64]> {
        let days = self
            .model
            .empirical_paths()
            .expect("non-enumerable models must expose their sample paths");
        let m = self.cfg.settlements_per_hour;
        let s = self.space.pre_state(pre);
        let prev = self.cfg.grid.pair(s.prev_bid);
        let mut acc = vec![0.0; self.num_bids()];
        for day in days {
            let now = &day[t * m..(t + 1) * m];
            let next = &day[(t + 1) * m..(t + 2) * m];
            let h = settle_hour(&self.cfg, s.resource, s.lifetime, now, prev);
            for (b, a) in acc.iter_mut().enumerate() {
                *a += settle_hour(&self.cfg, h.resource, h.lifetime, next, self.cfg.grid.pair(b))
                    .revenue;
            }
        }
        let n = days.len() as f64;
        acc.iter_mut().for_each(|a| *a /= n);
        acc.into_boxed_slice()
    }

    /// `E[V_{t+1}(S_{t+1}) | S_t, b]` for a pre-decision table slice.
    #[inline]
    pub fn expected_next(&self, t: usize, pre: usize, bid: usize, next: &[f64]) -> f64 {
        self.transitions(t, pre)
            .iter()
            .map(|br| br.prob * next[br.next_index(&self.space, bid)])
            .sum()
    }

    /// Terminal values `C_term` over the pre-decision lattice.
    pub fn terminal_values(&self) -> Vec<f64> {
        let n = self.space.num_pre();
        match &self.cfg.terminal {
            TerminalContribution::Zero => vec![0.0; n],
            TerminalContribution::PerUnit(v) => (0..n)
                .map(|i| v * self.space.pre_state(i).resource as f64)
                .collect(),
            TerminalContribution::Table(values) => values.to_vec(),
        }
    }

    pub fn terminal_value(&self, s: &State) -> f64 {
        match &self.cfg.terminal {
            TerminalContribution::Zero => 0.0,
            TerminalContribution::PerUnit(v) => v * s.resource as f64,
            TerminalContribution::Table(values) => values[self.space.pre_index(s)],
        }
    }
}
