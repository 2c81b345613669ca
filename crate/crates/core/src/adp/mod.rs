//! Monotone approximate dynamic programming.
//!
//! [`PreTrainer`] learns pre-decision values with exact or sampled
//! expectations; [`PostTrainer`] learns post-decision values from single
//! sampled hours and needs no price distribution. Both run plain approximate
//! value iteration when the projection is switched off.

mod stepsize;

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::Dynamics;
use crate::error::{Error, Result};
use crate::exact::greedy_bid;
use crate::lattice::{Layout, StateSpace};
use crate::market::{settle_hour, State};
use crate::price::{Episode, SimRng};
use crate::table::ValueTable;

pub use stepsize::{smooth, StepsizeRule, Stepsizes, BAKF_MCCLAIN_TARGET};

/// Default bound beyond which an observation is counted as suspicious.
pub const DEFAULT_OBSERVATION_BOUND: f64 = 1e6;

/// How the next state is chosen after each update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "epsilon")]
pub enum Exploration {
    /// A uniformly random state at every period.
    Uniform,
    /// Follow the greedy transition, jumping to a uniform state with probability epsilon.
    #[serde(rename = "egreedy")]
    EpsilonGreedy(f64),
}

impl fmt::Display for Exploration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Exploration::Uniform => write!(f, "uniform"),
            Exploration::EpsilonGreedy(e) => write!(f, "egreedy:{e}"),
        }
    }
}

impl FromStr for Exploration {
    type Err = Error;

    fn from_str(s: &str) -> Result<Exploration> {
        if s == "uniform" {
            return Ok(Exploration::Uniform);
        }
        if s == "egreedy" {
            return Ok(Exploration::EpsilonGreedy(0.25));
        }
        let eps = s
            .strip_prefix("egreedy:")
            .ok_or_else(|| Error::Config(format!("unknown exploration {s:?}; expected uniform or egreedy:<eps>")))?;
        let eps: f64 = eps
            .parse()
            .map_err(|_| Error::Config(format!("bad epsilon {eps:?}")))?;
        if !(0.0..=1.0).contains(&eps) {
            return Err(Error::Config(format!("epsilon must lie in [0, 1], got {eps}")));
        }
        Ok(Exploration::EpsilonGreedy(eps))
    }
}

/// How the downstream expectation of an observation is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "kind", content = "samples")]
pub enum Expectation {
    Exact,
    /// Sample average over `J` independently drawn next states.
    Saa(usize),
    #[serde(rename = "single-sample")]
    SingleSample,
}

/// Contribution term inside post-decision observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContributionEstimate {
    /// Exact expectation, or the average over training days for data-driven models.
    #[default]
    Expected,
    /// Revenue realized along the sampled path.
    Realized,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainerConfig {
    pub iterations: usize,
    pub exploration: Exploration,
    pub expectation: Expectation,
    pub stepsize: StepsizeRule,
    pub seed: u64,
    /// `false` runs plain approximate value iteration.
    pub projection: bool,
    pub contribution: ContributionEstimate,
    pub observation_bound: f64,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            iterations: 1000,
            exploration: Exploration::Uniform,
            expectation: Expectation::Exact,
            stepsize: StepsizeRule::Harmonic,
            seed: 0,
            projection: true,
            contribution: ContributionEstimate::Expected,
            observation_bound: DEFAULT_OBSERVATION_BOUND,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        self.stepsize.validate()?;
        if let Expectation::Saa(0) = self.expectation {
            return Err(Error::Config("SAA needs at least one sample".into()));
        }
        if let Exploration::EpsilonGreedy(e) = self.exploration {
            if !(0.0..=1.0).contains(&e) {
                return Err(Error::Config(format!("epsilon must lie in [0, 1], got {e}")));
            }
        }
        if !(self.observation_bound > 0.0) {
            return Err(Error::Config("observation bound must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainStats {
    pub iterations: usize,
    pub observations: u64,
    /// Observations whose magnitude exceeded the configured bound.
    pub bound_violations: u64,
    pub visited_states: usize,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub table: ValueTable,
    pub stats: TrainStats,
}

/// Applies the monotone projection at `index` with the smoothed value `z`:
/// the state takes `z`, states above it are raised to at least `z`, states
/// below are lowered to at most `z`. Returns how many other entries changed.
pub fn monotone_project(
    space: &StateSpace,
    layout: Layout,
    slice: &mut [f64],
    index: usize,
    z: f64,
) -> usize {
    slice[index] = z;
    let mut changed = 0;
    space.for_each_comparable(layout, index, true, |j| {
        if slice[j] < z {
            slice[j] = z;
            changed += 1;
        }
    });
    space.for_each_comparable(layout, index, false, |j| {
        if slice[j] > z {
            slice[j] = z;
            changed += 1;
        }
    });
    changed
}

/// Pre-decision observation at `(t, pre)` against the table slice `next`
/// (values of period `t + 1`). Returns the value and the maximizing bid.
pub fn sample_observation_pre(
    d: &Dynamics,
    t: usize,
    pre: usize,
    next: &[f64],
    mode: Expectation,
    rng: &mut SimRng,
) -> Result<(f64, usize)> {
    match mode {
        Expectation::Exact => {
            d.require_enumerable("exact observations")?;
            let (bid, value) = greedy_bid(d, t, pre, next);
            Ok((value, bid))
        }
        Expectation::Saa(j) => Ok(saa_observation(d, t, pre, next, j.max(1), rng)),
        Expectation::SingleSample => Ok(saa_observation(d, t, pre, next, 1, rng)),
    }
}

fn saa_observation(
    d: &Dynamics,
    t: usize,
    pre: usize,
    next: &[f64],
    samples: usize,
    rng: &mut SimRng,
) -> (f64, usize) {
    let space = d.space();
    let s = space.pre_state(pre);
    let cfg = d.config();
    let model = d.model();
    let prev = cfg.grid.pair(s.prev_bid);
    let mut prices = Vec::with_capacity(cfg.settlements_per_hour);
    let draws: Vec<State> = (0..samples)
        .map(|_| {
            let ep = model.start_episode(rng);
            let ps1 = model.sample_hour(t, s.price_state, &ep, rng, &mut prices);
            let h = settle_hour(cfg, s.resource, s.lifetime, &prices, prev);
            State {
                resource: h.resource,
                lifetime: h.lifetime,
                prev_bid: 0,
                price_state: ps1,
            }
        })
        .collect();
    let c = d.contributions(t, pre);
    let mut best = (0, f64::NEG_INFINITY);
    for (b, &cb) in c.iter().enumerate() {
        let mean = draws
            .iter()
            .map(|s1| next[space.pre_index(&State { prev_bid: b, ..*s1 })])
            .sum::<f64>()
            / samples as f64;
        let v = cb + mean;
        if v > best.1 {
            best = (b, v);
        }
    }
    (best.1, best.0)
}

/// `max_b [C_{t,t+2}(s, b) + V^b_t(s, b)]` over a post-decision slice.
pub fn best_post_bid(d: &Dynamics, t: usize, pre: usize, slice: &[f64]) -> (usize, f64) {
    let c = d.contributions(t, pre);
    let base = pre * d.num_bids();
    let mut best = (0, f64::NEG_INFINITY);
    for (b, &cb) in c.iter().enumerate() {
        let v = cb + slice[base + b];
        if v > best.1 {
            best = (b, v);
        }
    }
    best
}

/// Result of one post-decision observation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PostObservation {
    pub value: f64,
    /// The sampled next pre-decision state `S_{t+1}`.
    pub next_pre: usize,
    /// Maximizing bid at `S_{t+1}` (the idle pair at the last period).
    pub best_bid: usize,
}

/// Single-sample observation of the post-decision state `post` at period `t`.
///
/// Samples the prices of hour `t` along `episode`, moves to `S_{t+1}` and
/// returns `max_b' [C_{t+1,t+3}(S_{t+1}, b') + V^b_{t+1}(S_{t+1}, b')]`, or the
/// terminal value when `t = T - 1`.
pub fn sample_observation_post(
    d: &Dynamics,
    table: &ValueTable,
    t: usize,
    post: usize,
    contribution: ContributionEstimate,
    episode: &Episode,
    rng: &mut SimRng,
) -> PostObservation {
    let space = d.space();
    let cfg = d.config();
    let model = d.model();
    let sb = space.post_state(post);
    let s = sb.state;
    let mut prices = Vec::with_capacity(cfg.settlements_per_hour);
    let ps1 = model.sample_hour(t, s.price_state, episode, rng, &mut prices);
    let h = settle_hour(cfg, s.resource, s.lifetime, &prices, cfg.grid.pair(s.prev_bid));
    let s1 = State {
        resource: h.resource,
        lifetime: h.lifetime,
        prev_bid: sb.bid,
        price_state: ps1,
    };
    let next_pre = space.pre_index(&s1);
    if t + 1 == d.horizon() {
        return PostObservation {
            value: d.terminal_value(&s1),
            next_pre,
            best_bid: cfg.grid.idle_pair(),
        };
    }
    let slice = table.period(t + 1);
    let (best_bid, value) = match contribution {
        ContributionEstimate::Expected => best_post_bid(d, t + 1, next_pre, slice),
        ContributionEstimate::Realized => {
            // the bid placed now settles hour t + 1; the next bid earns hour t + 2
            let ps2 = model.sample_hour(t + 1, ps1, episode, rng, &mut prices);
            let h2 = settle_hour(cfg, s1.resource, s1.lifetime, &prices, cfg.grid.pair(sb.bid));
            model.sample_hour(t + 2, ps2, episode, rng, &mut prices);
            let base = next_pre * d.num_bids();
            let mut best = (0, f64::NEG_INFINITY);
            for b in 0..d.num_bids() {
                let c = settle_hour(cfg, h2.resource, h2.lifetime, &prices, cfg.grid.pair(b)).revenue;
                let v = c + slice[base + b];
                if v > best.1 {
                    best = (b, v);
                }
            }
            best
        }
    };
    PostObservation {
        value,
        next_pre,
        best_bid,
    }
}

/// The post-decision Bellman operator `H` applied to every period of `table`.
pub fn post_bellman(d: &Dynamics, table: &ValueTable) -> Result<ValueTable> {
    d.prepare_exact()?;
    if table.layout() != Layout::Post {
        return Err(Error::Config("post_bellman needs a post-decision table".into()));
    }
    table.check_compatible(d)?;
    let space = d.space();
    let horizon = d.horizon();
    let n_pre = space.num_pre();
    let n_bids = d.num_bids();
    let mut out = ValueTable::for_dynamics(Layout::Post, d);
    for t in 0..horizon {
        let best_next: Vec<f64> = if t + 1 == horizon {
            d.terminal_values()
        } else {
            let slice = table.period(t + 1);
            (0..n_pre)
                .into_par_iter()
                .map(|pre| best_post_bid(d, t + 1, pre, slice).1)
                .collect()
        };
        out.period_mut(t)
            .par_chunks_mut(n_bids)
            .enumerate()
            .for_each(|(pre, row)| {
                let branches = d.transitions(t, pre);
                for (b, v) in row.iter_mut().enumerate() {
                    *v = branches
                        .iter()
                        .map(|br| br.prob * best_next[br.next_index(space, b)])
                        .sum();
                }
            });
    }
    Ok(out)
}

/// Exact post-decision values `E[V_{t+1}(S_{t+1}) | S_t, b]` from a pre-decision table.
pub fn post_values_from_pre(d: &Dynamics, pre_table: &ValueTable) -> Result<ValueTable> {
    d.prepare_exact()?;
    if pre_table.layout() != Layout::Pre {
        return Err(Error::Config("expected a pre-decision table".into()));
    }
    pre_table.check_compatible(d)?;
    let n_bids = d.num_bids();
    let mut out = ValueTable::for_dynamics(Layout::Post, d);
    for t in 0..d.horizon() {
        let next = pre_table.period(t + 1);
        out.period_mut(t)
            .par_chunks_mut(n_bids)
            .enumerate()
            .for_each(|(pre, row)| {
                for (b, v) in row.iter_mut().enumerate() {
                    *v = d.expected_next(t, pre, b, next);
                }
            });
    }
    Ok(out)
}

fn check_bound(stats: &mut TrainStats, bound: f64, t: usize, index: usize, v: f64) {
    stats.observations += 1;
    if !(v.abs() <= bound) {
        stats.bound_violations += 1;
        if stats.bound_violations == 1 {
            log::warn!("observation {v} at t={t}, state {index} exceeds the sanity bound {bound}");
        }
    }
}

/// Pre-decision Monotone-ADP, one iteration per [`PreTrainer::step`].
#[derive(Debug)]
pub struct PreTrainer<'a> {
    d: &'a Dynamics,
    cfg: TrainerConfig,
    table: ValueTable,
    steps: Stepsizes,
    rng: SimRng,
    stats: TrainStats,
    prices: Vec<f64>,
}

impl<'a> PreTrainer<'a> {
    pub fn new(d: &'a Dynamics, cfg: TrainerConfig) -> Result<PreTrainer<'a>> {
        cfg.validate()?;
        if cfg.expectation == Expectation::Exact {
            d.prepare_exact()?;
        } else if d.can_enumerate() {
            // contributions still use exact expectations when available
            d.prepare_exact()?;
        }
        let mut table = ValueTable::for_dynamics(Layout::Pre, d);
        let horizon = d.horizon();
        table.period_mut(horizon).copy_from_slice(&d.terminal_values());
        Ok(PreTrainer {
            d,
            steps: Stepsizes::new(cfg.stepsize),
            rng: SimRng::seed_from_u64(cfg.seed),
            cfg,
            table,
            stats: TrainStats::default(),
            prices: Vec::new(),
        })
    }

    pub fn table(&self) -> &ValueTable {
        &self.table
    }

    pub fn stats(&self) -> TrainStats {
        TrainStats {
            visited_states: self.steps.visited_states(),
            ..self.stats
        }
    }

    pub fn step(&mut self) -> Result<()> {
        let d = self.d;
        let space = d.space();
        let n_pre = space.num_pre();
        let horizon = d.horizon();
        let episode = d.model().start_episode(&mut self.rng);
        let mut pre = self.rng.random_range(0..n_pre);
        for t in 0..horizon {
            let (obs, bid) = sample_observation_pre(
                d,
                t,
                pre,
                self.table.period(t + 1),
                self.cfg.expectation,
                &mut self.rng,
            )?;
            check_bound(&mut self.stats, self.cfg.observation_bound, t, pre, obs);
            let old = self.table.get(t, pre);
            let alpha = self.steps.next(t * n_pre + pre, old, obs);
            let z = smooth(old, obs, alpha);
            if self.cfg.projection {
                monotone_project(space, Layout::Pre, self.table.period_mut(t), pre, z);
            } else {
                self.table.set(t, pre, z);
            }
            if t + 1 < horizon {
                pre = self.next_state(t, pre, bid, &episode);
            }
        }
        self.stats.iterations += 1;
        Ok(())
    }

    fn next_state(&mut self, t: usize, pre: usize, bid: usize, episode: &Episode) -> usize {
        let d = self.d;
        let space = d.space();
        let follow = match self.cfg.exploration {
            Exploration::Uniform => false,
            Exploration::EpsilonGreedy(eps) => self.rng.random::<f64>() >= eps,
        };
        if !follow {
            return self.rng.random_range(0..space.num_pre());
        }
        let s = space.pre_state(pre);
        let cfg = d.config();
        let ps1 = d
            .model()
            .sample_hour(t, s.price_state, episode, &mut self.rng, &mut self.prices);
        let h = settle_hour(cfg, s.resource, s.lifetime, &self.prices, cfg.grid.pair(s.prev_bid));
        space.pre_index(&State {
            resource: h.resource,
            lifetime: h.lifetime,
            prev_bid: bid,
            price_state: ps1,
        })
    }

    pub fn run(mut self) -> Result<Trained> {
        for _ in 0..self.cfg.iterations {
            self.step()?;
        }
        let stats = self.stats();
        Ok(Trained {
            table: self.table,
            stats,
        })
    }
}

/// Post-decision (distribution-free) Monotone-ADP.
#[derive(Debug)]
pub struct PostTrainer<'a> {
    d: &'a Dynamics,
    cfg: TrainerConfig,
    table: ValueTable,
    steps: Stepsizes,
    rng: SimRng,
    stats: TrainStats,
    last_period: Option<usize>,
}

impl<'a> PostTrainer<'a> {
    pub fn new(d: &'a Dynamics, cfg: TrainerConfig) -> Result<PostTrainer<'a>> {
        cfg.validate()?;
        if cfg.expectation == Expectation::Exact || d.can_enumerate() {
            d.prepare_exact()?;
        }
        let horizon = d.horizon();
        // with a zero terminal value the last period is known exactly
        let last_period = if d.config().terminal.is_zero() {
            horizon.checked_sub(2)
        } else {
            Some(horizon - 1)
        };
        Ok(PostTrainer {
            d,
            steps: Stepsizes::new(cfg.stepsize),
            rng: SimRng::seed_from_u64(cfg.seed),
            cfg,
            table: ValueTable::for_dynamics(Layout::Post, d),
            stats: TrainStats::default(),
            last_period,
        })
    }

    pub fn table(&self) -> &ValueTable {
        &self.table
    }

    pub fn stats(&self) -> TrainStats {
        TrainStats {
            visited_states: self.steps.visited_states(),
            ..self.stats
        }
    }

    fn observe(&mut self, t: usize, post: usize, episode: &Episode) -> PostObservation {
        let d = self.d;
        match self.cfg.expectation {
            Expectation::Exact => {
                let space = d.space();
                let pre = post / d.num_bids();
                let bid = post % d.num_bids();
                let value = d
                    .transitions(t, pre)
                    .iter()
                    .map(|br| {
                        let next = br.next_index(space, bid);
                        let v = if t + 1 == d.horizon() {
                            d.terminal_value(&space.pre_state(next))
                        } else {
                            best_post_bid(d, t + 1, next, self.table.period(t + 1)).1
                        };
                        br.prob * v
                    })
                    .sum();
                // the followed transition is still sampled
                let sampled = sample_observation_post(
                    d,
                    &self.table,
                    t,
                    post,
                    self.cfg.contribution,
                    episode,
                    &mut self.rng,
                );
                PostObservation { value, ..sampled }
            }
            Expectation::SingleSample | Expectation::Saa(1) => sample_observation_post(
                d,
                &self.table,
                t,
                post,
                self.cfg.contribution,
                episode,
                &mut self.rng,
            ),
            Expectation::Saa(j) => {
                let first = sample_observation_post(
                    d,
                    &self.table,
                    t,
                    post,
                    self.cfg.contribution,
                    episode,
                    &mut self.rng,
                );
                let mut sum = first.value;
                for _ in 1..j {
                    let ep = d.model().start_episode(&mut self.rng);
                    sum += sample_observation_post(
                        d,
                        &self.table,
                        t,
                        post,
                        self.cfg.contribution,
                        &ep,
                        &mut self.rng,
                    )
                    .value;
                }
                PostObservation {
                    value: sum / j as f64,
                    ..first
                }
            }
        }
    }

    pub fn step(&mut self) -> Result<()> {
        let Some(last) = self.last_period else {
            self.stats.iterations += 1;
            return Ok(());
        };
        let d = self.d;
        let space = d.space();
        let n_post = space.num_post();
        let n_bids = d.num_bids();
        let episode = d.model().start_episode(&mut self.rng);
        let mut post = self.rng.random_range(0..n_post);
        for t in 0..=last {
            let obs = self.observe(t, post, &episode);
            check_bound(&mut self.stats, self.cfg.observation_bound, t, post, obs.value);
            let old = self.table.get(t, post);
            let alpha = self.steps.next(t * n_post + post, old, obs.value);
            let z = smooth(old, obs.value, alpha);
            if self.cfg.projection {
                monotone_project(space, Layout::Post, self.table.period_mut(t), post, z);
            } else {
                self.table.set(t, post, z);
            }
            if t < last {
                let follow = match self.cfg.exploration {
                    Exploration::Uniform => false,
                    Exploration::EpsilonGreedy(eps) => self.rng.random::<f64>() >= eps,
                };
                post = if follow {
                    obs.next_pre * n_bids + obs.best_bid
                } else {
                    self.rng.random_range(0..n_post)
                };
            }
        }
        self.stats.iterations += 1;
        Ok(())
    }

    pub fn run(mut self) -> Result<Trained> {
        for _ in 0..self.cfg.iterations {
            self.step()?;
        }
        let stats = self.stats();
        Ok(Trained {
            table: self.table,
            stats,
        })
    }
}

pub fn train_pre(d: &Dynamics, cfg: TrainerConfig) -> Result<Trained> {
    PreTrainer::new(d, cfg)?.run()
}

pub fn train_post(d: &Dynamics, cfg: TrainerConfig) -> Result<Trained> {
    PostTrainer::new(d, cfg)?.run()
}

#[cfg(test)]
mod tests;
