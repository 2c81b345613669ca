//! Settlement mechanics of the hour-ahead bidding problem.
//!
//! A bid `(low, high)` is placed on the hour and governs the `M` settlements
//! of the hour after next. At every settlement the battery sells one unit if
//! the spot price is strictly above `high`, buys one unit if it is strictly
//! below `low`, and idles otherwise. A unit of resource is `1/M` MWh, so all
//! resource arithmetic is integer.
//!
//! Intra-hour trajectories are indexed from 0: `trajectory[m]` is the level
//! *before* settlement `m` and `trajectory[M]` the level at the end of the
//! hour. Both the lifetime discount and the undersupply penalty of settlement
//! `m` look at `trajectory[m]`.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default upper bound on spot prices (currency/MWh).
pub const DEFAULT_PRICE_BOUND: f64 = 3000.0;

/// Outcome of a single settlement.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(i8)]
pub enum Settlement {
    Buy = -1,
    Idle = 0,
    Sell = 1,
}

impl Settlement {
    #[inline]
    pub fn of(price: f64, bid: BidPair) -> Settlement {
        if bid.high < price {
            Settlement::Sell
        } else if bid.low > price {
            Settlement::Buy
        } else {
            Settlement::Idle
        }
    }

    #[inline]
    pub fn value(self) -> i8 {
        self as i8
    }
}

/// A buy/sell threshold pair with `low <= high`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BidPair {
    pub low: f64,
    pub high: f64,
}

impl BidPair {
    pub fn new(low: f64, high: f64) -> Result<BidPair> {
        if low.is_nan() || high.is_nan() {
            return Err(Error::Domain("bid thresholds must not be NaN".into()));
        }
        if low > high {
            return Err(Error::Domain(format!(
                "bid low {low} exceeds bid high {high}"
            )));
        }
        Ok(BidPair { low, high })
    }

    /// A bid that can never clear against finite prices.
    pub fn never_clears() -> BidPair {
        BidPair {
            low: f64::NEG_INFINITY,
            high: f64::INFINITY,
        }
    }
}

impl fmt::Display for BidPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.low, self.high)
    }
}

/// Finite set of bid levels and the feasible pairs built from them.
///
/// Pairs are numbered in lexicographic order of `(low, high)` level indices,
/// so a smaller pair index always means a lexicographically smaller bid.
#[derive(Debug, Clone, PartialEq)]
pub struct BidGrid {
    levels: Vec<f64>,
    pairs: Vec<(u16, u16)>,
    lookup: Vec<u32>,
}

impl BidGrid {
    pub fn from_levels(levels: Vec<f64>) -> Result<BidGrid> {
        if levels.is_empty() {
            return Err(Error::Config("bid grid must not be empty".into()));
        }
        if levels.len() > u16::MAX as usize {
            return Err(Error::Config("bid grid has too many levels".into()));
        }
        if levels.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::Config(
                "bid levels must be finite and nonnegative".into(),
            ));
        }
        if levels.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("bid grid must be strictly increasing".into()));
        }
        let n = levels.len();
        let mut pairs = Vec::with_capacity(n * (n + 1) / 2);
        let mut lookup = vec![u32::MAX; n * n];
        for lo in 0..n {
            for hi in lo..n {
                lookup[lo * n + hi] = pairs.len() as u32;
                pairs.push((lo as u16, hi as u16));
            }
        }
        Ok(BidGrid {
            levels,
            pairs,
            lookup,
        })
    }

    /// `count` evenly spaced levels from `min` to `max` inclusive.
    pub fn linear(min: f64, max: f64, count: usize) -> Result<BidGrid> {
        if count == 0 {
            return Err(Error::Config("bid grid needs at least one level".into()));
        }
        if count == 1 {
            return BidGrid::from_levels(vec![min]);
        }
        if !(min < max) {
            return Err(Error::Config(format!(
                "bid grid needs min < max, got [{min}, {max}]"
            )));
        }
        let step = (max - min) / (count - 1) as f64;
        let mut levels: Vec<f64> = (0..count).map(|i| min + step * i as f64).collect();
        levels[count - 1] = max;
        BidGrid::from_levels(levels)
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn min(&self) -> f64 {
        self.levels[0]
    }

    pub fn max(&self) -> f64 {
        self.levels[self.levels.len() - 1]
    }

    /// Level indices `(low, high)` of a pair.
    #[inline]
    pub fn pair_levels(&self, pair: usize) -> (usize, usize) {
        let (lo, hi) = self.pairs[pair];
        (lo as usize, hi as usize)
    }

    #[inline]
    pub fn pair(&self, pair: usize) -> BidPair {
        let (lo, hi) = self.pairs[pair];
        BidPair {
            low: self.levels[lo as usize],
            high: self.levels[hi as usize],
        }
    }

    pub fn pair_index(&self, low_level: usize, high_level: usize) -> Option<usize> {
        let n = self.levels.len();
        if low_level >= n || high_level >= n {
            return None;
        }
        match self.lookup[low_level * n + high_level] {
            u32::MAX => None,
            i => Some(i as usize),
        }
    }

    /// The pair `(b_min, b_max)`, which idles whenever prices stay inside the grid.
    pub fn idle_pair(&self) -> usize {
        self.pair_index(0, self.levels.len() - 1)
            .expect("lowest and highest level always form a pair")
    }

    /// Index of the level closest to `price` (ties go to the lower level).
    pub fn nearest_level(&self, price: f64) -> usize {
        let mut best = 0;
        let mut best_dist = f64::INFINITY;
        for (i, &v) in self.levels.iter().enumerate() {
            let d = (v - price).abs();
            if d < best_dist {
                best = i;
                best_dist = d;
            }
        }
        best
    }

    pub fn level_index(&self, value: f64) -> Option<usize> {
        self.levels.iter().position(|&v| v == value)
    }

    /// Grid pair matching the given thresholds exactly, if any.
    pub fn find(&self, bid: BidPair) -> Option<usize> {
        let lo = self.level_index(bid.low)?;
        let hi = self.level_index(bid.high)?;
        self.pair_index(lo, hi)
    }

    /// Componentwise order on pairs.
    #[inline]
    pub fn pair_le(&self, a: usize, b: usize) -> bool {
        let (alo, ahi) = self.pairs[a];
        let (blo, bhi) = self.pairs[b];
        alo <= blo && ahi <= bhi
    }
}

/// Discount applied to sales as a function of remaining lifetime.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaTable(Vec<f64>);

impl BetaTable {
    pub fn from_values(values: Vec<f64>) -> Result<BetaTable> {
        if values.is_empty() {
            return Err(Error::Config("beta table must not be empty".into()));
        }
        if values.iter().any(|b| !(0.0..=1.0).contains(b)) {
            return Err(Error::Config("beta values must lie in [0, 1]".into()));
        }
        if values.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Config("beta table must be nondecreasing".into()));
        }
        Ok(BetaTable(values))
    }

    pub fn constant(c: f64, l_max: u32) -> Result<BetaTable> {
        BetaTable::from_values(vec![c; l_max as usize + 1])
    }

    pub fn step(l_max: u32) -> Result<BetaTable> {
        BetaTable::from_values(
            (0..=l_max).map(|l| if l == 0 { 0.0 } else { 1.0 }).collect(),
        )
    }

    pub fn linear(l_max: u32) -> Result<BetaTable> {
        if l_max == 0 {
            return Err(Error::Config("linear beta needs l_max >= 1".into()));
        }
        BetaTable::from_values((0..=l_max).map(|l| l as f64 / l_max as f64).collect())
    }

    /// `(l / l_max)^(1/n)` for `n > 1`.
    pub fn power(l_max: u32, n: f64) -> Result<BetaTable> {
        if l_max == 0 {
            return Err(Error::Config("power beta needs l_max >= 1".into()));
        }
        if !(n > 1.0) {
            return Err(Error::Config(format!("power beta needs n > 1, got {n}")));
        }
        BetaTable::from_values(
            (0..=l_max)
                .map(|l| (l as f64 / l_max as f64).powf(1.0 / n))
                .collect(),
        )
    }

    #[inline]
    pub fn at(&self, l: u32) -> f64 {
        self.0[l as usize]
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn l_max(&self) -> u32 {
        (self.0.len() - 1) as u32
    }

    pub fn is_constant_one(&self) -> bool {
        self.0.iter().all(|&b| b == 1.0)
    }
}

/// Value assigned to the terminal state.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum TerminalContribution {
    #[default]
    Zero,
    /// `per_unit * R_T`; `per_unit >= 0`.
    PerUnit(f64),
    /// One value per pre-decision lattice state (see `lattice::StateSpace::pre_index`).
    Table(Arc<[f64]>),
}

impl TerminalContribution {
    pub fn is_zero(&self) -> bool {
        match self {
            TerminalContribution::Zero => true,
            TerminalContribution::PerUnit(v) => *v == 0.0,
            TerminalContribution::Table(values) => values.iter().all(|&v| v == 0.0),
        }
    }
}

/// Static problem parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketConfig {
    /// Settlements per hour (`M`).
    pub settlements_per_hour: usize,
    /// Terminal period `T`; bids are placed at `t = 0..T-1`.
    pub horizon: usize,
    /// Storage capacity in units of `1/M` MWh.
    pub r_max: u32,
    /// Lifetime budget in discharges.
    pub l_max: u32,
    /// Undersupply penalty multiplier `K`.
    pub penalty_k: f64,
    pub grid: BidGrid,
    pub beta: BetaTable,
    pub terminal: TerminalContribution,
    /// Global upper bound on spot prices.
    pub price_bound: f64,
    /// Apply the lifetime discount to undersupply penalties too (the literal
    /// product form). Off by default: with it on, revenue can decrease in the
    /// lifetime whenever `K > 0` and `beta` is not constant.
    pub penalty_discounted: bool,
}

impl MarketConfig {
    pub fn new(
        settlements_per_hour: usize,
        horizon: usize,
        r_max: u32,
        l_max: u32,
        penalty_k: f64,
        grid: BidGrid,
        beta: BetaTable,
    ) -> Result<MarketConfig> {
        let cfg = MarketConfig {
            settlements_per_hour,
            horizon,
            r_max,
            l_max,
            penalty_k,
            grid,
            beta,
            terminal: TerminalContribution::Zero,
            price_bound: DEFAULT_PRICE_BOUND,
            penalty_discounted: false,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_terminal(mut self, terminal: TerminalContribution) -> Self {
        self.terminal = terminal;
        self
    }

    pub fn with_price_bound(mut self, bound: f64) -> Self {
        self.price_bound = bound;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.settlements_per_hour == 0 {
            return Err(Error::Config("settlements per hour must be >= 1".into()));
        }
        if self.r_max == 0 {
            return Err(Error::Config("r_max must be >= 1".into()));
        }
        if !(self.penalty_k >= 0.0) || !self.penalty_k.is_finite() {
            return Err(Error::Config("penalty K must be finite and >= 0".into()));
        }
        if self.beta.l_max() != self.l_max {
            return Err(Error::Config(format!(
                "beta table has {} entries, expected l_max + 1 = {}",
                self.beta.values().len(),
                self.l_max + 1
            )));
        }
        if !(self.price_bound > 0.0) {
            return Err(Error::Config("price bound must be positive".into()));
        }
        if let TerminalContribution::PerUnit(v) = self.terminal {
            if !(v >= 0.0) {
                return Err(Error::Config(
                    "per-unit terminal value must be >= 0".into(),
                ));
            }
        }
        Ok(())
    }

    /// Length of one settlement interval in hours.
    pub fn delta_t(&self) -> f64 {
        1.0 / self.settlements_per_hour as f64
    }

    pub fn check_prices(&self, prices: &[f64]) -> Result<()> {
        if prices.len() != self.settlements_per_hour {
            return Err(Error::Config(format!(
                "price vector has {} entries, expected M = {}",
                prices.len(),
                self.settlements_per_hour
            )));
        }
        Ok(())
    }

    pub fn settlement_outcomes(&self, prices: &[f64], bid: BidPair) -> Result<Vec<Settlement>> {
        self.check_prices(prices)?;
        Ok(settlement_outcomes(prices, bid))
    }

    pub fn discharge_indicators(&self, prices: &[f64], bid: BidPair) -> Result<Vec<bool>> {
        self.check_prices(prices)?;
        Ok(discharge_indicators(prices, bid))
    }

    pub fn hourly_revenue(&self, r: u32, l: u32, prices: &[f64], bid: BidPair) -> Result<f64> {
        self.check_prices(prices)?;
        Ok(settle_hour(self, r, l, prices, bid).revenue)
    }
}

/// A price vector validated against `M` and the price bound.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceVector(Vec<f64>);

impl PriceVector {
    pub fn new(prices: Vec<f64>, cfg: &MarketConfig) -> Result<PriceVector> {
        cfg.check_prices(&prices)?;
        if let Some(p) = prices
            .iter()
            .find(|p| !(**p >= 0.0 && **p <= cfg.price_bound))
        {
            return Err(Error::Domain(format!(
                "price {p} outside [0, {}]",
                cfg.price_bound
            )));
        }
        Ok(PriceVector(prices))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

pub fn settlement_outcomes(prices: &[f64], bid: BidPair) -> Vec<Settlement> {
    prices.iter().map(|&p| Settlement::of(p, bid)).collect()
}

pub fn discharge_indicators(prices: &[f64], bid: BidPair) -> Vec<bool> {
    prices.iter().map(|&p| bid.high < p).collect()
}

/// Intra-hour resource levels; returns `(final, trajectory)` with `M + 1` entries.
pub fn resource_transition(r: u32, outcomes: &[Settlement], r_max: u32) -> (u32, Vec<u32>) {
    let mut traj = Vec::with_capacity(outcomes.len() + 1);
    let mut level = r as i64;
    traj.push(r);
    for q in outcomes {
        level = (level - q.value() as i64).clamp(0, r_max as i64);
        traj.push(level as u32);
    }
    (level as u32, traj)
}

/// Intra-hour lifetime levels; returns `(final, trajectory)` with `M + 1` entries.
pub fn lifetime_transition(l: u32, discharges: &[bool]) -> (u32, Vec<u32>) {
    let mut traj = Vec::with_capacity(discharges.len() + 1);
    let mut level = l;
    traj.push(l);
    for &d in discharges {
        if d {
            level = level.saturating_sub(1);
        }
        traj.push(level);
    }
    (level, traj)
}

#[inline]
pub fn settlement_discount(l_at_m: u32, outcome: Settlement, beta: &BetaTable) -> f64 {
    if outcome == Settlement::Sell {
        beta.at(l_at_m)
    } else {
        1.0
    }
}

#[inline]
pub fn undersupply_factor(r_at_m: u32, outcome: Settlement, penalty_k: f64) -> f64 {
    if r_at_m == 0 && outcome == Settlement::Sell {
        -penalty_k
    } else {
        1.0
    }
}

/// Result of settling one hour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HourSettlement {
    pub revenue: f64,
    pub resource: u32,
    pub lifetime: u32,
}

/// Settles `prices` against `bid` starting from `(r, l)` in a single pass.
///
/// Prices are not length-checked; callers going through public entry points
/// use [`MarketConfig::hourly_revenue`].
#[inline]
pub fn settle_hour(cfg: &MarketConfig, r: u32, l: u32, prices: &[f64], bid: BidPair) -> HourSettlement {
    let mut r = r;
    let mut l = l;
    let mut revenue = 0.0;
    for &p in prices {
        match Settlement::of(p, bid) {
            Settlement::Sell => {
                let beta = cfg.beta.at(l);
                if r == 0 {
                    let penalty = -cfg.penalty_k * p;
                    revenue += if cfg.penalty_discounted {
                        beta * penalty
                    } else {
                        penalty
                    };
                } else {
                    revenue += beta * p;
                    r -= 1;
                }
                l = l.saturating_sub(1);
            }
            Settlement::Buy => {
                revenue -= p;
                if r < cfg.r_max {
                    r += 1;
                }
            }
            Settlement::Idle => {}
        }
    }
    HourSettlement {
        revenue,
        resource: r,
        lifetime: l,
    }
}

/// Pre-decision state `(R, L, previous bid, price-model state)`.
///
/// `prev_bid` and `price_state` are indices into the bid grid's pair list and
/// the price model's finite state list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct State {
    pub resource: u32,
    pub lifetime: u32,
    pub prev_bid: usize,
    pub price_state: usize,
}

/// Post-decision state: a pre-decision state together with the bid just placed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PostState {
    pub state: State,
    pub bid: usize,
}

/// Advances `s` through one hour of `prices`, which settle against the previous
/// bid; the new bid is stored for the following hour.
pub fn state_transition(
    cfg: &MarketConfig,
    s: &State,
    bid: usize,
    prices: &[f64],
    next_price_state: usize,
) -> State {
    let h = settle_hour(cfg, s.resource, s.lifetime, prices, cfg.grid.pair(s.prev_bid));
    State {
        resource: h.resource,
        lifetime: h.lifetime,
        prev_bid: bid,
        price_state: next_price_state,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use Settlement::*;

    fn cfg(m: usize, r_max: u32, l_max: u32, k: f64, beta: BetaTable) -> MarketConfig {
        MarketConfig::new(m, 3, r_max, l_max, k, BidGrid::linear(0.0, 100.0, 5).unwrap(), beta)
            .unwrap()
    }

    fn bid(lo: f64, hi: f64) -> BidPair {
        BidPair::new(lo, hi).unwrap()
    }

    #[test]
    fn outcomes_examples() {
        assert_eq!(
            settlement_outcomes(&[70.0, 20.0, 45.0], bid(30.0, 60.0)),
            vec![Sell, Buy, Idle]
        );
        assert_eq!(settlement_outcomes(&[60.0], bid(30.0, 60.0)), vec![Idle]);
        assert_eq!(settlement_outcomes(&[10.0], bid(0.0, 0.0)), vec![Sell]);
    }

    #[test]
    fn outcomes_check_length() {
        let c = cfg(2, 2, 1, 1.0, BetaTable::constant(1.0, 1).unwrap());
        assert!(matches!(
            c.settlement_outcomes(&[1.0], bid(0.0, 1.0)),
            Err(Error::Config(_))
        ));
        assert!(c.discharge_indicators(&[1.0, 2.0, 3.0], bid(0.0, 1.0)).is_err());
    }

    #[test]
    fn discharge_examples() {
        assert_eq!(
            discharge_indicators(&[70.0, 20.0, 45.0], bid(30.0, 60.0)),
            vec![true, false, false]
        );
        assert_eq!(discharge_indicators(&[60.0], bid(30.0, 60.0)), vec![false]);
        assert_eq!(
            discharge_indicators(&[0.0, 2999.0, 3000.0], BidPair::never_clears()),
            vec![false; 3]
        );
    }

    #[test]
    fn resource_examples() {
        assert_eq!(resource_transition(1, &[Sell, Sell, Sell], 2), (0, vec![1, 0, 0, 0]));
        assert_eq!(resource_transition(2, &[Buy, Buy, Buy], 2).0, 2);
        // step by step: 0 -> buy 1 -> sell 0 -> idle 0
        assert_eq!(resource_transition(0, &[Buy, Sell, Idle], 2), (0, vec![0, 1, 0, 0]));
    }

    #[test]
    fn lifetime_examples() {
        assert_eq!(lifetime_transition(2, &[true, true, true]), (0, vec![2, 1, 0, 0]));
        assert_eq!(lifetime_transition(5, &[false, false, false]).0, 5);
        assert_eq!(lifetime_transition(1, &[false, true, true]), (0, vec![1, 1, 0, 0]));
    }

    #[test]
    fn discount_and_penalty_examples() {
        let beta = BetaTable::linear(4).unwrap();
        assert_eq!(settlement_discount(2, Sell, &beta), 0.5);
        assert_eq!(settlement_discount(2, Buy, &beta), 1.0);
        assert_eq!(settlement_discount(0, Sell, &BetaTable::constant(1.0, 3).unwrap()), 1.0);
        assert_eq!(undersupply_factor(0, Sell, 1.0), -1.0);
        assert_eq!(undersupply_factor(0, Buy, 1.0), 1.0);
        assert_eq!(undersupply_factor(3, Sell, 2.0), 1.0);
    }

    #[test]
    fn revenue_examples() {
        let c = cfg(2, 2, 1, 1.0, BetaTable::constant(1.0, 1).unwrap());
        assert_eq!(c.hourly_revenue(1, 1, &[50.0, 10.0], bid(20.0, 40.0)).unwrap(), 40.0);
        assert_eq!(c.hourly_revenue(0, 1, &[50.0, 60.0], bid(20.0, 40.0)).unwrap(), -110.0);
        assert_eq!(c.hourly_revenue(1, 1, &[50.0, 60.0], bid(0.0, 100.0)).unwrap(), 0.0);
    }

    #[test]
    fn beta_families() {
        assert_eq!(BetaTable::step(3).unwrap().values(), &[0.0, 1.0, 1.0, 1.0]);
        assert_eq!(BetaTable::linear(2).unwrap().values(), &[0.0, 0.5, 1.0]);
        let p = BetaTable::power(8, 6.0).unwrap();
        assert!((p.at(4) - 0.5f64.powf(1.0 / 6.0)).abs() < 1e-15);
        assert!(BetaTable::from_values(vec![0.5, 0.4]).is_err());
        assert!(BetaTable::from_values(vec![1.2]).is_err());
        assert!(BetaTable::power(4, 1.0).is_err());
    }

    #[test]
    fn grid_pairs_are_lexicographic() {
        let g = BidGrid::linear(15.0, 85.0, 30).unwrap();
        assert_eq!(g.num_pairs(), 465);
        assert_eq!(g.levels()[29], 85.0);
        for i in 1..g.num_pairs() {
            assert!(g.pair_levels(i - 1) < g.pair_levels(i));
        }
        assert_eq!(g.pair_levels(g.idle_pair()), (0, 29));
        assert_eq!(g.pair_index(3, 2), None);
        assert!(BidGrid::from_levels(vec![1.0, 1.0]).is_err());
    }

    #[test]
    fn state_transition_uses_previous_bid() {
        let c = MarketConfig::new(
            3,
            2,
            2,
            1,
            1.0,
            BidGrid::from_levels(vec![0.0, 100.0]).unwrap(),
            BetaTable::constant(1.0, 1).unwrap(),
        )
        .unwrap();
        let idle = c.grid.idle_pair();
        let s = State { resource: 1, lifetime: 1, prev_bid: idle, price_state: 0 };
        let next = state_transition(&c, &s, 0, &[50.0, 50.0, 50.0], 0);
        assert_eq!(next, State { resource: 1, lifetime: 1, prev_bid: 0, price_state: 0 });

        // (100, 100): charge at every settlement below 100
        let buy = c.grid.pair_index(1, 1).unwrap();
        let s = State { resource: 0, lifetime: 1, prev_bid: buy, price_state: 0 };
        let next = state_transition(&c, &s, idle, &[10.0, 20.0, 30.0], 0);
        assert_eq!(next.resource, 2.min(3));
        assert_eq!(next.prev_bid, idle);

        let prices = [120.0, 10.0, 50.0];
        let s = State { resource: 1, lifetime: 1, prev_bid: 0, price_state: 0 };
        let next = state_transition(&c, &s, idle, &prices, 0);
        let q = settlement_outcomes(&prices, c.grid.pair(0));
        let d = discharge_indicators(&prices, c.grid.pair(0));
        assert_eq!(next.resource, resource_transition(1, &q, 2).0);
        assert_eq!(next.lifetime, lifetime_transition(1, &d).0);
    }

    #[test]
    fn literal_penalty_discount_breaks_lifetime_monotonicity() {
        let mut c = cfg(1, 2, 2, 1.0, BetaTable::linear(2).unwrap());
        let b = bid(20.0, 40.0);
        let low_l = settle_hour(&c, 0, 1, &[50.0], b).revenue;
        let high_l = settle_hour(&c, 0, 2, &[50.0], b).revenue;
        assert_eq!(low_l, high_l);
        c.penalty_discounted = true;
        let low_l = settle_hour(&c, 0, 1, &[50.0], b).revenue;
        let high_l = settle_hour(&c, 0, 2, &[50.0], b).revenue;
        assert!(high_l < low_l);
    }

    /// Enumerates every (r, bid, P) on a tiny grid and checks that the m-step
    /// transitions are nondecreasing in (r, low, high).
    #[test]
    fn transitions_monotone_exhaustive() {
        let levels = [10.0, 20.0, 30.0];
        let prices_set = [5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0];
        let r_max = 3;
        let bids: Vec<BidPair> = (0..3)
            .flat_map(|lo| (lo..3).map(move |hi| bid(levels[lo], levels[hi])))
            .collect();
        let mut vectors = Vec::new();
        for &a in &prices_set {
            for &b in &prices_set {
                vectors.push([a, b]);
            }
        }
        for p in &vectors {
            for b1 in &bids {
                for b2 in &bids {
                    if !(b1.low <= b2.low && b1.high <= b2.high) {
                        continue;
                    }
                    let q1 = settlement_outcomes(p, *b1);
                    let q2 = settlement_outcomes(p, *b2);
                    for (x, y) in q1.iter().zip(&q2) {
                        assert!(x.value() >= y.value());
                    }
                    let d1 = discharge_indicators(p, *b1);
                    let d2 = discharge_indicators(p, *b2);
                    for (x, y) in d1.iter().zip(&d2) {
                        assert!(*x as u8 >= *y as u8);
                    }
                    for r1 in 0..=r_max {
                        for r2 in r1..=r_max {
                            let (_, t1) = resource_transition(r1, &q1, r_max);
                            let (_, t2) = resource_transition(r2, &q2, r_max);
                            assert!(t1.iter().zip(&t2).all(|(a, b)| a <= b));
                            let (_, l1) = lifetime_transition(r1, &d1);
                            let (_, l2) = lifetime_transition(r2, &d2);
                            assert!(l1.iter().zip(&l2).all(|(a, b)| a <= b));
                        }
                    }
                }
            }
        }
    }

    proptest! {
        #[test]
        fn trajectories_stay_in_bounds(
            r in 0u32..6, l in 0u32..6,
            prices in proptest::collection::vec(0.0f64..100.0, 1..12),
            lo in 0.0f64..100.0, width in 0.0f64..50.0,
        ) {
            let b = bid(lo, lo + width);
            let q = settlement_outcomes(&prices, b);
            prop_assert!(q.iter().all(|x| matches!(x, Buy | Idle | Sell)));
            let (_, rt) = resource_transition(r.min(5), &q, 5);
            prop_assert!(rt.iter().all(|&x| x <= 5));
            let (_, lt) = lifetime_transition(l, &discharge_indicators(&prices, b));
            prop_assert!(lt.windows(2).all(|w| w[1] <= w[0]));
            prop_assert!(lt.iter().all(|&x| x <= l));
        }

        #[test]
        fn frictionless_revenue_dominates(
            r in 0u32..4, l in 0u32..4, k in 0.0f64..3.0,
            prices in proptest::collection::vec(0.0f64..100.0, 3),
            lo in 0usize..5, hi in 0usize..5,
        ) {
            let (lo, hi) = (lo.min(hi), lo.max(hi));
            let free = cfg(3, 3, 3, 0.0, BetaTable::constant(1.0, 3).unwrap());
            let costly = cfg(3, 3, 3, k, BetaTable::power(3, 2.0).unwrap());
            let b = free.grid.pair(free.grid.pair_index(lo, hi).unwrap());
            let a = settle_hour(&free, r, l, &prices, b).revenue;
            let c = settle_hour(&costly, r, l, &prices, b).revenue;
            prop_assert!(a >= c - 1e-12);
        }
    }
}
