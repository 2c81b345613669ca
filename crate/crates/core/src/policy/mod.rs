//! Bidding policies: greedy decisions from value tables, the exact optimum and
//! rule-based baselines built from historical hourly price statistics.

mod evaluate;

pub use evaluate::{
    evaluate, quantile, EvaluationReport, PathResult, Paths, DAILY_QUANTILES,
};

use rand::SeedableRng;

use crate::adp::best_post_bid;
use crate::dynamics::Dynamics;
use crate::error::{Error, Result};
use crate::exact::{greedy_bid, ExactSolution};
use crate::lattice::Layout;
use crate::market::{settle_hour, BidGrid, MarketConfig, State};
use crate::price::{PriceModel, SimRng};
use crate::table::ValueTable;

/// A decision rule mapping `(t, S_t)` to a pair index on the bid grid.
pub trait Policy: Send + Sync {
    fn name(&self) -> String;

    /// Bid placed at time `t` for the hour `(t + 1, t + 2]`.
    fn decide(&self, t: usize, s: &State) -> usize;
}

/// Always bids `(b_min, b_max)`.
#[derive(Debug, Clone)]
pub struct Idle {
    pair: usize,
}

impl Idle {
    pub fn new(grid: &BidGrid) -> Idle {
        Idle {
            pair: grid.idle_pair(),
        }
    }
}

impl Policy for Idle {
    fn name(&self) -> String {
        "idle".into()
    }

    fn decide(&self, _t: usize, _s: &State) -> usize {
        self.pair
    }
}

/// Greedy with respect to a pre-decision table, using exact expectations.
#[derive(Debug)]
pub struct GreedyPre<'a> {
    d: &'a Dynamics,
    table: &'a ValueTable,
}

impl<'a> GreedyPre<'a> {
    pub fn new(d: &'a Dynamics, table: &'a ValueTable) -> Result<GreedyPre<'a>> {
        d.require_enumerable("a greedy policy from a pre-decision table")?;
        if table.layout() != Layout::Pre {
            return Err(Error::Config("expected a pre-decision table".into()));
        }
        table.check_compatible(d)?;
        d.prepare_exact()?;
        Ok(GreedyPre { d, table })
    }
}

impl Policy for GreedyPre<'_> {
    fn name(&self) -> String {
        "adp-pre".into()
    }

    fn decide(&self, t: usize, s: &State) -> usize {
        let pre = self.d.space().pre_index(s);
        greedy_bid(self.d, t, pre, self.table.period(t + 1)).0
    }
}

/// `argmax_b [C(s, b) + V^b_t(s, b)]` over a post-decision table.
#[derive(Debug)]
pub struct GreedyPost<'a> {
    d: &'a Dynamics,
    table: &'a ValueTable,
}

impl<'a> GreedyPost<'a> {
    pub fn new(d: &'a Dynamics, table: &'a ValueTable) -> Result<GreedyPost<'a>> {
        if table.layout() != Layout::Post {
            return Err(Error::Config("expected a post-decision table".into()));
        }
        table.check_compatible(d)?;
        Ok(GreedyPost { d, table })
    }
}

impl Policy for GreedyPost<'_> {
    fn name(&self) -> String {
        "adp-post".into()
    }

    fn decide(&self, t: usize, s: &State) -> usize {
        let pre = self.d.space().pre_index(s);
        best_post_bid(self.d, t, pre, self.table.period(t)).0
    }
}

/// Decisions of an exact solution.
#[derive(Debug)]
pub struct Optimal<'a> {
    d: &'a Dynamics,
    solution: &'a ExactSolution,
}

impl<'a> Optimal<'a> {
    pub fn new(d: &'a Dynamics, solution: &'a ExactSolution) -> Optimal<'a> {
        Optimal { d, solution }
    }
}

impl Policy for Optimal<'_> {
    fn name(&self) -> String {
        "optimal".into()
    }

    fn decide(&self, t: usize, s: &State) -> usize {
        self.solution.decision(t, self.d.space().pre_index(s))
    }
}

/// Price statistics per hour of day from training paths, plus the paths
/// themselves for resource forecasts.
#[derive(Debug, Clone, PartialEq)]
pub struct HourlyPriceStats {
    settlements_per_hour: usize,
    means: Vec<f64>,
    /// Sorted prices per hour.
    sorted: Vec<Vec<f64>>,
    days: Vec<Vec<f64>>,
}

impl HourlyPriceStats {
    /// `days` are whole price paths of equal length, `M` prices per hour.
    pub fn from_days(days: Vec<Vec<f64>>, m: usize) -> Result<HourlyPriceStats> {
        if days.is_empty() {
            return Err(Error::Data("price statistics need at least one path".into()));
        }
        if m == 0 {
            return Err(Error::Config("settlements per hour must be >= 1".into()));
        }
        let len = days[0].len();
        if len == 0 || len % m != 0 || days.iter().any(|d| d.len() != len) {
            return Err(Error::Data(format!(
                "training paths must share a length divisible by {m}"
            )));
        }
        let hours = len / m;
        let mut sorted = vec![Vec::with_capacity(days.len() * m); hours];
        for d in &days {
            for (h, chunk) in d.chunks(m).enumerate() {
                sorted[h].extend_from_slice(chunk);
            }
        }
        for s in &mut sorted {
            s.sort_by(f64::total_cmp);
        }
        let means = sorted.iter().map(|s| s.iter().sum::<f64>() / s.len() as f64).collect();
        Ok(HourlyPriceStats {
            settlements_per_hour: m,
            means,
            sorted,
            days,
        })
    }

    /// Training paths drawn from `model`; replay models contribute their days.
    pub fn from_model(model: &dyn PriceModel, hours: usize, n_days: usize, seed: u64) -> Result<HourlyPriceStats> {
        let m = model.settlements_per_hour();
        if let Some(days) = model.empirical_paths() {
            return HourlyPriceStats::from_days(days.to_vec(), m);
        }
        if n_days == 0 {
            return Err(Error::Config("need at least one training path".into()));
        }
        let mut rng = SimRng::seed_from_u64(seed);
        let mut prices = Vec::with_capacity(m);
        let days = (0..n_days)
            .map(|_| {
                let ep = model.start_episode(&mut rng);
                let mut ps = model.initial_state();
                let mut day = Vec::with_capacity(hours * m);
                for h in 0..hours {
                    ps = model.sample_hour(h, ps, &ep, &mut rng, &mut prices);
                    day.extend_from_slice(&prices);
                }
                day
            })
            .collect();
        HourlyPriceStats::from_days(days, m)
    }

    pub fn hours(&self) -> usize {
        self.means.len()
    }

    pub fn mean(&self, hour: usize) -> f64 {
        self.means[hour]
    }

    /// Empirical `q`-quantile of the prices in `hour`.
    pub fn quantile(&self, hour: usize, q: f64) -> f64 {
        quantile(&self.sorted[hour], q)
    }

    /// Average of `R` after settling hour `hour` from `s` over the training paths.
    pub fn forecast_resource(&self, cfg: &MarketConfig, hour: usize, s: &State) -> f64 {
        let m = self.settlements_per_hour;
        let bid = cfg.grid.pair(s.prev_bid);
        let total: u64 = self
            .days
            .iter()
            .map(|d| {
                let prices = &d[hour * m..(hour + 1) * m];
                settle_hour(cfg, s.resource, s.lifetime, prices, bid).resource as u64
            })
            .sum();
        total as f64 / self.days.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Designation {
    Buy,
    Sell,
    Idle,
}

/// Parameters of the rule-based baselines.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rule {
    /// Buy in the six cheapest hours of `1..=h_star`, sell in the six dearest
    /// after it.
    A { h_star: usize },
    /// Buy in the `k_star` cheapest hours of the day and sell in the `k_star`
    /// dearest, idling when the forecast level is past a threshold.
    B { k_star: usize, full: f64, empty: f64 },
    /// Bid at the hourly `alpha` and `1 - alpha` price quantiles.
    C { alpha: f64, full: f64, empty: f64 },
}

impl Rule {
    pub fn default_a() -> Rule {
        Rule::A { h_star: 12 }
    }

    /// `k* = 10` with thresholds at 5/6 and 1/6 of capacity.
    pub fn default_b(r_max: u32) -> Rule {
        let (full, empty) = default_thresholds(r_max);
        Rule::B { k_star: 10, full, empty }
    }

    /// `alpha = 0.1` with thresholds at 5/6 and 1/6 of capacity.
    pub fn default_c(r_max: u32) -> Rule {
        let (full, empty) = default_thresholds(r_max);
        Rule::C { alpha: 0.1, full, empty }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Rule::A { .. } => "rule-a",
            Rule::B { .. } => "rule-b",
            Rule::C { .. } => "rule-c",
        }
    }
}

/// Nearly-full and nearly-empty levels: 60 and 12 of a 72-unit device.
pub fn default_thresholds(r_max: u32) -> (f64, f64) {
    (r_max as f64 * 5.0 / 6.0, r_max as f64 / 6.0)
}

#[derive(Debug, Clone)]
enum Plan {
    Designated(Vec<Designation>),
    Quantiles(Vec<(usize, usize)>),
}

#[derive(Debug, Clone)]
pub struct RulePolicy {
    rule: Rule,
    cfg: MarketConfig,
    stats: HourlyPriceStats,
    plan: Plan,
    buy: usize,
    sell: usize,
    idle: usize,
}

impl RulePolicy {
    pub fn new(rule: Rule, cfg: &MarketConfig, stats: HourlyPriceStats) -> Result<RulePolicy> {
        let hours = stats.hours();
        if stats.settlements_per_hour != cfg.settlements_per_hour {
            return Err(Error::Config(format!(
                "price statistics use {} settlements per hour, the market {}",
                stats.settlements_per_hour, cfg.settlements_per_hour
            )));
        }
        if hours < cfg.horizon + 1 {
            return Err(Error::Data(format!(
                "training paths cover {hours} hours, the horizon needs {}",
                cfg.horizon + 1
            )));
        }
        let grid = &cfg.grid;
        let top = grid.num_levels() - 1;
        let by_mean = |range: std::ops::Range<usize>| {
            let mut hs: Vec<usize> = range.collect();
            hs.sort_by(|&a, &b| stats.mean(a).total_cmp(&stats.mean(b)).then(a.cmp(&b)));
            hs
        };
        let plan = match rule {
            Rule::A { h_star } => {
                if h_star <= 6 || h_star >= hours {
                    return Err(Error::Config(format!(
                        "rule A needs 6 < h* < {hours}, got {h_star}"
                    )));
                }
                let mut d = vec![Designation::Idle; hours];
                for &h in by_mean(1..h_star + 1).iter().take(6) {
                    d[h] = Designation::Buy;
                }
                for &h in by_mean(h_star + 1..hours).iter().rev().take(6) {
                    d[h] = Designation::Sell;
                }
                Plan::Designated(d)
            }
            Rule::B { k_star, full, empty } => {
                if k_star == 0 || 2 * k_star > hours {
                    return Err(Error::Config(format!(
                        "rule B needs 1 <= k* <= {}, got {k_star}",
                        hours / 2
                    )));
                }
                check_thresholds(full, empty)?;
                let order = by_mean(0..hours);
                let mut d = vec![Designation::Idle; hours];
                for &h in &order[..k_star] {
                    d[h] = Designation::Buy;
                }
                for &h in &order[hours - k_star..] {
                    d[h] = Designation::Sell;
                }
                Plan::Designated(d)
            }
            Rule::C { alpha, full, empty } => {
                if !(alpha > 0.0 && alpha < 0.5) {
                    return Err(Error::Config(format!("rule C needs 0 < alpha < 0.5, got {alpha}")));
                }
                check_thresholds(full, empty)?;
                Plan::Quantiles(
                    (0..hours)
                        .map(|h| {
                            let lo = grid.nearest_level(stats.quantile(h, alpha));
                            let hi = grid.nearest_level(stats.quantile(h, 1.0 - alpha));
                            (lo, hi.max(lo))
                        })
                        .collect(),
                )
            }
        };
        let pair = |lo, hi| grid.pair_index(lo, hi).expect("ordered levels form a pair");
        Ok(RulePolicy {
            rule,
            cfg: cfg.clone(),
            plan,
            buy: pair(top, top),
            sell: pair(0, 0),
            idle: grid.idle_pair(),
            stats,
        })
    }

    pub fn rule(&self) -> Rule {
        self.rule
    }

    pub fn stats(&self) -> &HourlyPriceStats {
        &self.stats
    }

    fn designation(&self, hour: usize) -> Designation {
        match &self.plan {
            Plan::Designated(d) => d[hour],
            Plan::Quantiles(_) => Designation::Idle,
        }
    }
}

fn check_thresholds(full: f64, empty: f64) -> Result<()> {
    if !(empty >= 0.0 && empty <= full) {
        return Err(Error::Config(format!(
            "thresholds need 0 <= empty <= full, got empty {empty}, full {full}"
        )));
    }
    Ok(())
}

impl Policy for RulePolicy {
    fn name(&self) -> String {
        self.rule.name().into()
    }

    fn decide(&self, t: usize, s: &State) -> usize {
        let hour = t + 1;
        let grid = &self.cfg.grid;
        let (full, empty) = match self.rule {
            Rule::A { .. } => {
                return match self.designation(hour) {
                    Designation::Buy => self.buy,
                    Designation::Sell => self.sell,
                    Designation::Idle => self.idle,
                }
            }
            Rule::B { full, empty, .. } | Rule::C { full, empty, .. } => (full, empty),
        };
        let forecast = self.stats.forecast_resource(&self.cfg, t, s);
        let sellable = ((self.cfg.horizon - t) * self.cfg.settlements_per_hour) as f64;
        if forecast > sellable {
            return self.sell;
        }
        match &self.plan {
            Plan::Designated(_) => match self.designation(hour) {
                Designation::Buy if forecast <= full => self.buy,
                Designation::Sell if forecast >= empty => self.sell,
                _ => self.idle,
            },
            Plan::Quantiles(q) => {
                let (lo, hi) = q[hour];
                let top = grid.num_levels() - 1;
                let (lo, hi) = if forecast > full {
                    (0, hi)
                } else if forecast < empty {
                    (lo, top)
                } else {
                    (lo, hi)
                };
                grid.pair_index(lo, hi).expect("ordered levels form a pair")
            }
        }
    }
}
