//! Spot price processes.
//!
//! A model produces the `M` settlement prices of hour `k`, the interval
//! `(k, k+1]`, given the model's finite state at the start of the hour.
//! Settlement `m` of hour `k` sits at time `k + m/M` for the seasonal
//! component.

use std::f64::consts::PI;
use std::fmt::Debug;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Generator used for every stochastic component.
pub type SimRng = ChaCha8Rng;

/// Default cap on the number of outcomes an hour may enumerate.
pub const DEFAULT_ENUMERATION_CAP: usize = 1_000_000;

/// Finite distribution on a strictly increasing support.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    support: Vec<f64>,
    probs: Vec<f64>,
    cdf: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(support: Vec<f64>, probs: Vec<f64>) -> Result<DiscreteDistribution> {
        if support.is_empty() || support.len() != probs.len() {
            return Err(Error::Domain(
                "distribution needs a nonempty support matching its probabilities".into(),
            ));
        }
        if support.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::Domain("support must be strictly increasing".into()));
        }
        if probs.iter().any(|p| !(*p >= 0.0)) {
            return Err(Error::Domain("probabilities must be nonnegative".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!(
                "probabilities sum to {total}, expected 1"
            )));
        }
        let cdf = cumulative(&probs);
        Ok(DiscreteDistribution {
            support,
            probs,
            cdf,
        })
    }

    /// Masses proportional to the normal density `N(mu, sigma^2)` at each support point.
    pub fn pseudonormal(support: Vec<f64>, mu: f64, sigma: f64) -> Result<DiscreteDistribution> {
        if !(sigma > 0.0) {
            return Err(Error::Domain(format!("sigma must be positive, got {sigma}")));
        }
        let weights: Vec<f64> = support
            .iter()
            .map(|x| (-(x - mu) * (x - mu) / (2.0 * sigma * sigma)).exp())
            .collect();
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Domain("pseudonormal weights underflow".into()));
        }
        DiscreteDistribution::new(support, weights.iter().map(|w| w / total).collect())
    }

    pub fn uniform(support: Vec<f64>) -> Result<DiscreteDistribution> {
        let n = support.len().max(1) as f64;
        let probs = vec![1.0 / n; support.len()];
        DiscreteDistribution::new(support, probs)
    }

    pub fn point(value: f64) -> DiscreteDistribution {
        DiscreteDistribution {
            support: vec![value],
            probs: vec![1.0],
            cdf: vec![1.0],
        }
    }

    pub fn support(&self) -> &[f64] {
        &self.support
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }

    pub fn mean(&self) -> f64 {
        self.support.iter().zip(&self.probs).map(|(x, p)| x * p).sum()
    }

    pub fn min(&self) -> f64 {
        self.support[0]
    }

    pub fn max(&self) -> f64 {
        self.support[self.support.len() - 1]
    }

    /// Inverse-CDF draw; consumes exactly one `f64` from the generator.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: f64 = rng.random();
        self.support[index_for(&self.cdf, u)]
    }
}

fn cumulative(probs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect()
}

fn index_for(cdf: &[f64], u: f64) -> usize {
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

/// Integer support `{lo, lo+1, ..., hi}`.
pub fn integer_support(lo: i64, hi: i64) -> Vec<f64> {
    (lo..=hi).map(|v| v as f64).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Trend {
    Sin,
    Cos,
}

impl Trend {
    pub fn eval(self, x: f64) -> f64 {
        match self {
            Trend::Sin => x.sin(),
            Trend::Cos => x.cos(),
        }
    }
}

/// Deterministic hour-of-day component `amplitude * f(2 pi t / period) + mean`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Seasonal {
    pub amplitude: f64,
    pub mean: f64,
    pub period: f64,
    pub trend: Trend,
}

impl Seasonal {
    pub fn at(&self, t: f64) -> f64 {
        self.amplitude * self.trend.eval(2.0 * PI * t / self.period) + self.mean
    }
}

/// `15 sin(2 pi t / 24) + 50`.
pub fn seasonal_v1(t: f64) -> f64 {
    Seasonal {
        amplitude: 15.0,
        mean: 50.0,
        period: 24.0,
        trend: Trend::Sin,
    }
    .at(t)
}

/// Probability of entering the spike regime at hour `t`.
pub fn spike_probability(t: f64, trend: Trend, alpha_p: f64) -> f64 {
    alpha_p * (trend.eval(2.0 * PI * t / 12.0) + 1.0) / 2.0
}

/// One enumerated outcome of an hour.
#[derive(Debug, Clone, PartialEq)]
pub struct HourOutcome {
    pub prices: Vec<f64>,
    pub prob: f64,
    pub next_state: usize,
}

/// Per-episode randomness fixed at the start of a path (the replayed day).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Episode {
    pub day: Option<usize>,
}

pub trait PriceModel: Debug + Send + Sync {
    fn settlements_per_hour(&self) -> usize;

    /// Number of price-model states; 1 when the model is stateless.
    fn num_states(&self) -> usize;

    fn initial_state(&self) -> usize {
        0
    }

    /// Number of hours the model can produce, if limited.
    fn hours(&self) -> Option<usize> {
        None
    }

    fn can_enumerate(&self) -> bool;

    /// Every outcome of hour `hour` from state `ps` with its probability.
    fn enumerate_hour(&self, hour: usize, ps: usize) -> Result<Vec<HourOutcome>>;

    fn start_episode(&self, rng: &mut SimRng) -> Episode {
        let _ = rng;
        Episode::default()
    }

    /// Writes the prices of hour `hour` into `out` and returns the next state.
    fn sample_hour(
        &self,
        hour: usize,
        ps: usize,
        episode: &Episode,
        rng: &mut SimRng,
        out: &mut Vec<f64>,
    ) -> usize;

    /// Upper bound on every price the model can emit.
    fn max_price(&self) -> f64;

    /// Training paths for models built from data.
    fn empirical_paths(&self) -> Option<&[Vec<f64>]> {
        None
    }
}

fn enumeration_size(support: usize, m: usize, branches: usize) -> u128 {
    (support as u128)
        .checked_pow(m as u32)
        .unwrap_or(u128::MAX)
        .saturating_mul(branches as u128)
}

fn capacity_error(needed: u128, cap: usize) -> Error {
    Error::Capacity {
        what: "hour enumeration",
        needed,
        cap: cap as u128,
        hint: "use SAA or single-sample observations instead of exact expectations",
    }
}

/// Cartesian product of `m` independent noise draws added to `base`.
fn enumerate_noise(
    base: &[f64],
    noise: &DiscreteDistribution,
    weight: f64,
    next_state: usize,
    bound: f64,
    out: &mut Vec<HourOutcome>,
) {
    let m = base.len();
    let k = noise.len();
    let mut idx = vec![0usize; m];
    loop {
        let mut prob = weight;
        let mut prices = Vec::with_capacity(m);
        for (j, &i) in idx.iter().enumerate() {
            prob *= noise.probs()[i];
            prices.push((base[j] + noise.support()[i]).clamp(0.0, bound));
        }
        if prob > 0.0 {
            out.push(HourOutcome {
                prices,
                prob,
                next_state,
            });
        }
        let mut j = m;
        loop {
            if j == 0 {
                return;
            }
            j -= 1;
            idx[j] += 1;
            if idx[j] < k {
                break;
            }
            idx[j] = 0;
        }
    }
}

/// Seasonal component plus i.i.d. noise (no price state).
#[derive(Debug, Clone, PartialEq)]
pub struct SeasonalNoise {
    pub seasonal: Seasonal,
    pub noise: DiscreteDistribution,
    pub settlements_per_hour: usize,
    pub price_bound: f64,
    pub enumeration_cap: usize,
}

impl SeasonalNoise {
    pub fn new(seasonal: Seasonal, noise: DiscreteDistribution, m: usize) -> Result<SeasonalNoise> {
        if m == 0 {
            return Err(Error::Config("settlements per hour must be >= 1".into()));
        }
        Ok(SeasonalNoise {
            seasonal,
            noise,
            settlements_per_hour: m,
            price_bound: crate::market::DEFAULT_PRICE_BOUND,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        })
    }

    /// `15 sin(2 pi t/24) + 50` with pseudonormal noise on `{-20..20}`, `sigma^2 = 49`.
    pub fn variation1(m: usize) -> Result<SeasonalNoise> {
        SeasonalNoise::new(
            Seasonal {
                amplitude: 15.0,
                mean: 50.0,
                period: 24.0,
                trend: Trend::Sin,
            },
            DiscreteDistribution::pseudonormal(integer_support(-20, 20), 0.0, 7.0)?,
            m,
        )
    }

    fn base(&self, hour: usize) -> Vec<f64> {
        let m = self.settlements_per_hour;
        (0..m)
            .map(|j| self.seasonal.at(hour as f64 + j as f64 / m as f64))
            .collect()
    }
}

impl PriceModel for SeasonalNoise {
    fn settlements_per_hour(&self) -> usize {
        self.settlements_per_hour
    }

    fn num_states(&self) -> usize {
        1
    }

    fn can_enumerate(&self) -> bool {
        true
    }

    fn enumerate_hour(&self, hour: usize, _ps: usize) -> Result<Vec<HourOutcome>> {
        let needed = enumeration_size(self.noise.len(), self.settlements_per_hour, 1);
        if needed > self.enumeration_cap as u128 {
            return Err(capacity_error(needed, self.enumeration_cap));
        }
        let mut out = Vec::with_capacity(needed as usize);
        enumerate_noise(&self.base(hour), &self.noise, 1.0, 0, self.price_bound, &mut out);
        Ok(out)
    }

    fn sample_hour(
        &self,
        hour: usize,
        _ps: usize,
        _episode: &Episode,
        rng: &mut SimRng,
        out: &mut Vec<f64>,
    ) -> usize {
        out.clear();
        let m = self.settlements_per_hour;
        for j in 0..m {
            let s = self.seasonal.at(hour as f64 + j as f64 / m as f64);
            out.push((s + self.noise.sample(rng)).clamp(0.0, self.price_bound));
        }
        0
    }

    fn max_price(&self) -> f64 {
        (self.seasonal.mean + self.seasonal.amplitude.abs() + self.noise.max())
            .clamp(0.0, self.price_bound)
    }
}

/// Two-regime Markov switching model; state 0 is normal, 1 is spike.
///
/// At the start of hour `k` the regime moves from `X_k` to `X_{k+1}` (enter
/// the spike regime with `p(k)`, leave it with `alpha_q`), and the hour's
/// prices use the noise of the new regime.
#[derive(Debug, Clone, PartialEq)]
pub struct RegimeSwitching {
    pub seasonal: Seasonal,
    pub alpha_p: f64,
    pub alpha_q: f64,
    pub normal: DiscreteDistribution,
    pub spike: DiscreteDistribution,
    pub settlements_per_hour: usize,
    pub price_bound: f64,
    pub enumeration_cap: usize,
}

impl RegimeSwitching {
    pub fn new(
        trend: Trend,
        alpha_p: f64,
        alpha_q: f64,
        m: usize,
    ) -> Result<RegimeSwitching> {
        let support = integer_support(-10, 40);
        RegimeSwitching::with_noise(
            trend,
            alpha_p,
            alpha_q,
            DiscreteDistribution::pseudonormal(support.clone(), 0.0, 7.0)?,
            DiscreteDistribution::pseudonormal(support, 15.0, 20.0)?,
            m,
        )
    }

    pub fn with_noise(
        trend: Trend,
        alpha_p: f64,
        alpha_q: f64,
        normal: DiscreteDistribution,
        spike: DiscreteDistribution,
        m: usize,
    ) -> Result<RegimeSwitching> {
        if !(0.0..=1.0).contains(&alpha_p) || !(0.0..=1.0).contains(&alpha_q) {
            return Err(Error::Domain("alpha_p and alpha_q must lie in [0, 1]".into()));
        }
        if m == 0 {
            return Err(Error::Config("settlements per hour must be >= 1".into()));
        }
        Ok(RegimeSwitching {
            seasonal: Seasonal {
                amplitude: 15.0,
                mean: 50.0,
                period: 12.0,
                trend,
            },
            alpha_p,
            alpha_q,
            normal,
            spike,
            settlements_per_hour: m,
            price_bound: crate::market::DEFAULT_PRICE_BOUND,
            enumeration_cap: DEFAULT_ENUMERATION_CAP,
        })
    }

    /// Row `regime` of the transition matrix at hour `hour`: `[P(->0), P(->1)]`.
    pub fn transition_row(&self, hour: usize, regime: usize) -> [f64; 2] {
        if regime == 0 {
            let p = spike_probability(hour as f64, self.seasonal.trend, self.alpha_p);
            [1.0 - p, p]
        } else {
            [self.alpha_q, 1.0 - self.alpha_q]
        }
    }

    fn noise(&self, regime: usize) -> &DiscreteDistribution {
        if regime == 0 {
            &self.normal
        } else {
            &self.spike
        }
    }

    fn base(&self, hour: usize) -> Vec<f64> {
        let m = self.settlements_per_hour;
        (0..m)
            .map(|j| self.seasonal.at(hour as f64 + j as f64 / m as f64))
            .collect()
    }
}

impl PriceModel for RegimeSwitching {
    fn settlements_per_hour(&self) -> usize {
        self.settlements_per_hour
    }

    fn num_states(&self) -> usize {
        2
    }

    fn can_enumerate(&self) -> bool {
        true
    }

    fn enumerate_hour(&self, hour: usize, ps: usize) -> Result<Vec<HourOutcome>> {
        let width = self.normal.len().max(self.spike.len());
        let needed = enumeration_size(width, self.settlements_per_hour, 2);
        if needed > self.enumeration_cap as u128 {
            return Err(capacity_error(needed, self.enumeration_cap));
        }
        let base = self.base(hour);
        let row = self.transition_row(hour, ps);
        let mut out = Vec::new();
        for (next, &w) in row.iter().enumerate() {
            if w > 0.0 {
                enumerate_noise(&base, self.noise(next), w, next, self.price_bound, &mut out);
            }
        }
        Ok(out)
    }

    fn sample_hour(
        &self,
        hour: usize,
        ps: usize,
        _episode: &Episode,
        rng: &mut SimRng,
        out: &mut Vec<f64>,
    ) -> usize {
        let row = self.transition_row(hour, ps);
        let u: f64 = rng.random();
        let next = if u < row[0] { 0 } else { 1 };
        out.clear();
        let m = self.settlements_per_hour;
        let noise = self.noise(next);
        for j in 0..m {
            let s = self.seasonal.at(hour as f64 + j as f64 / m as f64);
            out.push((s + noise.sample(rng)).clamp(0.0, self.price_bound));
        }
        next
    }

    fn max_price(&self) -> f64 {
        (self.seasonal.mean + self.seasonal.amplitude.abs() + self.normal.max().max(self.spike.max()))
            .clamp(0.0, self.price_bound)
    }
}

/// Replays whole historical days; a day is drawn uniformly per episode.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoricalReplay {
    days: Vec<Vec<f64>>,
    settlements_per_hour: usize,
    max_price: f64,
}

impl HistoricalReplay {
    pub fn new(days: Vec<Vec<f64>>, m: usize) -> Result<HistoricalReplay> {
        if days.is_empty() {
            return Err(Error::Data("historical replay needs at least one day".into()));
        }
        if m == 0 {
            return Err(Error::Config("settlements per hour must be >= 1".into()));
        }
        let expected = 24 * m;
        let bad: Vec<(usize, String)> = days
            .iter()
            .enumerate()
            .filter(|(_, d)| d.len() != expected)
            .map(|(i, d)| (i, format!("day has {} prices, expected {expected}", d.len())))
            .collect();
        if !bad.is_empty() {
            return Err(Error::Ingestion {
                path: "<day paths>".into(),
                lines: bad,
            });
        }
        if days.iter().flatten().any(|p| !(*p >= 0.0) || !p.is_finite()) {
            return Err(Error::Data("replayed prices must be finite and nonnegative".into()));
        }
        let max_price = days.iter().flatten().cloned().fold(0.0, f64::max);
        Ok(HistoricalReplay {
            days,
            settlements_per_hour: m,
            max_price,
        })
    }

    pub fn days(&self) -> &[Vec<f64>] {
        &self.days
    }

    pub fn hour_slice(&self, day: usize, hour: usize) -> &[f64] {
        let m = self.settlements_per_hour;
        &self.days[day][hour * m..(hour + 1) * m]
    }
}

impl PriceModel for HistoricalReplay {
    fn settlements_per_hour(&self) -> usize {
        self.settlements_per_hour
    }

    fn num_states(&self) -> usize {
        1
    }

    fn hours(&self) -> Option<usize> {
        Some(24)
    }

    fn can_enumerate(&self) -> bool {
        false
    }

    fn enumerate_hour(&self, _hour: usize, _ps: usize) -> Result<Vec<HourOutcome>> {
        Err(Error::Capability(
            "historical replay cannot enumerate price outcomes".into(),
        ))
    }

    fn start_episode(&self, rng: &mut SimRng) -> Episode {
        Episode {
            day: Some(rng.random_range(0..self.days.len())),
        }
    }

    fn sample_hour(
        &self,
        hour: usize,
        _ps: usize,
        episode: &Episode,
        _rng: &mut SimRng,
        out: &mut Vec<f64>,
    ) -> usize {
        let day = episode.day.expect("replay episodes carry a day");
        out.clear();
        out.extend_from_slice(self.hour_slice(day, hour));
        0
    }

    fn max_price(&self) -> f64 {
        self.max_price
    }

    fn empirical_paths(&self) -> Option<&[Vec<f64>]> {
        Some(&self.days)
    }
}
