//! Empirical policy values from simulated or replayed price paths.

use std::io::Write;

use rand::SeedableRng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::Policy;
use crate::error::{Error, Result};
use crate::lattice::StateSpace;
use crate::market::{settle_hour, MarketConfig, State, TerminalContribution};
use crate::price::{Episode, PriceModel, SimRng};

/// Reported quantiles of daily revenue.
pub const DAILY_QUANTILES: [f64; 3] = [0.05, 0.5, 0.95];

/// Which price paths to evaluate on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Paths {
    /// `n` paths drawn from the model, path `i` on stream `i` of the seed.
    Sampled(usize),
    /// Each day of a replay model once, in order.
    EachDay,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathResult {
    pub path: usize,
    /// Replayed day, if any.
    pub day: Option<usize>,
    /// Realized revenue over the settled hours `1..=T`.
    pub revenue: f64,
    /// Terminal contribution of `S_T`.
    pub terminal: f64,
    pub final_resource: u32,
    pub final_lifetime: u32,
}

impl PathResult {
    pub fn value(&self) -> f64 {
        self.revenue + self.terminal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub policy: String,
    pub seed: u64,
    pub horizon: usize,
    /// Mean of revenue plus terminal contribution.
    pub mean_value: f64,
    pub mean_revenue: f64,
    pub std_error: f64,
    /// Daily revenue at the levels of [`DAILY_QUANTILES`].
    pub revenue_quantiles: Vec<f64>,
    /// Share of settled hours ending at each storage level `0..=R_max`.
    pub storage_histogram: Vec<f64>,
    /// Mean storage level at the end of hours `1..=T`.
    pub hourly_mean_storage: Vec<f64>,
    pub paths: Vec<PathResult>,
}

/// Linear interpolation between order statistics of a sorted sample.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty sample");
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + w * (sorted[hi] - sorted[lo])
    }
}

struct Simulated {
    result: PathResult,
    levels: Vec<u32>,
}

/// Runs `policy` from `R_0 = 0`, `L_0 = L_max` and an idle previous bid. The
/// first hour `(0, 1]` has no active bid and is not settled; each bid `b_t`
/// then settles hour `t + 1`.
pub fn evaluate(
    policy: &dyn Policy,
    cfg: &MarketConfig,
    model: &dyn PriceModel,
    paths: Paths,
    seed: u64,
) -> Result<EvaluationReport> {
    cfg.validate()?;
    if model.settlements_per_hour() != cfg.settlements_per_hour {
        return Err(Error::Config(format!(
            "price model has {} settlements per hour, the market {}",
            model.settlements_per_hour(),
            cfg.settlements_per_hour
        )));
    }
    let horizon = cfg.horizon;
    if let Some(h) = model.hours() {
        if h < horizon + 1 {
            return Err(Error::Data(format!(
                "price paths cover {h} hours, the horizon needs {}",
                horizon + 1
            )));
        }
    }
    let n = match paths {
        Paths::Sampled(n) => n,
        Paths::EachDay => model
            .empirical_paths()
            .ok_or_else(|| Error::Capability("only replay models can be evaluated day by day".into()))?
            .len(),
    };
    if n == 0 {
        return Err(Error::Config("evaluation needs at least one path".into()));
    }
    let space = match cfg.terminal {
        TerminalContribution::Table(_) => Some(StateSpace::new(cfg, model.num_states())),
        _ => None,
    };
    let terminal = |s: &State| match &cfg.terminal {
        TerminalContribution::Zero => 0.0,
        TerminalContribution::PerUnit(v) => v * s.resource as f64,
        TerminalContribution::Table(values) => {
            values[space.as_ref().expect("built for tables").pre_index(s)]
        }
    };
    let num_pairs = cfg.grid.num_pairs();
    let sims: Vec<Simulated> = (0..n)
        .into_par_iter()
        .map(|path| {
            let mut rng = SimRng::seed_from_u64(seed);
            rng.set_stream(path as u64);
            let ep = match paths {
                Paths::Sampled(_) => model.start_episode(&mut rng),
                Paths::EachDay => Episode { day: Some(path) },
            };
            let mut prices = Vec::with_capacity(cfg.settlements_per_hour);
            let mut s = State {
                resource: 0,
                lifetime: cfg.l_max,
                prev_bid: cfg.grid.idle_pair(),
                price_state: model.initial_state(),
            };
            let mut revenue = 0.0;
            let mut levels = Vec::with_capacity(horizon);
            for t in 0..horizon {
                let bid = policy.decide(t, &s);
                if bid >= num_pairs {
                    return Err(Error::Domain(format!(
                        "policy {} chose bid {bid} outside the grid",
                        policy.name()
                    )));
                }
                let ps = model.sample_hour(t, s.price_state, &ep, &mut rng, &mut prices);
                let (r, l) = if t == 0 {
                    (s.resource, s.lifetime)
                } else {
                    let h = settle_hour(cfg, s.resource, s.lifetime, &prices, cfg.grid.pair(s.prev_bid));
                    revenue += h.revenue;
                    levels.push(h.resource);
                    (h.resource, h.lifetime)
                };
                s = State {
                    resource: r,
                    lifetime: l,
                    prev_bid: bid,
                    price_state: ps,
                };
            }
            let term = terminal(&s);
            model.sample_hour(horizon, s.price_state, &ep, &mut rng, &mut prices);
            let h = settle_hour(cfg, s.resource, s.lifetime, &prices, cfg.grid.pair(s.prev_bid));
            revenue += h.revenue;
            levels.push(h.resource);
            Ok(Simulated {
                result: PathResult {
                    path,
                    day: ep.day,
                    revenue,
                    terminal: term,
                    final_resource: h.resource,
                    final_lifetime: h.lifetime,
                },
                levels,
            })
        })
        .collect::<Result<_>>()?;

    let nf = n as f64;
    let values: Vec<f64> = sims.iter().map(|s| s.result.value()).collect();
    let mean_value = values.iter().sum::<f64>() / nf;
    let mean_revenue = sims.iter().map(|s| s.result.revenue).sum::<f64>() / nf;
    let std_error = if n > 1 {
        let var = values.iter().map(|v| (v - mean_value) * (v - mean_value)).sum::<f64>() / (nf - 1.0);
        (var / nf).sqrt()
    } else {
        0.0
    };
    let mut sorted: Vec<f64> = sims.iter().map(|s| s.result.revenue).collect();
    sorted.sort_by(f64::total_cmp);
    let revenue_quantiles = DAILY_QUANTILES.iter().map(|&q| quantile(&sorted, q)).collect();

    let mut counts = vec![0u64; cfg.r_max as usize + 1];
    let mut hourly = vec![0u64; horizon];
    for s in &sims {
        for (k, &r) in s.levels.iter().enumerate() {
            counts[r as usize] += 1;
            hourly[k] += r as u64;
        }
    }
    let total: u64 = counts.iter().sum();
    Ok(EvaluationReport {
        policy: policy.name(),
        seed,
        horizon,
        mean_value,
        mean_revenue,
        std_error,
        revenue_quantiles,
        storage_histogram: counts.iter().map(|&c| c as f64 / total as f64).collect(),
        hourly_mean_storage: hourly.iter().map(|&h| h as f64 / nf).collect(),
        paths: sims.into_iter().map(|s| s.result).collect(),
    })
}

impl EvaluationReport {
    pub fn write_json<W: Write>(&self, w: W) -> Result<()> {
        serde_json::to_writer_pretty(w, self)?;
        Ok(())
    }

    /// Columns `path,day,revenue,terminal,final_resource,final_lifetime`.
    pub fn write_paths_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["path", "day", "revenue", "terminal", "final_resource", "final_lifetime"])?;
        for p in &self.paths {
            out.write_record([
                p.path.to_string(),
                p.day.map(|d| d.to_string()).unwrap_or_default(),
                p.revenue.to_string(),
                p.terminal.to_string(),
                p.final_resource.to_string(),
                p.final_lifetime.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Columns `resource,mass`.
    pub fn write_histogram_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["resource", "mass"])?;
        for (r, m) in self.storage_histogram.iter().enumerate() {
            out.write_record([r.to_string(), m.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }

    /// Columns `hour,mean_resource`.
    pub fn write_hourly_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["hour", "mean_resource"])?;
        for (k, m) in self.hourly_mean_storage.iter().enumerate() {
            out.write_record([(k + 1).to_string(), m.to_string()])?;
        }
        out.flush()?;
        Ok(())
    }
}
