//! Ready-made problem instances: the stylized benchmark families and small
//! versions of them that solve exactly in seconds.

use std::sync::Arc;

use crate::dynamics::Dynamics;
use crate::error::{Error, Result};
use crate::market::{BetaTable, BidGrid, MarketConfig};
use crate::price::{
    integer_support, DiscreteDistribution, PriceModel, RegimeSwitching, Seasonal, SeasonalNoise,
    Trend,
};

fn seasonal(period: f64, trend: Trend) -> Seasonal {
    Seasonal {
        amplitude: 15.0,
        mean: 50.0,
        period,
        trend,
    }
}

fn build(cfg: MarketConfig, model: impl PriceModel + 'static) -> Dynamics {
    Dynamics::new(cfg, Arc::new(model)).expect("built-in instances are valid")
}

/// `T = 6`, `M = 1`, `R_max = 4`, `L_max = 3`, six bid levels on `[35, 85]`
/// and a 5-point price noise: 420 pre-decision states per period.
pub fn desk() -> Dynamics {
    let cfg = MarketConfig::new(
        1,
        6,
        4,
        3,
        1.0,
        BidGrid::linear(35.0, 85.0, 6).unwrap(),
        BetaTable::power(3, 6.0).unwrap(),
    )
    .unwrap();
    let noise = DiscreteDistribution::pseudonormal(
        vec![-10.0, -5.0, 0.0, 5.0, 10.0],
        0.0,
        5.0,
    )
    .unwrap();
    build(cfg, SeasonalNoise::new(seasonal(12.0, Trend::Sin), noise, 1).unwrap())
}

/// Deterministic prices 50, 65, 50, 35, 50, `T = 4`, `R_max = 2`, `L_max = 1`,
/// three bid levels.
pub fn tiny_deterministic() -> Dynamics {
    let cfg = MarketConfig::new(
        1,
        4,
        2,
        1,
        1.0,
        BidGrid::from_levels(vec![30.0, 50.0, 70.0]).unwrap(),
        BetaTable::from_values(vec![0.8, 1.0]).unwrap(),
    )
    .unwrap();
    build(
        cfg,
        SeasonalNoise::new(seasonal(4.0, Trend::Sin), DiscreteDistribution::point(0.0), 1).unwrap(),
    )
}

/// Sinusoid plus 41-point noise at a reduced size: `T = 12`,
/// `R_max = L_max = 4`, ten bid levels on `[15, 85]`.
pub fn variation1_scaled() -> Dynamics {
    let cfg = MarketConfig::new(
        1,
        12,
        4,
        4,
        1.0,
        BidGrid::linear(15.0, 85.0, 10).unwrap(),
        BetaTable::power(4, 6.0).unwrap(),
    )
    .unwrap();
    build(cfg, SeasonalNoise::variation1(1).unwrap())
}

/// Regime-switching prices (cosine trend, `alpha_p = 0.9`, `alpha_q = 0.5`) at
/// the reduced size of [`variation1_scaled`].
pub fn variation2_scaled() -> Dynamics {
    let cfg = MarketConfig::new(
        1,
        12,
        4,
        4,
        1.0,
        BidGrid::linear(15.0, 85.0, 10).unwrap(),
        BetaTable::power(4, 6.0).unwrap(),
    )
    .unwrap();
    build(cfg, RegimeSwitching::new(Trend::Cos, 0.9, 0.5, 1).unwrap())
}

/// Regime-switching instance small enough for exhaustive pairwise audits.
pub fn small_regime() -> Dynamics {
    let cfg = MarketConfig::new(
        1,
        4,
        2,
        1,
        1.0,
        BidGrid::linear(30.0, 75.0, 4).unwrap(),
        BetaTable::from_values(vec![0.7, 1.0]).unwrap(),
    )
    .unwrap();
    let support = integer_support(-10, 40)
        .into_iter()
        .step_by(10)
        .collect::<Vec<_>>();
    let model = RegimeSwitching::with_noise(
        Trend::Sin,
        0.9,
        0.5,
        DiscreteDistribution::pseudonormal(support.clone(), 0.0, 7.0).unwrap(),
        DiscreteDistribution::pseudonormal(support, 15.0, 20.0).unwrap(),
        1,
    )
    .unwrap();
    build(cfg, model)
}

/// Parameters of one full-size stylized benchmark problem.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchmarkProblem {
    pub name: &'static str,
    pub horizon: usize,
    pub r_max: u32,
    pub l_max: u32,
    /// `None` for `beta = 1`, otherwise the exponent `n` of `(l / L_max)^(1/n)`.
    pub beta_power: Option<f64>,
    pub family: Family,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Family {
    Pseudonormal,
    Uniform,
    Regime {
        trend: Trend,
        alpha_p: f64,
        alpha_q: f64,
    },
}

pub const BENCHMARKS: &[BenchmarkProblem] = &[
    BenchmarkProblem { name: "v1-a", horizon: 24, r_max: 6, l_max: 8, beta_power: None, family: Family::Pseudonormal },
    BenchmarkProblem { name: "v1-b", horizon: 24, r_max: 6, l_max: 8, beta_power: Some(6.0), family: Family::Pseudonormal },
    BenchmarkProblem { name: "v1-c", horizon: 36, r_max: 6, l_max: 8, beta_power: None, family: Family::Pseudonormal },
    BenchmarkProblem { name: "v1-d", horizon: 24, r_max: 12, l_max: 12, beta_power: Some(6.0), family: Family::Uniform },
    BenchmarkProblem { name: "v1-e", horizon: 24, r_max: 12, l_max: 12, beta_power: Some(6.0), family: Family::Pseudonormal },
    BenchmarkProblem { name: "v1-f", horizon: 36, r_max: 18, l_max: 18, beta_power: Some(6.0), family: Family::Pseudonormal },
    BenchmarkProblem { name: "v2-a", horizon: 24, r_max: 4, l_max: 6, beta_power: Some(6.0), family: Family::Regime { trend: Trend::Cos, alpha_p: 0.9, alpha_q: 0.5 } },
    BenchmarkProblem { name: "v2-b", horizon: 24, r_max: 4, l_max: 8, beta_power: Some(6.0), family: Family::Regime { trend: Trend::Sin, alpha_p: 0.8, alpha_q: 0.7 } },
    BenchmarkProblem { name: "v2-c", horizon: 12, r_max: 8, l_max: 6, beta_power: Some(6.0), family: Family::Regime { trend: Trend::Cos, alpha_p: 0.9, alpha_q: 0.5 } },
    BenchmarkProblem { name: "v2-d", horizon: 12, r_max: 6, l_max: 8, beta_power: Some(6.0), family: Family::Regime { trend: Trend::Cos, alpha_p: 0.8, alpha_q: 0.7 } },
    BenchmarkProblem { name: "v2-e", horizon: 12, r_max: 8, l_max: 10, beta_power: Some(6.0), family: Family::Regime { trend: Trend::Sin, alpha_p: 0.9, alpha_q: 0.5 } },
    BenchmarkProblem { name: "v2-f", horizon: 12, r_max: 10, l_max: 8, beta_power: Some(6.0), family: Family::Regime { trend: Trend::Cos, alpha_p: 0.8, alpha_q: 0.7 } },
];

/// Looks up a full-size benchmark by name and builds it with the 30-level
/// bid grid on `[15, 85]`.
pub fn benchmark(name: &str) -> Result<Dynamics> {
    let p = BENCHMARKS
        .iter()
        .find(|p| p.name == name)
        .ok_or_else(|| {
            let names: Vec<&str> = BENCHMARKS.iter().map(|p| p.name).collect();
            Error::Config(format!("unknown benchmark {name:?}; known: {}", names.join(", ")))
        })?;
    let beta = match p.beta_power {
        None => BetaTable::constant(1.0, p.l_max)?,
        Some(n) => BetaTable::power(p.l_max, n)?,
    };
    let cfg = MarketConfig::new(1, p.horizon, p.r_max, p.l_max, 1.0, BidGrid::linear(15.0, 85.0, 30)?, beta)?;
    let model: Arc<dyn PriceModel> = match p.family {
        Family::Pseudonormal => Arc::new(SeasonalNoise::variation1(1)?),
        Family::Uniform => Arc::new(SeasonalNoise::new(
            seasonal(24.0, Trend::Sin),
            DiscreteDistribution::uniform(integer_support(-20, 20))?,
            1,
        )?),
        Family::Regime { trend, alpha_p, alpha_q } => {
            Arc::new(RegimeSwitching::new(trend, alpha_p, alpha_q, 1)?)
        }
    };
    Dynamics::new(cfg, model)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Layout;

    #[test]
    fn desk_instance_sizes() {
        let d = desk();
        assert_eq!(d.space().num_pre(), 420);
        assert_eq!(d.space().num_post(), 8820);
        assert_eq!(d.config().grid.levels(), &[35.0, 45.0, 55.0, 65.0, 75.0, 85.0]);
    }

    #[test]
    fn benchmarks_build() {
        for p in BENCHMARKS {
            let d = benchmark(p.name).unwrap();
            assert_eq!(d.horizon(), p.horizon);
            assert_eq!(d.config().grid.num_pairs(), 465);
            assert!(d.space().full_grid_cardinality(Layout::Pre) > 0);
        }
        assert!(benchmark("v3-a").is_err());
    }
}
