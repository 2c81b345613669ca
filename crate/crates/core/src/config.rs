//! JSON run configuration: the problem instance, trainer, evaluation and
//! benchmark settings.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::adp::TrainerConfig;
use crate::data::{load_day_paths, select_dataset, Dataset, DatasetManifest, DatasetSpec, IngestOptions, TimestampConvention};
use crate::dynamics::Dynamics;
use crate::error::{Error, Result};
use crate::instances;
use crate::lattice::Layout;
use crate::market::{BetaTable, BidGrid, MarketConfig, TerminalContribution, DEFAULT_PRICE_BOUND};
use crate::policy::{default_thresholds, Paths, Rule};
use crate::price::{
    integer_support, DiscreteDistribution, HistoricalReplay, PriceModel, RegimeSwitching, Seasonal,
    SeasonalNoise, Trend,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GridSpec {
    Linear { min: f64, max: f64, count: usize },
    Levels(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BetaSpec {
    Constant(f64),
    /// `(l / L_max)^(1/n)`.
    Power(f64),
    Step,
    Linear,
    Values(Vec<f64>),
}

impl Default for BetaSpec {
    fn default() -> BetaSpec {
        BetaSpec::Constant(1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminalSpec {
    #[default]
    Zero,
    PerUnit(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSpec {
    #[serde(default = "one")]
    pub settlements_per_hour: usize,
    pub horizon: usize,
    pub r_max: u32,
    pub l_max: u32,
    #[serde(default = "unit")]
    pub penalty_k: f64,
    pub grid: GridSpec,
    #[serde(default)]
    pub beta: BetaSpec,
    #[serde(default)]
    pub terminal: TerminalSpec,
    #[serde(default = "default_bound")]
    pub price_bound: f64,
    #[serde(default)]
    pub penalty_discounted: bool,
}

fn one() -> usize {
    1
}

fn unit() -> f64 {
    1.0
}

fn default_bound() -> f64 {
    DEFAULT_PRICE_BOUND
}

impl MarketSpec {
    pub fn build(&self) -> Result<MarketConfig> {
        let grid = match &self.grid {
            GridSpec::Linear { min, max, count } => BidGrid::linear(*min, *max, *count)?,
            GridSpec::Levels(v) => BidGrid::from_levels(v.clone())?,
        };
        let beta = match &self.beta {
            BetaSpec::Constant(c) => BetaTable::constant(*c, self.l_max)?,
            BetaSpec::Power(n) => BetaTable::power(self.l_max, *n)?,
            BetaSpec::Step => BetaTable::step(self.l_max)?,
            BetaSpec::Linear => BetaTable::linear(self.l_max)?,
            BetaSpec::Values(v) => BetaTable::from_values(v.clone())?,
        };
        let terminal = match self.terminal {
            TerminalSpec::Zero => TerminalContribution::Zero,
            TerminalSpec::PerUnit(v) => TerminalContribution::PerUnit(v),
        };
        let mut cfg = MarketConfig::new(
            self.settlements_per_hour,
            self.horizon,
            self.r_max,
            self.l_max,
            self.penalty_k,
            grid,
            beta,
        )?
        .with_terminal(terminal)
        .with_price_bound(self.price_bound);
        cfg.penalty_discounted = self.penalty_discounted;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// A finite support: an integer range or explicit values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SupportSpec {
    Range {
        lo: i64,
        hi: i64,
        #[serde(default = "one")]
        step: usize,
    },
    Values(Vec<f64>),
}

impl SupportSpec {
    fn values(&self) -> Result<Vec<f64>> {
        match self {
            SupportSpec::Range { lo, hi, step } => {
                if lo > hi || *step == 0 {
                    return Err(Error::Config(format!("bad support range {lo}..={hi} step {step}")));
                }
                Ok(integer_support(*lo, *hi).into_iter().step_by(*step).collect())
            }
            SupportSpec::Values(v) => Ok(v.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseSpec {
    Pseudonormal { support: SupportSpec, mu: f64, sigma: f64 },
    Uniform { support: SupportSpec },
    Discrete { support: Vec<f64>, probs: Vec<f64> },
    Point(f64),
}

impl NoiseSpec {
    pub fn build(&self) -> Result<DiscreteDistribution> {
        match self {
            NoiseSpec::Pseudonormal { support, mu, sigma } => {
                DiscreteDistribution::pseudonormal(support.values()?, *mu, *sigma)
            }
            NoiseSpec::Uniform { support } => DiscreteDistribution::uniform(support.values()?),
            NoiseSpec::Discrete { support, probs } => DiscreteDistribution::new(support.clone(), probs.clone()),
            NoiseSpec::Point(v) => Ok(DiscreteDistribution::point(*v)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "kind")]
pub enum PriceSpec {
    SeasonalNoise {
        seasonal: Seasonal,
        noise: NoiseSpec,
    },
    /// Sinusoid with period 24 plus pseudonormal noise on `-20..=20`.
    Variation1,
    Regime {
        trend: Trend,
        alpha_p: f64,
        alpha_q: f64,
        #[serde(default)]
        normal: Option<NoiseSpec>,
        #[serde(default)]
        spike: Option<NoiseSpec>,
    },
    /// Replayed days from `timestamp,price` files; paths are relative to the
    /// config file.
    Historical {
        files: Vec<PathBuf>,
        dataset: DatasetSpec,
        #[serde(default)]
        convention: TimestampConvention,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceSpec {
    /// A built-in instance; excludes `market` and `prices`.
    #[serde(default)]
    pub preset: Option<String>,
    #[serde(default)]
    pub market: Option<MarketSpec>,
    #[serde(default)]
    pub prices: Option<PriceSpec>,
}

pub const PRESETS: &[&str] = &["desk", "tiny", "variation1-scaled", "variation2-scaled", "small-regime"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSpec {
    /// Sampled paths for model-based instances; replayed data uses each test day once.
    pub paths: usize,
}

impl Default for EvaluationSpec {
    fn default() -> EvaluationSpec {
        EvaluationSpec { paths: 1000 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SliceSpec {
    pub t: usize,
    pub resource: u32,
}

impl Default for SliceSpec {
    fn default() -> SliceSpec {
        SliceSpec { t: 0, resource: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkSpec {
    pub iterations: Vec<usize>,
    /// Number of training seeds per budget, counted up from the run seed.
    pub seeds: usize,
    pub slice: SliceSpec,
}

impl Default for BenchmarkSpec {
    fn default() -> BenchmarkSpec {
        BenchmarkSpec {
            iterations: vec![0, 500, 2000],
            seeds: 5,
            slice: SliceSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RuleSpec {
    pub h_star: usize,
    pub k_star: usize,
    pub alpha: f64,
    /// Nearly-full level; defaults to 5/6 of capacity.
    pub full: Option<f64>,
    /// Nearly-empty level; defaults to 1/6 of capacity.
    pub empty: Option<f64>,
    /// Sampled training days for model-based instances.
    pub training_paths: usize,
}

impl Default for RuleSpec {
    fn default() -> RuleSpec {
        RuleSpec {
            h_star: 12,
            k_star: 10,
            alpha: 0.1,
            full: None,
            empty: None,
            training_paths: 1000,
        }
    }
}

impl RuleSpec {
    pub fn rule(&self, name: &str, r_max: u32) -> Result<Rule> {
        let (df, de) = default_thresholds(r_max);
        let full = self.full.unwrap_or(df);
        let empty = self.empty.unwrap_or(de);
        match name {
            "rule-a" => Ok(Rule::A { h_star: self.h_star }),
            "rule-b" => Ok(Rule::B { k_star: self.k_star, full, empty }),
            "rule-c" => Ok(Rule::C { alpha: self.alpha, full, empty }),
            _ => Err(Error::Config(format!("unknown rule policy {name:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub instance: InstanceSpec,
    pub trainer: TrainerConfig,
    /// Table layout to train; defaults to pre-decision for enumerable models
    /// and post-decision otherwise.
    pub layout: Option<Layout>,
    pub evaluation: EvaluationSpec,
    pub benchmark: BenchmarkSpec,
    pub rules: RuleSpec,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("bad config: {e}")))
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        RunConfig::from_json(&text)
    }

    pub fn preset(name: &str) -> RunConfig {
        RunConfig {
            instance: InstanceSpec {
                preset: Some(name.into()),
                ..Default::default()
            },
            ..Default::default()
        }
    }
}

/// A built instance: training dynamics, the evaluation price source and, for
/// replayed data, the dataset it came from.
#[derive(Debug)]
pub struct Instance {
    pub dynamics: Dynamics,
    pub eval_model: Arc<dyn PriceModel>,
    pub eval_paths: Paths,
    pub dataset: Option<(Dataset, DatasetManifest)>,
}

impl Instance {
    pub fn layout(&self, requested: Option<Layout>) -> Layout {
        requested.unwrap_or(if self.dynamics.can_enumerate() {
            Layout::Pre
        } else {
            Layout::Post
        })
    }
}

fn preset(name: &str) -> Result<Dynamics> {
    Ok(match name {
        "desk" => instances::desk(),
        "tiny" => instances::tiny_deterministic(),
        "variation1-scaled" => instances::variation1_scaled(),
        "variation2-scaled" => instances::variation2_scaled(),
        "small-regime" => instances::small_regime(),
        other => instances::benchmark(other).map_err(|_| {
            let bench: Vec<&str> = instances::BENCHMARKS.iter().map(|b| b.name).collect();
            Error::Config(format!(
                "unknown preset {other:?}; known: {}, {}",
                PRESETS.join(", "),
                bench.join(", ")
            ))
        })?,
    })
}

/// Builds the instance; relative data paths resolve against `base`.
pub fn build_instance(spec: &InstanceSpec, eval: &EvaluationSpec, base: &Path) -> Result<Instance> {
    let sampled = Paths::Sampled(eval.paths);
    match (&spec.preset, &spec.market, &spec.prices) {
        (Some(name), None, None) => {
            let dynamics = preset(name)?;
            Ok(Instance {
                eval_model: dynamics.model_arc(),
                dynamics,
                eval_paths: sampled,
                dataset: None,
            })
        }
        (None, Some(market), Some(prices)) => {
            let cfg = market.build()?;
            let m = cfg.settlements_per_hour;
            let model: Arc<dyn PriceModel> = match prices {
                PriceSpec::SeasonalNoise { seasonal, noise } => {
                    Arc::new(SeasonalNoise::new(*seasonal, noise.build()?, m)?)
                }
                PriceSpec::Variation1 => Arc::new(SeasonalNoise::variation1(m)?),
                PriceSpec::Regime { trend, alpha_p, alpha_q, normal, spike } => match (normal, spike) {
                    (None, None) => Arc::new(RegimeSwitching::new(*trend, *alpha_p, *alpha_q, m)?),
                    (Some(n), Some(s)) => Arc::new(RegimeSwitching::with_noise(
                        *trend,
                        *alpha_p,
                        *alpha_q,
                        n.build()?,
                        s.build()?,
                        m,
                    )?),
                    _ => {
                        return Err(Error::Config(
                            "regime noise needs both `normal` and `spike` or neither".into(),
                        ))
                    }
                },
                PriceSpec::Historical { files, dataset, convention } => {
                    let (ds, manifest) = load_dataset(files, *dataset, *convention, &cfg, base)?;
                    let train = HistoricalReplay::new(ds.train_prices(), m)?;
                    let test = HistoricalReplay::new(ds.test_prices(), m)?;
                    let dynamics = Dynamics::new(cfg, Arc::new(train))?;
                    return Ok(Instance {
                        dynamics,
                        eval_model: Arc::new(test),
                        eval_paths: Paths::EachDay,
                        dataset: Some((ds, manifest)),
                    });
                }
            };
            Ok(Instance {
                dynamics: Dynamics::new(cfg, model.clone())?,
                eval_model: model,
                eval_paths: sampled,
                dataset: None,
            })
        }
        (None, None, None) => Err(Error::Config("the instance needs a preset or market and prices".into())),
        (Some(_), _, _) => Err(Error::Config("a preset excludes market and prices".into())),
        _ => Err(Error::Config("market and prices must be given together".into())),
    }
}

/// Ingests the price files and splits them per the dataset spec.
pub fn load_dataset(
    files: &[PathBuf],
    spec: DatasetSpec,
    convention: TimestampConvention,
    cfg: &MarketConfig,
    base: &Path,
) -> Result<(Dataset, DatasetManifest)> {
    if files.is_empty() {
        return Err(Error::Config("historical prices need at least one file".into()));
    }
    let resolved: Vec<PathBuf> = files.iter().map(|f| base.join(f)).collect();
    let refs: Vec<&Path> = resolved.iter().map(|p| p.as_path()).collect();
    let opts = IngestOptions {
        settlements_per_hour: cfg.settlements_per_hour,
        convention,
        price_bound: cfg.price_bound,
    };
    let (days, summary) = load_day_paths(&refs, &opts)?;
    let ds = select_dataset(&days, spec)?;
    let manifest = DatasetManifest {
        sources: files.iter().map(|f| f.display().to_string()).collect(),
        settlements_per_hour: opts.settlements_per_hour,
        convention,
        price_bound: opts.price_bound,
        spec: Some(spec),
        train_dates: ds.train.iter().map(|d| d.date).collect(),
        test_dates: ds.test.iter().map(|d| d.date).collect(),
        summary,
    };
    Ok((ds, manifest))
}
