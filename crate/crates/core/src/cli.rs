//! Command-line front end. Every command writes its outputs to `--out`, then
//! a `manifest.json` listing them; wall-clock timings go to separate files so
//! all other outputs are byte-identical across reruns with the same seed.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::adp::{train_post, train_pre, Expectation, Exploration, StepsizeRule, TrainStats, TrainerConfig};
use crate::config::{build_instance, Instance, RunConfig};
use crate::data::{DatasetManifest, DayPath};
use crate::exact::{backward_dp, ExactSolution};
use crate::error::{Error, Result};
use crate::lattice::Layout;
use crate::market::State;
use crate::policy::{
    evaluate, quantile, EvaluationReport, GreedyPost, GreedyPre, HourlyPriceStats, Idle, Optimal,
    Policy, RulePolicy,
};
use crate::synthetic::{self, SyntheticOptions};
use crate::table::{layout_name, ValueTable};

#[derive(Debug, Parser)]
#[command(name = "storebid", version, about = "Hour-ahead bidding for battery storage in real-time electricity markets")]
pub struct Cli {
    /// Cap on worker threads.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Built-in instance instead of a config file.
    #[arg(long, conflicts_with = "config")]
    pub preset: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainFlags {
    #[arg(long)]
    pub iterations: Option<usize>,
    /// harmonic, constant:<c> or bakf.
    #[arg(long)]
    pub stepsize: Option<StepsizeRule>,
    /// uniform or egreedy:<eps>.
    #[arg(long)]
    pub explore: Option<Exploration>,
    /// Disable the monotone projection (approximate value iteration).
    #[arg(long)]
    pub no_projection: bool,
    /// pre or post.
    #[arg(long, value_parser = parse_layout)]
    pub layout: Option<Layout>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Exact solve, then M-ADP and AVI at each budget and seed.
    Benchmark {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: TrainFlags,
    },
    /// Train a value table.
    Train {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        train: TrainFlags,
        /// Also export tables as CSV.
        #[arg(long)]
        tables: bool,
    },
    /// Evaluate a policy on sampled or held-out price paths.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// adp, idle, rule-a, rule-b, rule-c or optimal.
        #[arg(long, default_value = "adp")]
        policy: String,
        /// Value table for `--policy adp`.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Backward dynamic programming.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tables: bool,
    },
    /// Ingest historical price files and write the selected dataset.
    Ingest {
        #[command(flatten)]
        common: Common,
    },
    /// Write a seeded synthetic 5-minute price file.
    GenerateSynthetic {
        /// Output CSV file.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        weekdays: Option<usize>,
        /// First date, YYYY-MM-DD.
        #[arg(long)]
        start: Option<NaiveDate>,
        #[arg(long)]
        settlements_per_hour: Option<usize>,
    },
}

fn parse_layout(s: &str) -> std::result::Result<Layout, String> {
    match s {
        "pre" => Ok(Layout::Pre),
        "post" => Ok(Layout::Post),
        _ => Err(format!("expected pre or post, got {s:?}")),
    }
}

#[derive(Debug, Serialize)]
struct RunManifest<'a> {
    command: &'a str,
    config: Option<String>,
    preset: Option<&'a str>,
    seed: u64,
    version: &'static str,
    outputs: Vec<String>,
}

/// Collects outputs of one command inside its output directory.
struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
    timings: Vec<(String, f64)>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Outputs> {
        fs::create_dir_all(dir)?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
            timings: Vec::new(),
        })
    }

    /// Writes through a temporary file and renames it into place.
    fn write(&mut self, name: &str, f: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
        let path = self.dir.join(name);
        let tmp = self.dir.join(format!(".{name}.tmp"));
        {
            let mut w = BufWriter::new(fs::File::create(&tmp)?);
            f(&mut w)?;
            w.flush()?;
        }
        fs::rename(&tmp, &path)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }

    fn time(&mut self, what: &str, start: Instant) {
        self.timings.push((what.to_string(), start.elapsed().as_secs_f64()));
    }

    fn finish(mut self, command: &str, common: &Common, seed: u64) -> Result<()> {
        if !self.timings.is_empty() {
            let timings: serde_json::Map<String, serde_json::Value> = self
                .timings
                .iter()
                .map(|(k, v)| (k.clone(), json!(v)))
                .collect();
            self.json("timing.json", &timings)?;
        }
        let manifest = RunManifest {
            command,
            config: common.config.as_ref().map(|p| p.display().to_string()),
            preset: common.preset.as_deref(),
            seed,
            version: env!("CARGO_PKG_VERSION"),
            outputs: self.files.clone(),
        };
        self.json("manifest.json", &manifest)
    }
}

fn load_config(common: &Common) -> Result<(RunConfig, PathBuf)> {
    match (&common.config, &common.preset) {
        (Some(path), _) => {
            let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
            Ok((RunConfig::load(path)?, base))
        }
        (None, Some(name)) => Ok((RunConfig::preset(name), PathBuf::from("."))),
        (None, None) => Err(Error::Config("pass --config <file> or --preset <name>".into())),
    }
}

fn trainer_config(cfg: &RunConfig, flags: &TrainFlags, seed: u64, inst: &Instance) -> Result<TrainerConfig> {
    let mut t = cfg.trainer.clone();
    t.seed = seed;
    if let Some(n) = flags.iterations {
        t.iterations = n;
    }
    if let Some(s) = flags.stepsize {
        t.stepsize = s;
    }
    if let Some(e) = flags.explore {
        t.exploration = e;
    }
    if flags.no_projection {
        t.projection = false;
    }
    if !inst.dynamics.can_enumerate() && t.expectation == Expectation::Exact {
        log::info!("price model cannot be enumerated; using single-sample observations");
        t.expectation = Expectation::SingleSample;
    }
    t.validate()?;
    Ok(t)
}

fn train(inst: &Instance, layout: Layout, t: TrainerConfig) -> Result<(ValueTable, TrainStats)> {
    let trained = match layout {
        Layout::Pre => train_pre(&inst.dynamics, t)?,
        Layout::Post => train_post(&inst.dynamics, t)?,
    };
    Ok((trained.table, trained.stats))
}

fn initial_state(inst: &Instance) -> State {
    let cfg = inst.dynamics.config();
    State {
        resource: 0,
        lifetime: cfg.l_max,
        prev_bid: cfg.grid.idle_pair(),
        price_state: inst.dynamics.model().initial_state(),
    }
}

fn greedy<'a>(inst: &'a Instance, table: &'a ValueTable) -> Result<Box<dyn Policy + 'a>> {
    Ok(match table.layout() {
        Layout::Pre => Box::new(GreedyPre::new(&inst.dynamics, table)?),
        Layout::Post => Box::new(GreedyPost::new(&inst.dynamics, table)?),
    })
}

fn run_evaluation(inst: &Instance, policy: &dyn Policy, seed: u64) -> Result<EvaluationReport> {
    evaluate(
        policy,
        inst.dynamics.config(),
        inst.eval_model.as_ref(),
        inst.eval_paths,
        seed,
    )
}

pub fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| Error::Config(format!("cannot size the thread pool: {e}")))?;
    }
    match cli.command {
        Command::Train { common, train, tables } => cmd_train(&common, &train, tables),
        Command::Evaluate { common, policy, table } => cmd_evaluate(&common, &policy, table.as_deref()),
        Command::Solve { common, tables } => cmd_solve(&common, tables),
        Command::Benchmark { common, train } => cmd_benchmark(&common, &train),
        Command::Ingest { common } => cmd_ingest(&common),
        Command::GenerateSynthetic {
            out,
            seed,
            weekdays,
            start,
            settlements_per_hour,
        } => {
            let mut opts = SyntheticOptions::default();
            if let Some(s) = seed {
                opts.seed = s;
            }
            if let Some(w) = weekdays {
                opts.weekdays = w;
            }
            if let Some(s) = start {
                opts.start = s;
            }
            if let Some(m) = settlements_per_hour {
                opts.settlements_per_hour = m;
            }
            let records = synthetic::generate(&opts)?;
            if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir)?;
            }
            let mut w = BufWriter::new(fs::File::create(&out)?);
            synthetic::write_csv(&records, &mut w)?;
            w.flush()?;
            Ok(())
        }
    }
}

fn write_dataset(out: &mut Outputs, manifest: &DatasetManifest, train: &[DayPath], test: &[DayPath]) -> Result<()> {
    out.json("dataset.json", manifest)?;
    for (name, days) in [("train_days.csv", train), ("test_days.csv", test)] {
        out.write(name, |w| {
            let mut c = csv::Writer::from_writer(w);
            c.write_record(["date", "slot", "price"])?;
            for d in days {
                for (i, p) in d.prices.iter().enumerate() {
                    c.write_record([d.date.to_string(), i.to_string(), p.to_string()])?;
                }
            }
            c.flush()?;
            Ok(())
        })?;
    }
    Ok(())
}

fn cmd_ingest(common: &Common) -> Result<()> {
    let (cfg, base) = load_config(common)?;
    let inst = build_instance(&cfg.instance, &cfg.evaluation, &base)?;
    let (ds, manifest) = inst
        .dataset
        .as_ref()
        .ok_or_else(|| Error::Config("ingest needs an instance with historical prices".into()))?;
    let mut out = Outputs::new(&common.out)?;
    write_dataset(&mut out, manifest, &ds.train, &ds.test)?;
    out.finish("ingest", common, common.seed.unwrap_or(0))
}

fn cmd_train(common: &Common, flags: &TrainFlags, tables: bool) -> Result<()> {
    let (cfg, base) = load_config(common)?;
    let seed = common.seed.unwrap_or(cfg.trainer.seed);
    let inst = build_instance(&cfg.instance, &cfg.evaluation, &base)?;
    let layout = flags.layout.or(cfg.layout).unwrap_or_else(|| inst.layout(None));
    let t = trainer_config(&cfg, flags, seed, &inst)?;
    let mut out = Outputs::new(&common.out)?;
    let start = Instant::now();
    let (table, stats) = train(&inst, layout, t.clone())?;
    out.time("train_seconds", start);
    out.write("table.sbvt", |w| table.write_binary(&mut &mut *w))?;
    if tables {
        out.write("table.csv", |w| table.write_csv(w))?;
    }
    let space = inst.dynamics.space();
    out.json(
        "train.json",
        &json!({
            "layout": layout_name(layout),
            "trainer": t,
            "stats": stats,
            "states_per_period": space.num_states(layout),
            "periods": table.periods(),
        }),
    )?;
    if let Some((ds, manifest)) = &inst.dataset {
        write_dataset(&mut out, manifest, &ds.train, &ds.test)?;
    }
    out.finish("train", common, seed)
}

fn build_policy<'a>(
    name: &str,
    cfg: &RunConfig,
    inst: &'a Instance,
    table: Option<&'a ValueTable>,
    solution: Option<&'a ExactSolution>,
    seed: u64,
) -> Result<Box<dyn Policy + 'a>> {
    let market = inst.dynamics.config();
    match name {
        "adp" => greedy(inst, table.ok_or_else(|| Error::Config("--policy adp needs --table".into()))?),
        "idle" => Ok(Box::new(Idle::new(&market.grid))),
        "optimal" => Ok(Box::new(Optimal::new(
            &inst.dynamics,
            solution.expect("solved before building the optimal policy"),
        ))),
        "rule-a" | "rule-b" | "rule-c" => {
            let hours = (market.horizon + 1).max(24);
            let stats = HourlyPriceStats::from_model(inst.dynamics.model(), hours, cfg.rules.training_paths, seed)?;
            Ok(Box::new(RulePolicy::new(cfg.rules.rule(name, market.r_max)?, market, stats)?))
        }
        other => Err(Error::Config(format!(
            "unknown policy {other:?}; expected adp, idle, rule-a, rule-b, rule-c or optimal"
        ))),
    }
}

fn cmd_evaluate(common: &Common, policy_name: &str, table_path: Option<&Path>) -> Result<()> {
    let (cfg, base) = load_config(common)?;
    let seed = common.seed.unwrap_or(cfg.trainer.seed);
    let inst = build_instance(&cfg.instance, &cfg.evaluation, &base)?;
    let table = table_path.map(ValueTable::load).transpose()?;
    let mut out = Outputs::new(&common.out)?;
    let start = Instant::now();
    let solution = if policy_name == "optimal" {
        Some(backward_dp(&inst.dynamics)?)
    } else {
        None
    };
    let policy = build_policy(policy_name, &cfg, &inst, table.as_ref(), solution.as_ref(), seed)?;
    let report = run_evaluation(&inst, policy.as_ref(), seed)?;
    out.time("evaluate_seconds", start);
    out.write("evaluation.json", |w| report.write_json(w))?;
    out.write("paths.csv", |w| report.write_paths_csv(w))?;
    out.write("storage_histogram.csv", |w| report.write_histogram_csv(w))?;
    out.write("hourly_storage.csv", |w| report.write_hourly_csv(w))?;
    if let Some((ds, _)) = &inst.dataset {
        write_monthly(&mut out, &report, &ds.test)?;
    }
    out.finish("evaluate", common, seed)
}

/// Per-month revenue and daily-revenue quantiles for replayed test days.
fn write_monthly(out: &mut Outputs, report: &EvaluationReport, days: &[DayPath]) -> Result<()> {
    let mut months: std::collections::BTreeMap<String, Vec<f64>> = Default::default();
    for p in &report.paths {
        let date = days[p.day.expect("replayed paths carry their day")].date;
        months.entry(date.format("%Y-%m").to_string()).or_default().push(p.revenue);
    }
    out.write("monthly_revenue.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["month", "days", "total_revenue", "mean_revenue", "q05", "q50", "q95"])?;
        for (month, mut revs) in months {
            let total: f64 = revs.iter().sum();
            revs.sort_by(f64::total_cmp);
            c.write_record([
                month,
                revs.len().to_string(),
                total.to_string(),
                (total / revs.len() as f64).to_string(),
                quantile(&revs, 0.05).to_string(),
                quantile(&revs, 0.5).to_string(),
                quantile(&revs, 0.95).to_string(),
            ])?;
        }
        c.flush()?;
        Ok(())
    })?;
    out.write("daily_revenue.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["date", "revenue"])?;
        for p in &report.paths {
            let date = days[p.day.expect("replayed paths carry their day")].date;
            c.write_record([date.to_string(), p.revenue.to_string()])?;
        }
        c.flush()?;
        Ok(())
    })
}

fn cmd_solve(common: &Common, tables: bool) -> Result<()> {
    let (cfg, base) = load_config(common)?;
    let seed = common.seed.unwrap_or(cfg.trainer.seed);
    let inst = build_instance(&cfg.instance, &cfg.evaluation, &base)?;
    let mut out = Outputs::new(&common.out)?;
    let start = Instant::now();
    let sol = backward_dp(&inst.dynamics)?;
    out.time("solve_seconds", start);
    let s0 = initial_state(&inst);
    let space = inst.dynamics.space();
    out.json(
        "solve.json",
        &json!({
            "initial_value": sol.values.get(0, space.pre_index(&s0)),
            "states_per_period": space.num_pre(),
            "periods": sol.values.periods(),
        }),
    )?;
    out.write("values.sbvt", |w| sol.values.write_binary(&mut &mut *w))?;
    if tables {
        out.write("values.csv", |w| sol.values.write_csv(w))?;
    }
    let slice = &cfg.benchmark.slice;
    out.write("value_slice.csv", |w| write_slices(w, &inst, slice.t, slice.resource, &[("bdp", 0, 0, &sol.values)]))?;
    out.finish("solve", common, seed)
}

/// Rows of pre-decision tables at fixed `t` and `R`.
fn write_slices(
    w: &mut dyn Write,
    inst: &Instance,
    t: usize,
    resource: u32,
    tables: &[(&str, usize, u64, &ValueTable)],
) -> Result<()> {
    let d = &inst.dynamics;
    let space = d.space();
    let cfg = d.config();
    if t > d.horizon() || resource > cfg.r_max {
        return Err(Error::Config(format!(
            "value slice t={t}, R={resource} lies outside the instance"
        )));
    }
    let mut c = csv::Writer::from_writer(w);
    c.write_record(["algorithm", "N", "seed", "t", "resource", "lifetime", "prev_low", "prev_high", "price_state", "value"])?;
    for (name, n, seed, table) in tables {
        if table.layout() != Layout::Pre {
            continue;
        }
        for ps in 0..space.num_price_states() {
            for l in 0..=cfg.l_max {
                for prev in 0..cfg.grid.num_pairs() {
                    let s = State { resource, lifetime: l, prev_bid: prev, price_state: ps };
                    let bid = cfg.grid.pair(prev);
                    c.write_record([
                        name.to_string(),
                        n.to_string(),
                        seed.to_string(),
                        t.to_string(),
                        resource.to_string(),
                        l.to_string(),
                        bid.low.to_string(),
                        bid.high.to_string(),
                        ps.to_string(),
                        table.get(t, space.pre_index(&s)).to_string(),
                    ])?;
                }
            }
        }
    }
    c.flush()?;
    Ok(())
}

struct BenchRow {
    algorithm: &'static str,
    n: usize,
    seed: u64,
    value: f64,
    seconds: f64,
    table: ValueTable,
}

fn cmd_benchmark(common: &Common, flags: &TrainFlags) -> Result<()> {
    let (cfg, base) = load_config(common)?;
    let seed = common.seed.unwrap_or(cfg.trainer.seed);
    let inst = build_instance(&cfg.instance, &cfg.evaluation, &base)?;
    let layout = flags.layout.or(cfg.layout).unwrap_or(Layout::Pre);
    let mut out = Outputs::new(&common.out)?;

    let start = Instant::now();
    let sol = backward_dp(&inst.dynamics)?;
    out.time("bdp_seconds", start);
    let optimal = run_evaluation(&inst, &Optimal::new(&inst.dynamics, &sol), seed)?.mean_value;
    if !(optimal > 0.0) {
        return Err(Error::Data(format!(
            "optimal policy value {optimal} is not positive; percentages are undefined"
        )));
    }

    let budgets = match flags.iterations {
        Some(n) => vec![n],
        None => cfg.benchmark.iterations.clone(),
    };
    let mut jobs = Vec::new();
    for &n in &budgets {
        for i in 0..cfg.benchmark.seeds as u64 {
            for (algorithm, projection) in [("m-adp", true), ("avi", false)] {
                jobs.push((algorithm, projection, n, seed + i));
            }
        }
    }
    let rows: Vec<BenchRow> = jobs
        .par_iter()
        .map(|&(algorithm, projection, n, s)| {
            let mut t = trainer_config(&cfg, flags, s, &inst)?;
            t.iterations = n;
            t.projection = projection;
            let start = Instant::now();
            let (table, _) = train(&inst, layout, t)?;
            let seconds = start.elapsed().as_secs_f64();
            let value = {
                let policy = greedy(&inst, &table)?;
                run_evaluation(&inst, policy.as_ref(), seed)?.mean_value
            };
            Ok(BenchRow { algorithm, n, seed: s, value, seconds, table })
        })
        .collect::<Result<_>>()?;

    let pct = |v: f64| 100.0 * v / optimal;
    out.write("benchmark.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["algorithm", "N", "seed", "policy_value", "pct_optimal"])?;
        c.write_record(["bdp".to_string(), String::new(), seed.to_string(), optimal.to_string(), "100".into()])?;
        for r in &rows {
            c.write_record([
                r.algorithm.to_string(),
                r.n.to_string(),
                r.seed.to_string(),
                r.value.to_string(),
                pct(r.value).to_string(),
            ])?;
        }
        c.flush()?;
        Ok(())
    })?;
    out.write("summary.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["algorithm", "N", "median_pct_optimal", "min_pct_optimal", "max_pct_optimal"])?;
        for &n in &budgets {
            for algorithm in ["m-adp", "avi"] {
                let mut p: Vec<f64> = rows
                    .iter()
                    .filter(|r| r.algorithm == algorithm && r.n == n)
                    .map(|r| pct(r.value))
                    .collect();
                if p.is_empty() {
                    continue;
                }
                p.sort_by(f64::total_cmp);
                c.write_record([
                    algorithm.to_string(),
                    n.to_string(),
                    quantile(&p, 0.5).to_string(),
                    p[0].to_string(),
                    p[p.len() - 1].to_string(),
                ])?;
            }
        }
        c.flush()?;
        Ok(())
    })?;
    let slice = &cfg.benchmark.slice;
    let mut slices: Vec<(&str, usize, u64, &ValueTable)> = vec![("bdp", 0, seed, &sol.values)];
    if let Some(&top) = budgets.iter().max() {
        slices.extend(
            rows.iter()
                .filter(|r| r.n == top && r.seed == seed)
                .map(|r| (r.algorithm, r.n, r.seed, &r.table)),
        );
    }
    out.write("value_slice.csv", |w| write_slices(w, &inst, slice.t, slice.resource, &slices))?;
    out.write("timings.csv", |w| {
        let mut c = csv::Writer::from_writer(w);
        c.write_record(["algorithm", "N", "seed", "wall_seconds"])?;
        for r in &rows {
            c.write_record([r.algorithm.to_string(), r.n.to_string(), r.seed.to_string(), format!("{:.6}", r.seconds)])?;
        }
        c.flush()?;
        Ok(())
    })?;
    out.finish("benchmark", common, seed)
}

/// Prints `{"error", "kind"}` to stderr.
pub fn report_error(e: &Error) {
    eprintln!("{}", json!({ "error": e.to_string(), "kind": e.kind() }));
}
