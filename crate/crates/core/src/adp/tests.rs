use super::*;
use crate::exact::backward_dp;
use crate::instances;
use crate::lattice::audit_monotone;
use crate::market::BidGrid;
use crate::price::HistoricalReplay;
use std::sync::Arc;

fn pairwise_monotone(space: &StateSpace, grid: &BidGrid, layout: Layout, v: &[f64]) -> bool {
    let n = v.len();
    (0..n).all(|i| {
        (0..n).all(|j| {
            let le = match layout {
                Layout::Pre => space.pre_le(grid, &space.pre_state(i), &space.pre_state(j)),
                Layout::Post => space.post_le(grid, &space.post_state(i), &space.post_state(j)),
            };
            !le || v[i] <= v[j]
        })
    })
}

fn random_monotone(space: &StateSpace, layout: Layout, rng: &mut SimRng) -> Vec<f64> {
    let n = space.num_states(layout);
    let raw: Vec<f64> = (0..n).map(|_| rng.random_range(-50.0..50.0)).collect();
    (0..n)
        .map(|i| {
            let mut m = f64::NEG_INFINITY;
            space.for_each_comparable(layout, i, false, |j| m = m.max(raw[j]));
            m
        })
        .collect()
}

#[test]
fn projection_examples() {
    let d = instances::small_regime();
    let space = d.space();
    let s0 = State { resource: 1, lifetime: 0, prev_bid: 3, price_state: 0 };
    let above = State { resource: 2, ..s0 };
    let below = State { resource: 0, ..s0 };
    let other = State { price_state: 1, ..s0 };
    let mut slice = vec![0.0; space.num_pre()];
    slice[space.pre_index(&above)] = 3.0;
    slice[space.pre_index(&below)] = 7.0;
    slice[space.pre_index(&other)] = 9.0;
    monotone_project(space, Layout::Pre, &mut slice, space.pre_index(&s0), 5.0);
    assert_eq!(slice[space.pre_index(&s0)], 5.0);
    assert_eq!(slice[space.pre_index(&above)], 5.0);
    assert_eq!(slice[space.pre_index(&below)], 5.0);
    assert_eq!(slice[space.pre_index(&other)], 9.0);
}

#[test]
fn post_projection_extremes() {
    let d = instances::small_regime();
    let space = d.space();
    let n = space.num_post();
    let grid = &d.config().grid;
    let mut rng = SimRng::seed_from_u64(4);
    let base = random_monotone(space, Layout::Post, &mut rng);
    // the minimal state of price state 0: raising it lifts only its own block
    let block = n / space.num_price_states();
    let mut slice = base.clone();
    monotone_project(space, Layout::Post, &mut slice, 0, base[0] + 1.0);
    for j in 1..n {
        let want = if j < block { base[j].max(base[0] + 1.0) } else { base[j] };
        assert_eq!(slice[j], want);
    }
    // the maximal state of price state 0 has nothing above it
    let top = space.post_index(&crate::market::PostState {
        state: State { resource: 2, lifetime: 1, prev_bid: grid.num_pairs() - 1, price_state: 0 },
        bid: grid.num_pairs() - 1,
    });
    let mut slice = base.clone();
    monotone_project(space, Layout::Post, &mut slice, top, 1e3);
    let changed: Vec<usize> = (0..n).filter(|&j| slice[j] != base[j]).collect();
    assert_eq!(changed, vec![top]);
}

#[test]
fn projection_keeps_random_monotone_slices_monotone() {
    let d = instances::small_regime();
    let space = d.space();
    let grid = &d.config().grid;
    let mut rng = SimRng::seed_from_u64(8);
    for layout in [Layout::Pre, Layout::Post] {
        for _ in 0..5 {
            let mut slice = random_monotone(space, layout, &mut rng);
            assert!(pairwise_monotone(space, grid, layout, &slice));
            let idx = rng.random_range(0..slice.len());
            let z = rng.random_range(-80.0..80.0);
            monotone_project(space, layout, &mut slice, idx, z);
            assert!(pairwise_monotone(space, grid, layout, &slice));
            let once = slice.clone();
            monotone_project(space, layout, &mut slice, idx, z);
            assert_eq!(once, slice);
        }
    }
}

#[test]
fn zero_iterations_leave_zeros() {
    let d = instances::desk();
    let cfg = TrainerConfig { iterations: 0, ..Default::default() };
    assert!(train_pre(&d, cfg.clone()).unwrap().table.values().iter().all(|&v| v == 0.0));
    assert!(train_post(&d, cfg).unwrap().table.values().iter().all(|&v| v == 0.0));
}

#[test]
fn first_iteration_stores_first_observations() {
    let d = instances::desk();
    let cfg = TrainerConfig { iterations: 1, projection: false, ..Default::default() };
    let table = train_pre(&d, cfg.clone()).unwrap().table;
    // replay the same random choices: with a zero table only period T-1 sees nonzero downstream values
    let mut rng = SimRng::seed_from_u64(cfg.seed);
    let _ = d.model().start_episode(&mut rng);
    let zero = ValueTable::for_dynamics(Layout::Pre, &d);
    let mut pre = rng.random_range(0..d.space().num_pre());
    let mut visited = Vec::new();
    for t in 0..d.horizon() {
        let (obs, _) = sample_observation_pre(&d, t, pre, zero.period(t + 1), Expectation::Exact, &mut rng).unwrap();
        assert_eq!(table.get(t, pre), obs);
        visited.push((t, pre));
        if t + 1 < d.horizon() {
            pre = rng.random_range(0..d.space().num_pre());
        }
    }
    let nonzero = table.values().iter().filter(|&&v| v != 0.0).count();
    assert!(nonzero <= visited.len());
}

#[test]
fn every_iteration_passes_the_audit() {
    let d = instances::small_regime();
    let space = d.space();
    let cfg = TrainerConfig {
        iterations: 0,
        expectation: Expectation::SingleSample,
        exploration: Exploration::EpsilonGreedy(0.25),
        stepsize: StepsizeRule::Bakf,
        seed: 3,
        ..Default::default()
    };
    let mut pre = PreTrainer::new(&d, cfg.clone()).unwrap();
    let mut post = PostTrainer::new(&d, cfg).unwrap();
    for _ in 0..200 {
        pre.step().unwrap();
        post.step().unwrap();
        for t in 0..d.horizon() {
            assert_eq!(audit_monotone(space, Layout::Pre, pre.table().period(t)), None);
            assert_eq!(audit_monotone(space, Layout::Post, post.table().period(t)), None);
        }
    }
}

#[test]
fn avi_tables_break_monotonicity() {
    let d = instances::desk();
    let cfg = TrainerConfig { iterations: 300, projection: false, seed: 1, ..Default::default() };
    let table = train_pre(&d, cfg).unwrap().table;
    let broken = (0..d.horizon()).any(|t| audit_monotone(d.space(), Layout::Pre, table.period(t)).is_some());
    assert!(broken);
}

#[test]
fn training_is_seed_deterministic() {
    let d = instances::small_regime();
    for stepsize in [StepsizeRule::Harmonic, StepsizeRule::Bakf] {
        let cfg = TrainerConfig {
            iterations: 100,
            seed: 77,
            stepsize,
            expectation: Expectation::Saa(3),
            exploration: Exploration::EpsilonGreedy(0.5),
            ..Default::default()
        };
        let a = train_pre(&d, cfg.clone()).unwrap().table;
        let b = train_pre(&d, cfg.clone()).unwrap().table;
        assert_eq!(a, b);
        let a = train_post(&d, cfg.clone()).unwrap().table;
        let b = train_post(&d, cfg).unwrap().table;
        assert_eq!(a, b);
    }
}

#[test]
fn exact_pre_training_converges_on_tiny_instance() {
    let d = instances::tiny_deterministic();
    let exact = backward_dp(&d).unwrap();
    let cfg = TrainerConfig { iterations: 50_000, seed: 2, ..Default::default() };
    let table = train_pre(&d, cfg).unwrap().table;
    let scale = exact.values.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let err = table
        .values()
        .iter()
        .zip(exact.values.values())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(err <= 0.02 * scale, "sup error {err}, scale {scale}");
}

#[test]
fn post_training_converges_on_deterministic_model() {
    let d = instances::tiny_deterministic();
    let exact = backward_dp(&d).unwrap();
    let target = post_values_from_pre(&d, &exact.values).unwrap();
    let cfg = TrainerConfig {
        iterations: 50_000,
        seed: 5,
        expectation: Expectation::SingleSample,
        ..Default::default()
    };
    let table = train_post(&d, cfg).unwrap().table;
    let scale = target.values().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let err = table
        .values()
        .iter()
        .zip(target.values())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(err <= 0.02 * scale, "sup error {err}, scale {scale}");
}

#[test]
fn post_training_runs_on_replay() {
    let days: Vec<Vec<f64>> = (0..4)
        .map(|d| (0..24).map(|h| 40.0 + 10.0 * ((h + d) % 5) as f64).collect())
        .collect();
    let model = HistoricalReplay::new(days, 1).unwrap();
    let cfg = crate::market::MarketConfig::new(
        1,
        23,
        3,
        0,
        1.0,
        BidGrid::linear(30.0, 90.0, 4).unwrap(),
        crate::market::BetaTable::constant(1.0, 0).unwrap(),
    )
    .unwrap();
    let d = Dynamics::new(cfg, Arc::new(model)).unwrap();
    for contribution in [ContributionEstimate::Expected, ContributionEstimate::Realized] {
        let tc = TrainerConfig {
            iterations: 200,
            expectation: Expectation::SingleSample,
            contribution,
            ..Default::default()
        };
        let trained = train_post(&d, tc).unwrap();
        assert!(trained.table.values().iter().all(|v| v.is_finite()));
        assert!(trained.table.values().iter().any(|&v| v != 0.0));
    }
    assert!(matches!(
        train_pre(&d, TrainerConfig::default()),
        Err(Error::Capability(_))
    ));
    assert!(post_bellman(&d, &ValueTable::for_dynamics(Layout::Post, &d)).is_err());
}

#[test]
fn bellman_operator_basics() {
    let d = instances::desk();
    let zero = ValueTable::for_dynamics(Layout::Post, &d);
    let h = post_bellman(&d, &zero).unwrap();
    assert!(h.period(d.horizon() - 1).iter().all(|&v| v == 0.0));

    let exact = backward_dp(&d).unwrap();
    let post = post_values_from_pre(&d, &exact.values).unwrap();
    let again = post_bellman(&d, &post).unwrap();
    let err = post
        .values()
        .iter()
        .zip(again.values())
        .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(err < 1e-9, "fixed point error {err}");

    let d = instances::small_regime();
    let mut rng = SimRng::seed_from_u64(1);
    let mut table = ValueTable::for_dynamics(Layout::Post, &d);
    for t in 0..d.horizon() {
        let slice = random_monotone(d.space(), Layout::Post, &mut rng);
        table.period_mut(t).copy_from_slice(&slice);
    }
    let out = post_bellman(&d, &table).unwrap();
    for t in 0..d.horizon() {
        assert!(pairwise_monotone(d.space(), &d.config().grid, Layout::Post, out.period(t)));
    }
}

#[test]
fn deterministic_post_observation_has_no_noise() {
    let d = instances::tiny_deterministic();
    let exact = backward_dp(&d).unwrap();
    let post = post_values_from_pre(&d, &exact.values).unwrap();
    let h = post_bellman(&d, &post).unwrap();
    let mut rng = SimRng::seed_from_u64(0);
    for t in 0..d.horizon() {
        for i in 0..d.space().num_post() {
            let o = sample_observation_post(&d, &post, t, i, ContributionEstimate::Expected, &Episode::default(), &mut rng);
            assert!((o.value - h.get(t, i)).abs() < 1e-9);
        }
    }
}

#[test]
fn post_observations_are_unbiased() {
    let d = instances::small_regime();
    let mut rng = SimRng::seed_from_u64(12);
    let mut table = ValueTable::for_dynamics(Layout::Post, &d);
    for t in 0..d.horizon() {
        let slice = random_monotone(d.space(), Layout::Post, &mut rng);
        table.period_mut(t).copy_from_slice(&slice);
    }
    let h = post_bellman(&d, &table).unwrap();
    for _ in 0..5 {
        let t = rng.random_range(0..d.horizon() - 1);
        let i = rng.random_range(0..d.space().num_post());
        let n = 4000;
        let obs: Vec<f64> = (0..n)
            .map(|_| sample_observation_post(&d, &table, t, i, ContributionEstimate::Expected, &Episode::default(), &mut rng).value)
            .collect();
        let mean = obs.iter().sum::<f64>() / n as f64;
        let var = obs.iter().map(|o| (o - mean) * (o - mean)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - h.get(t, i)).abs() <= 3.0 * se + 1e-9, "t={t} i={i} mean {mean} H {}", h.get(t, i));
    }
}

#[test]
fn saa_is_biased_upward_and_converges() {
    let d = instances::desk();
    let exact = backward_dp(&d).unwrap();
    let next = exact.values.period(1);
    let pre = d.space().pre_index(&State { resource: 2, lifetime: 2, prev_bid: 7, price_state: 0 });
    let (truth, _) = sample_observation_pre(&d, 0, pre, next, Expectation::Exact, &mut SimRng::seed_from_u64(0)).unwrap();
    // E[max_b (C + V(S'))] over one draw, by enumeration
    let c = d.contributions(0, pre);
    let single: f64 = d
        .transitions(0, pre)
        .iter()
        .map(|br| {
            let best = (0..c.len())
                .map(|b| c[b] + next[br.next_index(d.space(), b)])
                .fold(f64::NEG_INFINITY, f64::max);
            br.prob * best
        })
        .sum();
    assert!(single > truth + 1e-6, "single {single} truth {truth}");

    let mut rng = SimRng::seed_from_u64(21);
    let draw = |j: usize, reps: usize, rng: &mut SimRng| {
        let obs: Vec<f64> = (0..reps)
            .map(|_| sample_observation_pre(&d, 0, pre, next, Expectation::Saa(j), rng).unwrap().0)
            .collect();
        let mean = obs.iter().sum::<f64>() / reps as f64;
        let var = obs.iter().map(|o| (o - mean) * (o - mean)).sum::<f64>() / (reps - 1) as f64;
        (mean, (var / reps as f64).sqrt())
    };
    let (m1, se1) = draw(1, 20_000, &mut rng);
    assert!((m1 - single).abs() <= 4.0 * se1, "{m1} vs {single}");
    let (m200, se200) = draw(200, 2_000, &mut rng);
    assert!(m200 >= truth - 4.0 * se200 - 1e-9);
    assert!(m200 - truth < 0.5 * (single - truth) + 4.0 * se200, "{m200} {truth} {single}");
}

#[test]
fn parses_exploration() {
    assert_eq!("uniform".parse::<Exploration>().unwrap(), Exploration::Uniform);
    assert_eq!("egreedy:0.1".parse::<Exploration>().unwrap(), Exploration::EpsilonGreedy(0.1));
    assert!("egreedy:1.5".parse::<Exploration>().is_err());
    assert!("random".parse::<Exploration>().is_err());
}
