// Oracles below index by time step to mirror the sums they check.
#![allow(clippy::needless_range_loop)]

use std::collections::HashSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use cotune::explore::{self, ExploreParams, RewardContext};
use cotune::knobspace::{AgentId, Configuration, DesignSpace, Knob, KnobSettings, LayerWorkload, NUM_KNOBS};
use cotune::mappo::{self, HyperParams};
use cotune::neural::softmax;
use cotune::oracle::{self, Constraints, OracleParams};
use cotune::sampling::{self, Tag};
use cotune::surrogate::{self, BoostParams};
use cotune::tuner::{self, TunerConfig};

fn workload_strategy() -> impl Strategy<Value = LayerWorkload> {
    (1u64..4, 1u64..5, 1u64..5, 2u64..6, prop::sample::select(vec![1u64, 3]), 1u64..3).prop_filter_map(
        "shape must tile evenly",
        |(n, cin, cout, hw, k, stride)| LayerWorkload::square("prop", n, 8 * cin, 8 * cout, 4 * hw, k, stride, k / 2).ok(),
    )
}

fn config_strategy() -> impl Strategy<Value = Configuration> {
    (0usize..4096).prop_map(|i| DesignSpace::default_space().config_at(i).unwrap())
}

fn toy_space() -> DesignSpace {
    let mut space = DesignSpace::default_space();
    for k in [Knob::TileB, Knob::TileH, Knob::TileW, Knob::OcThreading] {
        space = space.with_values(k, vec![1]).unwrap();
    }
    space
}

#[test]
fn index_round_trip_is_exhaustive() {
    let space = DesignSpace::default_space();
    assert_eq!(space.total_size(), 4096);
    for i in 0..space.total_size() {
        assert_eq!(space.index_of(&space.config_at(i).unwrap()).unwrap(), i);
    }
}

#[test]
fn agents_partition_the_knobs() {
    let space = DesignSpace::default_space();
    let mut seen = HashSet::new();
    for agent in AgentId::ALL {
        for k in space.agent_knobs(agent) {
            assert!(seen.insert(k), "{k:?} owned twice");
        }
    }
    assert_eq!(seen.len(), NUM_KNOBS);
}

/// Parallel speedup term as the latency model defines it.
fn effective_parallelism(wl: &LayerWorkload, s: &KnobSettings, params: &OracleParams) -> f64 {
    let parallel = s.h_threading.min(wl.out_h().div_ceil(s.tile_h)) * s.oc_threading.min(wl.cout.div_ceil(s.tile_co));
    parallel as f64 / (1.0 + params.thread_overhead * (s.thread_product() - 1) as f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn noise_free_measure_is_pure(wl in workload_strategy(), cfg in config_strategy(), s1: u64, s2: u64) {
        let space = DesignSpace::default_space();
        let (p, c) = (OracleParams::default(), Constraints::default());
        let a = oracle::measure(&space, &wl, &cfg, &p, &c, s1);
        let b = oracle::measure(&space, &wl, &cfg, &p, &c, s2);
        prop_assert_eq!(a, b);
    }

    #[test]
    fn penalty_and_fitness_identities(wl in workload_strategy(), cfg in config_strategy(), lambda in 0.0f64..5.0) {
        let space = DesignSpace::default_space();
        let p = OracleParams::default();
        let c = Constraints { lambda_penalty: lambda, ..Constraints::default() };
        let m = oracle::measure(&space, &wl, &cfg, &p, &c, 0);
        if m.valid {
            prop_assert!(m.penalty >= 0.0);
            let free = oracle::measure(&space, &wl, &cfg, &p, &Constraints { lambda_penalty: 0.0, ..c.clone() }, 0);
            prop_assert_eq!(free.fitness, 1.0 / free.latency);
            prop_assert_eq!(oracle::fitness(m.latency, m.penalty).unwrap(), m.fitness);
        } else {
            prop_assert_eq!(m.fitness, f64::NEG_INFINITY);
        }
    }

    #[test]
    fn more_effective_threads_never_slow_down(
        wl in workload_strategy(),
        cfg in config_strategy(),
        h in 0usize..4,
        oc in 0usize..4,
    ) {
        let space = DesignSpace::default_space().with_max_threads(64).unwrap();
        let p = OracleParams { buffer_bytes: 1e12, ..OracleParams::default() };
        let mut other = cfg;
        other.set(Knob::HThreading, h);
        other.set(Knob::OcThreading, oc);
        let (s1, s2) = (space.settings(&cfg), space.settings(&other));
        let (l1, l2) = (oracle::latency(&wl, &s1, &p), oracle::latency(&wl, &s2, &p));
        if effective_parallelism(&wl, &s2, &p) > effective_parallelism(&wl, &s1, &p) {
            prop_assert!(l2 <= l1, "{l2} > {l1}");
        }
    }

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-50.0f64..50.0, 1..12)) {
        let p = softmax(&logits);
        prop_assert!(p.iter().all(|&x| x > 0.0));
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn gae_matches_double_sum(
        rewards in prop::collection::vec(-3.0f64..3.0, 1..=10),
        seed: u64,
        gamma in 0.0f64..=1.0,
        lambda in 0.0f64..=1.0,
    ) {
        use rand::Rng;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rewards.len();
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let boot = rng.random_range(-3.0..3.0);
        let got = mappo::gae(&rewards, &values, boot, gamma, lambda).unwrap();
        let v = |t: usize| if t < n { values[t] } else { boot };
        for t in 0..n {
            let want: f64 = (t..n)
                .map(|l| (gamma * lambda).powi((l - t) as i32) * (rewards[l] + gamma * v(l + 1) - values[l]))
                .sum();
            prop_assert!((got[t] - want).abs() <= 1e-9);
        }
    }

    #[test]
    fn above_median_items_beat_the_threshold(
        weights in prop::collection::vec(-4.0f64..4.0, 1..40),
        n_select in 1usize..50,
        seed: u64,
    ) {
        let space = DesignSpace::default_space();
        let wl = LayerWorkload::square("s", 1, 64, 64, 56, 3, 1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cands: Vec<Configuration> = (0..weights.len())
            .map(|_| explore::random_valid_config(&space, &wl, &mut rng).unwrap())
            .collect();
        let scores: Vec<f64> = cands
            .iter()
            .map(|c| weights[cands.iter().position(|x| x == c).unwrap()])
            .collect();
        let median = sampling::compute_dynamic_threshold(&scores).unwrap();
        let out = sampling::confidence_sampling(
            &space, &wl, &cands, |c| weights[cands.iter().position(|x| x == c).unwrap()], n_select, &mut rng,
        ).unwrap();
        prop_assert_eq!(out.len(), n_select.min(cands.len()));
        for s in &out {
            match s.tag {
                Tag::AboveMedian => prop_assert!(s.score.unwrap() > median),
                Tag::Synthesized => prop_assert!(s.score.is_none() && space.is_valid(&s.config, &wl)),
                Tag::Fallback => prop_assert!(s.score.is_some()),
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn boosting_loss_never_increases(seed: u64) {
        use rand::Rng;
        let space = DesignSpace::default_space();
        let wl = LayerWorkload::square("s", 1, 64, 64, 56, 3, 1, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let records: Vec<_> = (0..120)
            .map(|_| {
                let c = explore::random_valid_config(&space, &wl, &mut rng).unwrap();
                let y = oracle::measure(&space, &wl, &c, &OracleParams::default(), &Constraints::default(), 0).fitness
                    + rng.random_range(-1.0..1.0);
                (surrogate::features(&space, &wl, &c), y)
            })
            .collect();
        let mut last = f64::INFINITY;
        for n_trees in [1, 2, 5, 10, 20] {
            let params = BoostParams { n_trees, ..BoostParams::default() };
            let model = surrogate::fit(&records, &params).unwrap();
            prop_assert_eq!(&model, &surrogate::fit(&records, &params).unwrap());
            let sse = surrogate::training_sse(&model, &records);
            prop_assert!(sse <= last);
            last = sse;
            for (x, _) in &records {
                prop_assert!(!model.predict(x).unwrap().is_nan());
            }
        }
    }

    #[test]
    fn exploration_invariants(seed: u64, episodes in 1usize..4, steps in 1usize..12) {
        let space = DesignSpace::default_space();
        let wl = LayerWorkload::square("s", 1, 64, 64, 56, 3, 1, 1).unwrap();
        let (p, c) = (OracleParams::default(), Constraints::default());
        let ctx = RewardContext::new(&space, &wl, None, &p, &c).with_scale(80.0);
        let params = ExploreParams { episodes, steps, hyper: HyperParams::default() };
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut agents = explore::make_agents(&mut rng).unwrap();
            let mut critic = explore::make_critic(&mut rng).unwrap();
            let r = explore::run_exploration(&ctx, &mut agents, &mut critic, &params, &mut rng).unwrap();
            (r, agents, critic)
        };
        let (a, agents_a, critic_a) = run();
        let (b, agents_b, critic_b) = run();
        prop_assert!(a.candidates.iter().all(|c| space.is_valid(&c.config, &wl)));
        prop_assert!(a.candidates.len() <= episodes * (steps + 1));
        prop_assert_eq!(&a.candidates, &b.candidates);
        prop_assert_eq!(&agents_a, &agents_b);
        prop_assert_eq!(critic_a.params(), critic_b.params());
        for agent in &agents_b {
            prop_assert!(agent.policy.params().iter().all(|w| w.is_finite()));
        }
    }

    #[test]
    fn tuner_accounting(seed: u64, batch in 1usize..6, extra in 0usize..20, strategy in 0usize..3) {
        let space = toy_space();
        let wl = LayerWorkload::square("s", 1, 64, 64, 56, 3, 1, 1).unwrap();
        let cfg = TunerConfig {
            strategy: tuner::Strategy::ALL[strategy],
            seed,
            batch,
            budget: batch + extra,
            episodes: 2,
            steps: 8,
            sa: tuner::SaParams { chains: 4, steps: 20, ..Default::default() },
            record_wall_clock: false,
            ..TunerConfig::default()
        };
        let o = tuner::tune_layer(&space, &wl, &cfg).unwrap();
        prop_assert!(o.measurements <= cfg.budget);
        prop_assert_eq!(o.measurements, o.trials.len());
        let distinct: HashSet<_> = o.trials.iter().map(|t| t.config.clone().into_iter().collect::<Vec<_>>()).collect();
        prop_assert_eq!(distinct.len(), o.trials.len());
        let mut best = f64::NEG_INFINITY;
        for t in &o.trials {
            best = best.max(t.fitness);
            prop_assert_eq!(t.best_fitness, best);
        }
        prop_assert_eq!(best, o.best.fitness);
    }
}
