use cotune::knobspace::{DesignSpace, Knob, LayerWorkload, WorkloadSpec};
use cotune::oracle::brute_force;
use cotune::tuner::{self, log, Strategy, Summary, TunerConfig};

fn resnet() -> LayerWorkload {
    LayerWorkload::square("resnet_conv3x3_64", 1, 64, 64, 56, 3, 1, 1).unwrap()
}

fn config(strategy: Strategy) -> TunerConfig {
    TunerConfig { strategy, record_wall_clock: false, ..TunerConfig::default() }
}

#[test]
fn one_batch_budget_is_the_bootstrap() {
    let space = DesignSpace::default_space();
    let wl = resnet();
    for strategy in Strategy::ALL {
        let cfg = TunerConfig { budget: 64, ..config(strategy) };
        let o = tuner::tune_layer(&space, &wl, &cfg).unwrap();
        assert_eq!(o.measurements, 64);
        let max = o.trials.iter().map(|t| t.fitness).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(o.best.fitness, max);
        assert!(o.trials.iter().all(|t| t.predicted.is_none()), "{strategy}: bootstrap has no predictions");
    }
}

#[test]
fn budget_below_batch_is_rejected() {
    let space = DesignSpace::default_space();
    let cfg = TunerConfig { budget: 63, ..config(Strategy::Dcoc) };
    assert!(matches!(tuner::tune_layer(&space, &resnet(), &cfg), Err(cotune::Error::Config(_))));
}

#[test]
fn exhaustive_random_finds_the_optimum() {
    let space = DesignSpace::default_space();
    let wl = resnet();
    let cfg = TunerConfig { budget: space.total_size(), exhaustive: true, ..config(Strategy::Random) };
    let o = tuner::tune_layer(&space, &wl, &cfg).unwrap();
    let bf = brute_force(&space, &wl, &cfg.oracle, &cfg.constraints).unwrap();
    assert_eq!(o.best_config, bf.best_config);
    assert_eq!(o.best.fitness, bf.best.fitness);
    assert_eq!(o.measurements, bf.valid_count);
}

#[test]
fn random_is_deterministic() {
    let space = DesignSpace::default_space();
    let cfg = TunerConfig { seed: 9, budget: 200, ..config(Strategy::Random) };
    let a = tuner::tune_layer(&space, &resnet(), &cfg).unwrap();
    let b = tuner::tune_layer(&space, &resnet(), &cfg).unwrap();
    assert_eq!(a, b);
}

#[test]
fn best_of_n_grows_with_n() {
    let space = DesignSpace::default_space();
    let budgets = [64, 128, 256, 512];
    let mut medians = Vec::new();
    for budget in budgets {
        let mut bests: Vec<f64> = (0..21)
            .map(|seed| tuner::tune_layer(&space, &resnet(), &TunerConfig { seed, budget, ..config(Strategy::Random) }).unwrap().best.fitness)
            .collect();
        bests.sort_by(f64::total_cmp);
        medians.push(bests[10]);
    }
    assert!(medians.windows(2).all(|w| w[0] <= w[1]), "{medians:?}");
}

#[test]
fn annealing_reaches_most_of_the_optimum() {
    let space = DesignSpace::default_space();
    let wl = resnet();
    let base = config(Strategy::Sa);
    let opt = brute_force(&space, &wl, &base.oracle, &base.constraints).unwrap().best.fitness;
    let mut ratios: Vec<f64> = (0..20)
        .map(|seed| tuner::tune_layer(&space, &wl, &TunerConfig { seed, ..base.clone() }).unwrap().best.fitness / opt)
        .collect();
    ratios.sort_by(f64::total_cmp);
    let median = (ratios[9] + ratios[10]) / 2.0;
    assert!(median >= 0.95, "median ratio {median}");
}

fn two_layers() -> Vec<WorkloadSpec> {
    let mut narrow = WorkloadSpec::new(LayerWorkload::square("conv_128_28", 1, 128, 128, 28, 3, 1, 1).unwrap());
    narrow.knobs = Some([(Knob::TileH.name().to_string(), vec![1, 2, 4])].into());
    vec![WorkloadSpec::new(resnet()), narrow]
}

#[test]
fn network_runs_are_per_layer_independent() {
    assert!(tuner::tune_network(&[], &config(Strategy::Dcoc)).unwrap().is_empty());
    let layers = two_layers();
    for strategy in Strategy::ALL {
        let cfg = TunerConfig { budget: 128, seed: 3, ..config(strategy) };
        let outcomes = tuner::tune_network(&layers, &cfg).unwrap();
        assert_eq!(outcomes.len(), 2);
        for (spec, o) in layers.iter().zip(&outcomes) {
            let seed = tuner::layer_seed(3, &spec.workload.name);
            let alone = tuner::tune_layer(&spec.space().unwrap(), &spec.workload, &TunerConfig { seed, ..cfg.clone() }).unwrap();
            assert_eq!(&alone, o);
            assert_eq!(o.seed, seed);
        }
        let summary = Summary::new(strategy, 3, &outcomes);
        assert_eq!(summary.total_measurements, outcomes.iter().map(|o| o.measurements).sum::<usize>());
        assert_eq!(summary.total_measurements, 256);
    }
}

#[test]
fn warm_start_carries_learners() {
    let layers = two_layers();
    let cold = TunerConfig { budget: 128, ..config(Strategy::Dcoc) };
    let warm = TunerConfig { warm_start: true, ..cold.clone() };
    let a = tuner::tune_network(&layers, &cold).unwrap();
    let b = tuner::tune_network(&layers, &warm).unwrap();
    assert_eq!(a[0], b[0], "first layer starts cold either way");
    assert_ne!(a[1].trials, b[1].trials);
}

#[test]
fn run_directory_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let layers = two_layers();
    for strategy in [Strategy::Dcoc, Strategy::Random] {
        let cfg = TunerConfig { budget: 128, ..config(strategy) };
        let outcomes = tuner::tune_network(&layers, &cfg).unwrap();
        let sdir = log::write_run(dir.path(), strategy, cfg.seed, &outcomes).unwrap();
        for o in &outcomes {
            let back = log::read_trial_file(sdir.join(log::log_file_name(&o.layer))).unwrap();
            assert_eq!(back, o.trials);
        }
        let summary: Summary = serde_json::from_str(&std::fs::read_to_string(sdir.join("summary.json")).unwrap()).unwrap();
        assert_eq!(summary, Summary::new(strategy, cfg.seed, &outcomes));
    }
    let rows = log::collect_report(dir.path()).unwrap();
    assert_eq!(rows.len(), 2 * 2 * 128);
    assert!(rows.windows(2).all(|w| w[0].layer != w[1].layer || w[0].strategy != w[1].strategy || w[0].best_fitness <= w[1].best_fitness));
    assert!(log::collect_report(tempfile::tempdir().unwrap().path()).is_err());
}
