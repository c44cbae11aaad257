use byzsgd::attacks::{AttackKind, AttackSpec};
use byzsgd::oracle::{finite_difference_grad, relative_error};
use byzsgd::training::{
    evaluate, run_experiment, DataConfig, DataSource, Generator, Model, ModelSpec, Samples, Simulation,
    TrainingConfig,
};
use byzsgd::AggregationRule;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn blobs() -> Generator {
    Generator::GaussianBlobs {
        classes: 4,
        features: 6,
        spread: 1.0,
        center_scale: 2.0,
        test_size: 500,
        seed: 1,
    }
}

fn config(rule: AggregationRule, model: ModelSpec, generator: Generator) -> TrainingConfig {
    TrainingConfig {
        workers: 9,
        rounds: 40,
        gamma: 0.1,
        seed: 11,
        eval_every: 10,
        rule,
        attack: AttackSpec::none(),
        model,
        data: DataConfig {
            generator,
            batch_size: 8,
        },
        shuffle_workers: false,
        record_timing: false,
    }
}

fn quadratic() -> ModelSpec {
    ModelSpec::Quadratic {
        dim: 5,
        optimum: Some(vec![1.0, -1.0, 0.5, 0.0, 2.0]),
        init_distance: 4.0,
    }
}

#[test]
fn same_seed_same_stream() {
    let cfg = config(AggregationRule::Phocas { b: 3 }, ModelSpec::Logistic, blobs());
    let cfg = TrainingConfig {
        attack: AttackSpec::with_kind(AttackKind::BitFlip, 1),
        ..cfg
    };
    assert_eq!(run_experiment(cfg.clone()).unwrap(), run_experiment(cfg).unwrap());
}

#[test]
fn attack_free_trimmed_rules_coincide_with_mean() {
    for model in [quadratic(), ModelSpec::Logistic] {
        let generator = match model {
            ModelSpec::Quadratic { .. } => Generator::QuadraticNoise { variance: 1.0 },
            _ => blobs(),
        };
        let base = run_experiment(config(AggregationRule::Mean, model.clone(), generator.clone())).unwrap();
        for rule in [AggregationRule::Trmean { b: 0 }, AggregationRule::Phocas { b: 0 }] {
            assert_eq!(base, run_experiment(config(rule, model.clone(), generator.clone())).unwrap());
        }
    }
}

#[test]
fn krum_steps_along_an_actual_worker_gradient() {
    let recs = run_experiment(config(
        AggregationRule::Krum { q: 2 },
        quadratic(),
        Generator::QuadraticNoise { variance: 1.0 },
    ))
    .unwrap();
    // a single worker's gradient differs from the mean of nine
    assert!(recs.iter().all(|r| r.agg_deviation > 0.0));
    assert!(recs.last().unwrap().dist_to_opt.unwrap() < 1.0);
}

#[test]
fn noiseless_mean_descends() {
    for gamma in [0.1, 0.9, 1.5, 1.99] {
        let cfg = TrainingConfig {
            gamma,
            ..config(AggregationRule::Mean, quadratic(), Generator::QuadraticNoise { variance: 0.0 })
        };
        let recs = run_experiment(cfg).unwrap();
        assert!(recs.windows(2).all(|w| w[1].dist_to_opt < w[0].dist_to_opt), "gamma {gamma}");
    }
}

#[test]
fn worker_order_does_not_change_trimmed_trajectories() {
    for rule in [AggregationRule::Trmean { b: 2 }, AggregationRule::Phocas { b: 2 }] {
        let cfg = TrainingConfig {
            attack: AttackSpec::with_kind(AttackKind::Omniscient, 2),
            ..config(rule, ModelSpec::Logistic, blobs())
        };
        let shuffled = TrainingConfig {
            shuffle_workers: true,
            ..cfg.clone()
        };
        let (mut xa, mut xb) = (Vec::new(), Vec::new());
        Simulation::new(cfg).unwrap().run_observed(|_, x| xa.push(x.to_vec())).unwrap();
        Simulation::new(shuffled).unwrap().run_observed(|_, x| xb.push(x.to_vec())).unwrap();
        for (a, b) in xa.iter().zip(&xb) {
            assert!(relative_error(a, b) < 1e-12);
        }
    }
}

#[test]
fn logistic_learns_blobs() {
    let recs = run_experiment(TrainingConfig {
        rounds: 200,
        gamma: 0.5,
        ..config(AggregationRule::Trmean { b: 2 }, ModelSpec::Logistic, blobs())
    })
    .unwrap();
    let acc = recs.last().unwrap().test_accuracy.unwrap();
    assert!(acc > 0.8, "accuracy {acc}");
    assert!(recs[9].test_accuracy.is_some() && recs[10].test_accuracy.is_none());
}

fn random_samples(rng: &mut ChaCha8Rng, n: usize, k: usize, classes: usize) -> Samples {
    let features = (0..n * k).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    let labels = (0..n).map(|_| rng.random_range(0..classes)).collect();
    Samples::new(features, labels, k).unwrap()
}

#[test]
fn logistic_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..25 {
        let model = Model::logistic(7, 3).unwrap();
        let x: Vec<f64> = (0..model.dim()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let s = random_samples(&mut rng, 1, 7, 3);
        let coords: Vec<usize> = (0..model.dim()).collect();
        let fd = finite_difference_grad(&model, &x, &s, &coords, 1e-6).unwrap();
        let an = model.gradient(&x, &s).unwrap();
        assert!(relative_error(&an, &fd) <= 1e-5);
    }
}

#[test]
fn mlp_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for seed in 0..25 {
        let model = Model::tiny_mlp(6, 32, 4).unwrap();
        let x = model.init(seed);
        let s = random_samples(&mut rng, 1, 6, 4);
        let coords: Vec<usize> = (0..32).map(|_| rng.random_range(0..model.dim())).collect();
        let fd = finite_difference_grad(&model, &x, &s, &coords, 1e-6).unwrap();
        let an = model.gradient(&x, &s).unwrap();
        let picked: Vec<f64> = coords.iter().map(|&j| an[j]).collect();
        assert!(relative_error(&picked, &fd) <= 1e-4);
    }
}

#[test]
fn constant_predictor_scores_chance() {
    let src = DataSource::build(
        &Generator::GaussianBlobs {
            classes: 10,
            features: 3,
            spread: 1.0,
            center_scale: 1.0,
            test_size: 5000,
            seed: 4,
        },
        0,
    )
    .unwrap();
    let model = Model::logistic(3, 10).unwrap();
    // zero weights, bias favouring class 0
    let mut x = vec![0.0; model.dim()];
    x[3] = 1.0;
    let acc = evaluate(&model, &x, src.test_set().unwrap()).unwrap();
    let se = (0.1 * 0.9 / 5000.0f64).sqrt();
    assert!((acc - 0.1).abs() <= 4.0 * se, "accuracy {acc}");
}
