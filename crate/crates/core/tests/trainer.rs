mod common;

use common::*;
use ssl_infolab::cpa_net::{Activation, PwaNetwork};
use ssl_infolab::datagen::{two_moons, NoisyPointSet, PairSource, PrototypeDataset, PrototypeSpec};
use ssl_infolab::nalgebra::DMatrix;
use ssl_infolab::rng;
use ssl_infolab::ssl_losses::{Objective, SslObjectiveConfig};
use ssl_infolab::trainer::*;

fn moons_source() -> NoisyPointSet {
    let (x, y) = two_moons(128, 0.05, 0).unwrap();
    NoisyPointSet::new(x, y, 0.1).unwrap()
}

fn quick_cfg(seed: u64) -> TrainConfig {
    TrainConfig { epochs: 3, pairs_per_epoch: 256, batch_size: 32, diagnostics_every: 8, probe_batch: 128, diag_pairs: 64, seed, ..TrainConfig::default() }
}

#[test]
fn probe_on_noise_is_at_chance() {
    let mut r = rng(1);
    let n_test = 20_000;
    let z_train = rng::normal_matrix(&mut r, 500, 4);
    let y_train: Vec<usize> = (0..500).map(|i| i % 2).collect();
    let z_test = rng::normal_matrix(&mut r, n_test, 4);
    let y_test: Vec<usize> = (0..n_test).map(|_| rng::index(&mut r, 2)).collect();
    let probe = LinearProbe::fit(&z_train, &y_train, 2, 1.0).unwrap();
    let acc = probe.accuracy(&z_test, &y_test);
    assert!((acc - 0.5).abs() <= 3.0 * (0.25 / n_test as f64).sqrt(), "{acc}");
}

#[test]
fn heavy_ridge_predicts_the_majority_class() {
    let mut r = rng(2);
    let z = rng::normal_matrix(&mut r, 100, 3);
    let y: Vec<usize> = (0..100).map(|i| usize::from(i % 10 < 3)).collect();
    let probe = LinearProbe::fit(&z, &y, 2, 1e12).unwrap();
    assert!(probe.predict(&rng::normal_matrix(&mut r, 50, 3)).iter().all(|&c| c == 0));
}

#[test]
fn a_small_gradient_step_lowers_every_objective() {
    let moons = moons_source();
    let protos = PrototypeDataset::random(&PrototypeSpec::default(), 3).unwrap();
    let cfg = SslObjectiveConfig::default();
    for obj in Objective::ALL {
        let source: &dyn PairSource = if obj.needs_sigmas() { &protos } else { &moons };
        let net = PwaNetwork::random(&[source.input_dim(), 12, 4], Activation::LeakyRelu { slope: 0.1 }, 4).unwrap();
        let pairs = source.sample_pairs_with(&mut rng(5), 32);
        let (before, g) = batch_loss_and_grad(&net, obj, &cfg, &pairs, source, true).unwrap();
        let g = g.unwrap();
        let norm2: f64 = g.iter().map(|v| v * v).sum();
        let lr = 1e-3 / norm2.sqrt().max(1.0);
        let mut stepped = net.clone();
        let params: Vec<f64> = net.params_flat().iter().zip(&g).map(|(p, d)| p - lr * d).collect();
        stepped.set_params_flat(&params).unwrap();
        let (after, _) = batch_loss_and_grad(&stepped, obj, &cfg, &pairs, source, false).unwrap();
        assert!(after < before, "{obj:?}: {before} -> {after}");
    }
}

#[test]
fn info_objective_parameter_gradient_matches_finite_differences() {
    let ds = PrototypeDataset::random(&PrototypeSpec { dim: 3, ..PrototypeSpec::default() }, 6).unwrap();
    let cfg = SslObjectiveConfig::default();
    for seed in 0..20 {
        let net = PwaNetwork::random(&[3, 5, 3], Activation::LeakyRelu { slope: 0.2 }, seed).unwrap();
        let pairs = ds.sample_pairs_with(&mut rng(seed), 6);
        let (_, g) = batch_loss_and_grad(&net, Objective::InfoObjective, &cfg, &pairs, &ds, true).unwrap();
        let g = g.unwrap();
        let flat = net.params_flat();
        let fd = fd_grad(&DMatrix::from_column_slice(flat.len(), 1, &flat), 1e-5, |p| {
            let mut n = net.clone();
            n.set_params_flat(p.as_slice()).unwrap();
            batch_loss_and_grad(&n, Objective::InfoObjective, &cfg, &pairs, &ds, false).unwrap().0
        });
        let err = max_rel_err(&DMatrix::from_column_slice(g.len(), 1, &g), &fd, 1e-2);
        assert!(err <= 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn training_is_deterministic_per_seed() {
    let src = moons_source();
    let net = PwaNetwork::random(&[2, 8, 4], Activation::LeakyRelu { slope: 0.1 }, 0).unwrap();
    let cfg = SslObjectiveConfig::default();
    let a = train_ssl(&net, &src, Objective::Vicreg, &cfg, &quick_cfg(1)).unwrap();
    let b = train_ssl(&net, &src, Objective::Vicreg, &cfg, &quick_cfg(1)).unwrap();
    let c = train_ssl(&net, &src, Objective::Vicreg, &cfg, &quick_cfg(2)).unwrap();
    assert_eq!(a.trace, b.trace);
    assert_eq!(a.net, b.net);
    assert_ne!(a.net, c.net);
    assert!(a.trace.records.iter().all(|r| r.wall_time_s == 0.0));
    let steps: Vec<usize> = a.trace.records.iter().map(|r| r.step).collect();
    assert!(steps.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(*steps.last().unwrap(), quick_cfg(1).total_steps());
}

#[test]
fn exploding_updates_abort_with_the_last_finite_net() {
    let src = moons_source();
    let net = PwaNetwork::random(&[2, 8, 4], Activation::Relu, 0).unwrap();
    let cfg = TrainConfig { optimizer: Optimizer::Sgd, learning_rate: 1e308, lr_schedule: LrSchedule::Constant, ..quick_cfg(0) };
    let out = train_ssl(&net, &src, Objective::Vicreg, &SslObjectiveConfig::default(), &cfg).unwrap();
    let abort = out.abort.clone().expect("should abort");
    assert!(abort.step >= 1);
    assert!(out.net.params_flat().iter().all(|p| p.is_finite()));
    assert!(out.into_result().is_err());
}

#[test]
fn cosine_schedule_decays_to_zero() {
    let s = LrSchedule::Cosine;
    assert_eq!(s.rate(0.1, 1, 100), 0.1);
    assert!((s.rate(0.1, 51, 100) - 0.05).abs() < 1e-12);
    assert!(s.rate(0.1, 100, 100) < 1e-4);
    assert_eq!(LrSchedule::Constant.rate(0.1, 77, 100), 0.1);
}

#[test]
fn invalid_configs_are_rejected() {
    let src = moons_source();
    let net = PwaNetwork::random(&[2, 4], Activation::Relu, 0).unwrap();
    let obj = SslObjectiveConfig::default();
    for cfg in [
        TrainConfig { batch_size: 1, ..quick_cfg(0) },
        TrainConfig { learning_rate: 0.0, ..quick_cfg(0) },
        TrainConfig { optimizer: Optimizer::Adam { beta1: 1.0, beta2: 0.9, eps: 1e-8 }, ..quick_cfg(0) },
    ] {
        assert!(train_ssl(&net, &src, Objective::Vicreg, &obj, &cfg).is_err());
    }
    let wrong_dim = PwaNetwork::random(&[3, 4], Activation::Relu, 0).unwrap();
    assert!(train_ssl(&wrong_dim, &src, Objective::Vicreg, &obj, &quick_cfg(0)).is_err());
}
