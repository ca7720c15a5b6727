mod common;

use common::*;
use ssl_infolab::cpa_net::{pushforward_gaussian, Activation, PwaNetwork, Tape};
use ssl_infolab::gaussian::Gaussian;
use ssl_infolab::nalgebra::{DMatrix, DVector};
use ssl_infolab::rng;

fn fd_jacobian(net: &PwaNetwork, x: &DVector<f64>, h: f64) -> DMatrix<f64> {
    let mut jac = DMatrix::zeros(net.output_dim(), net.input_dim());
    for j in 0..x.len() {
        let mut up = x.clone();
        let mut down = x.clone();
        up[j] += h;
        down[j] -= h;
        let col = (net.forward(&up).unwrap() - net.forward(&down).unwrap()) / (2.0 * h);
        jac.set_column(j, &col);
    }
    jac
}

#[test]
fn jacobian_matches_finite_differences() {
    let mut r = rng(1);
    for (i, act) in [Activation::Relu, Activation::LeakyRelu { slope: 0.1 }, Activation::Abs].into_iter().cycle().take(30).enumerate() {
        let net = PwaNetwork::random(&[4, 16, 16, 3], act, i as u64).unwrap();
        let x = random_vec(&mut r, 4, 1.0);
        let region = net.affine_extract(&x).unwrap();
        let fd = fd_jacobian(&net, &x, 1e-6);
        assert!(max_rel_err(&region.a_matrix, &fd, 1e-3) < 1e-5, "{act:?}");
    }
}

#[test]
fn region_map_reproduces_forward() {
    let mut r = rng(2);
    for seed in 0..50 {
        let net = PwaNetwork::random(&[3, 12, 12, 5], Activation::LeakyRelu { slope: 0.2 }, seed).unwrap();
        let x = random_vec(&mut r, 3, 2.0);
        let region = net.affine_extract(&x).unwrap();
        let y = net.forward(&x).unwrap();
        let via = region.apply(&x);
        assert!((&via - &y).norm() <= 1e-10 * y.norm().max(1.0));
        assert_eq!(region.activation_pattern.len(), net.hidden_units());
    }
}

#[test]
fn region_map_holds_on_a_neighbourhood() {
    let mut r = rng(3);
    let net = PwaNetwork::random(&[2, 10, 10, 2], Activation::Relu, 7).unwrap();
    let x = random_vec(&mut r, 2, 1.0);
    let region = net.affine_extract(&x).unwrap();
    // a tiny step keeps the activation pattern for a generic x
    let dx = random_vec(&mut r, 2, 1e-9);
    let y = net.forward(&(&x + &dx)).unwrap();
    assert!((region.apply(&(&x + &dx)) - y).norm() < 1e-12);
}

/// Sampling oracle: outputs of samples from a narrow Gaussian match the
/// affine image moments within three standard errors per entry.
#[test]
fn pushforward_matches_sampled_moments() {
    let mut r = rng(4);
    let n = 10_000;
    let mut checked = 0;
    for seed in 0..20u64 {
        let d = 2 + (seed as usize % 4);
        let k = 2 + (seed as usize % 5);
        let net = PwaNetwork::random(&[d, 16, 16, k], Activation::LeakyRelu { slope: 0.1 }, seed).unwrap();
        let mean = random_vec(&mut r, d, 1.0);
        let g = Gaussian::new(mean, &(random_spd(&mut r, d, 0.1) * 1e-6)).unwrap();
        let p = pushforward_gaussian(&net, &g, 4096, seed).unwrap();
        if p.purity < 0.99 {
            continue;
        }
        checked += 1;
        let x = g.sample(n, 100 + seed);
        let y = net.forward_batch(&x).unwrap();
        let (em, ec) = sample_mean_cov(&y);
        let c = p.image.covariance();
        let nf = n as f64;
        for i in 0..k {
            assert!((em[i] - p.image.mean()[i]).abs() <= 3.0 * (c[(i, i)] / nf).sqrt(), "net {seed} mean {i}");
            for j in 0..k {
                let se = ((c[(i, i)] * c[(j, j)] + c[(i, j)] * c[(i, j)]) / nf).sqrt();
                assert!((ec[(i, j)] - c[(i, j)]).abs() <= 3.0 * se, "net {seed} cov ({i},{j})");
            }
        }
    }
    assert!(checked >= 15, "only {checked} nets were pure enough");
}

#[test]
fn purity_falls_as_the_input_spreads() {
    let mut r = rng(5);
    let mut violations = 0;
    for seed in 0..10 {
        let net = PwaNetwork::random(&[3, 16, 16, 3], Activation::Relu, seed).unwrap();
        let mean = random_vec(&mut r, 3, 1.0);
        let purities: Vec<f64> = [1e-4, 1e-2, 1e-1, 1.0, 10.0]
            .iter()
            .map(|s| pushforward_gaussian(&net, &Gaussian::isotropic(mean.clone(), s * s), 2000, seed).unwrap().purity)
            .collect();
        assert!(purities[0] > 0.99);
        violations += purities.windows(2).filter(|w| w[1] > w[0] + 0.02).count();
        assert!(purities[4] < purities[0]);
    }
    assert_eq!(violations, 0);
}

#[test]
fn unit_slope_network_is_globally_affine() {
    let net = PwaNetwork::random(&[3, 8, 8, 2], Activation::LeakyRelu { slope: 1.0 }, 11).unwrap();
    let mut r = rng(6);
    for _ in 0..20 {
        let (x, y) = (random_vec(&mut r, 3, 3.0), random_vec(&mut r, 3, 3.0));
        let a = rng::uniform(&mut r, -2.0, 2.0);
        let lhs = net.forward(&(&x * a + &y * (1.0 - a))).unwrap();
        let rhs = net.forward(&x).unwrap() * a + net.forward(&y).unwrap() * (1.0 - a);
        assert!((lhs - rhs).norm() < 1e-10);
    }
}

#[test]
fn tape_jacobian_matches_finite_differences() {
    let net = PwaNetwork::random(&[3, 9, 7, 4], Activation::Abs, 12).unwrap();
    let x = rng::normal_matrix(&mut rng(7), 5, 3);
    let mut tape = Tape::new();
    let params = net.params_on_tape(&mut tape);
    let xv = tape.leaf(x.clone());
    let fwd = net.forward_on_tape(&mut tape, &params, xv).unwrap();
    for row in 0..5 {
        let jac = net.jacobian_on_tape(&mut tape, &params, &fwd, row).unwrap();
        let fd = fd_jacobian(&net, &x.row(row).transpose(), 1e-6);
        assert!(max_rel_err(tape.value(jac), &fd, 1e-3) < 1e-5);
    }
}

#[test]
fn parameter_gradients_match_finite_differences() {
    let mut r = rng(8);
    for seed in 0..20 {
        let net = PwaNetwork::random(&[2, 6, 5, 3], Activation::LeakyRelu { slope: 0.1 }, seed).unwrap();
        let x = rng::normal_matrix(&mut r, 7, 2);
        let target = rng::normal_matrix(&mut r, 7, 3);
        let loss = |n: &PwaNetwork| (n.forward_batch(&x).unwrap() - &target).map(|v| v * v).sum();
        let mut tape = Tape::new();
        let params = net.params_on_tape(&mut tape);
        let xv = tape.leaf(x.clone());
        let fwd = net.forward_on_tape(&mut tape, &params, xv).unwrap();
        let t = tape.leaf(target.clone());
        let diff = tape.sub(fwd.output, t).unwrap();
        let sq = tape.square(diff);
        let out = tape.sum(sq);
        let grads = tape.grad(out).unwrap();
        let analytic = net.grads_flat(&tape, &grads, &params);
        let flat = net.params_flat();
        let fd = fd_grad(&DMatrix::from_column_slice(flat.len(), 1, &flat), 1e-6, |p| {
            let mut n = net.clone();
            n.set_params_flat(p.as_slice()).unwrap();
            loss(&n)
        });
        let a = DMatrix::from_column_slice(analytic.len(), 1, &analytic);
        assert!(max_rel_err(&a, &fd, 1e-2) < 1e-5, "seed {seed}");
    }
}

#[test]
fn tape_replay_is_bit_exact() {
    let net = PwaNetwork::random(&[3, 8, 4], Activation::Relu, 13).unwrap();
    let mut tape = Tape::new();
    let params = net.params_on_tape(&mut tape);
    let xv = tape.leaf(rng::normal_matrix(&mut rng(9), 10, 3));
    let fwd = net.forward_on_tape(&mut tape, &params, xv).unwrap();
    let sq = tape.square(fwd.output);
    let total = tape.sum(sq);
    let replayed = tape.replay().unwrap();
    assert_eq!(replayed.len(), tape.len());
    for v in [xv, fwd.output, sq, total] {
        assert_eq!(&replayed[v.index()], tape.value(v));
    }
}

#[test]
fn params_roundtrip_and_checkpoint() {
    let mut net = PwaNetwork::random(&[4, 5, 2], Activation::LeakyRelu { slope: 0.3 }, 14).unwrap();
    let flat = net.params_flat();
    assert_eq!(flat.len(), net.param_count());
    net.set_params_flat(&flat).unwrap();
    assert_eq!(net.params_flat(), flat);
    assert!(net.set_params_flat(&flat[1..]).is_err());
    let back = PwaNetwork::from_json(&net.to_json().unwrap()).unwrap();
    assert_eq!(back.forward(&DVector::from_element(4, 0.3)).unwrap(), net.forward(&DVector::from_element(4, 0.3)).unwrap());
}
