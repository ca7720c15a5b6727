mod common;

use common::*;
use ssl_infolab::gaussian::{bhattacharyya_distance, kl_divergence, mixture_moments, Gaussian, GaussianMixture};
use ssl_infolab::nalgebra::DVector;

#[test]
fn log_density_matches_dense_inverse() {
    let mut r = rng(1);
    for _ in 0..20 {
        let mean = random_vec(&mut r, 3, 1.0);
        let cov = random_spd(&mut r, 3, 0.1);
        let g = Gaussian::new(mean.clone(), &cov).unwrap();
        let x = random_vec(&mut r, 3, 2.0);
        let inv = cov.clone().try_inverse().unwrap();
        let diff = &x - &mean;
        let quad = (diff.transpose() * inv * &diff)[(0, 0)];
        let expected = -0.5 * (quad + cov.determinant().ln() + 3.0 * (2.0 * std::f64::consts::PI).ln());
        assert!(rel_err(g.log_density(&x).unwrap(), expected) < 1e-10);
    }
}

#[test]
fn standard_normal_sample_mean() {
    let x = Gaussian::standard(2).sample(100_000, 3);
    let (mean, _) = sample_mean_cov(&x);
    assert!(mean.amax() < 0.02, "{mean}");
}

#[test]
fn mixture_moments_match_monte_carlo() {
    let mut r = rng(2);
    let m = random_mixture(&mut r, 3, 4, 2.0);
    let (mean, cov) = mixture_moments(&m);
    let n = 1_000_000;
    let x = m.sample(n, 4);
    let (emp_mean, emp_cov) = sample_mean_cov(&x);
    let nf = n as f64;
    for i in 0..3 {
        let se = (emp_cov[(i, i)] / nf).sqrt();
        assert!((emp_mean[i] - mean[i]).abs() < 3.0 * se, "mean {i}");
        for j in 0..3 {
            // standard error of a covariance entry from the fourth moments
            let prods: Vec<f64> = x.row_iter().map(|row| (row[i] - emp_mean[i]) * (row[j] - emp_mean[j])).collect();
            let mu = prods.iter().sum::<f64>() / nf;
            let var = prods.iter().map(|p| (p - mu) * (p - mu)).sum::<f64>() / (nf - 1.0);
            let se = (var / nf).sqrt();
            assert!((emp_cov[(i, j)] - cov[(i, j)]).abs() < 3.0 * se, "cov ({i},{j}): {} vs {}", emp_cov[(i, j)], cov[(i, j)]);
        }
    }
}

#[test]
fn single_component_moments_are_exact() {
    let mut r = rng(5);
    let g = random_gaussian(&mut r, 4);
    let (mean, cov) = mixture_moments(&GaussianMixture::single(g.clone()));
    assert_eq!(&mean, g.mean());
    assert!(max_rel_err(&cov, &g.covariance(), 1e-12) < 1e-12);
}

#[test]
fn kl_matches_monte_carlo() {
    let mut r = rng(6);
    let p = random_gaussian(&mut r, 4);
    let q = random_gaussian(&mut r, 4);
    let n = 1_000_000;
    let x = p.sample(n, 7);
    let vals: Vec<f64> = x.row_iter().map(|row| {
        let v = row.transpose();
        p.log_density(&v).unwrap() - q.log_density(&v).unwrap()
    }).collect();
    let nf = n as f64;
    let mean = vals.iter().sum::<f64>() / nf;
    let se = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0) / nf).sqrt();
    let kl = kl_divergence(&p, &q).unwrap();
    assert!((kl - mean).abs() < 3.0 * se, "kl {kl} mc {mean} se {se}");
}

#[test]
fn closed_form_divergence_cases() {
    let a = Gaussian::isotropic(DVector::from_element(1, 0.0), 1.0);
    let b = Gaussian::isotropic(DVector::from_element(1, 2.0), 1.0);
    assert!((bhattacharyya_distance(&a, &b).unwrap() - 0.5).abs() < 1e-12);
    assert!((kl_divergence(&a, &b).unwrap() - 2.0).abs() < 1e-12);
    let mut r = rng(8);
    let p = random_gaussian(&mut r, 3);
    let q = random_gaussian(&mut r, 3);
    assert!(bhattacharyya_distance(&p, &p).unwrap().abs() < 1e-12);
    assert!(kl_divergence(&p, &p).unwrap().abs() < 1e-12);
    assert!(rel_err(bhattacharyya_distance(&p, &q).unwrap(), bhattacharyya_distance(&q, &p).unwrap()) < 1e-12);
}

#[test]
fn density_integrates_to_one_on_a_grid() {
    let mut r = rng(9);
    // d = 1, midpoint rule over ±12 std
    for _ in 0..5 {
        let g = random_gaussian(&mut r, 1);
        let s = g.covariance()[(0, 0)].sqrt();
        let (lo, steps) = (g.mean()[0] - 12.0 * s, 4000);
        let h = 24.0 * s / steps as f64;
        let total: f64 = (0..steps).map(|i| g.log_density(&DVector::from_element(1, lo + (i as f64 + 0.5) * h)).unwrap().exp() * h).sum();
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }
    // d = 2, midpoint rule on a square covering ±10 std of the widest axis
    for _ in 0..3 {
        let g = random_gaussian(&mut r, 2);
        let s = g.covariance().symmetric_eigenvalues().max().sqrt();
        let steps = 600;
        let h = 20.0 * s / steps as f64;
        let mut total = 0.0;
        for i in 0..steps {
            for j in 0..steps {
                let x = DVector::from_row_slice(&[g.mean()[0] - 10.0 * s + (i as f64 + 0.5) * h, g.mean()[1] - 10.0 * s + (j as f64 + 0.5) * h]);
                total += g.log_density(&x).unwrap().exp() * h * h;
            }
        }
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }
}

#[test]
fn divergences_are_rotation_invariant() {
    let mut r = rng(10);
    for _ in 0..20 {
        let p = random_gaussian(&mut r, 4);
        let q = random_gaussian(&mut r, 4);
        let rot = random_rotation(&mut r, 4);
        let zero = DVector::zeros(4);
        let (pr, qr) = (p.affine_image(&rot, &zero).unwrap(), q.affine_image(&rot, &zero).unwrap());
        assert!(rel_err(kl_divergence(&p, &q).unwrap(), kl_divergence(&pr, &qr).unwrap()) < 1e-8);
        assert!(rel_err(bhattacharyya_distance(&p, &q).unwrap(), bhattacharyya_distance(&pr, &qr).unwrap()) < 1e-8);
    }
}

#[test]
fn moment_error_shrinks_like_inverse_sqrt_n() {
    let mut r = rng(11);
    let m = random_mixture(&mut r, 2, 3, 1.5);
    let (mean, cov) = mixture_moments(&m);
    let err = |n: usize| -> f64 {
        (0..8u64)
            .map(|s| {
                let (em, ec) = sample_mean_cov(&m.sample(n, 100 + s));
                (&em - &mean).norm() + (&ec - &cov).norm()
            })
            .sum::<f64>()
            / 8.0
    };
    let ratio = err(1_000) / err(100_000);
    // 1/√n predicts a factor of 10
    assert!((4.0..25.0).contains(&ratio), "ratio {ratio}");
}

#[test]
fn low_rank_factor_keeps_zero_directions() {
    let v = DVector::from_row_slice(&[1.0, 2.0, 0.0]);
    let g = Gaussian::new(DVector::zeros(3), &(&v * v.transpose())).unwrap();
    assert!(!g.is_full_rank());
    let x = g.sample(200, 0);
    assert!(x.column(2).amax() == 0.0);
    for row in x.row_iter() {
        assert!((row[1] - 2.0 * row[0]).abs() < 1e-12);
    }
}
