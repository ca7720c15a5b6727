#![allow(dead_code)]

use ssl_infolab::gaussian::{Gaussian, GaussianMixture};
use ssl_infolab::nalgebra::{DMatrix, DVector};
use ssl_infolab::rng::{self, Rng};

pub fn rng(seed: u64) -> Rng {
    rng::from_seed(seed)
}

/// `B·Bᵀ + floor·I` for a standard-normal `B`.
pub fn random_spd(r: &mut Rng, d: usize, floor: f64) -> DMatrix<f64> {
    let b = rng::normal_matrix(r, d, d);
    &b * b.transpose() / d as f64 + DMatrix::identity(d, d) * floor
}

pub fn random_vec(r: &mut Rng, d: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(d, |_, _| scale * rng::normal(r))
}

pub fn random_gaussian(r: &mut Rng, d: usize) -> Gaussian {
    let mean = random_vec(r, d, 1.0);
    Gaussian::new(mean, &random_spd(r, d, 0.2)).unwrap()
}

pub fn random_mixture(r: &mut Rng, d: usize, k: usize, spread: f64) -> GaussianMixture {
    let comps = (0..k).map(|_| Gaussian::new(random_vec(r, d, spread), &random_spd(r, d, 0.1)).unwrap()).collect();
    let raw: Vec<f64> = (0..k).map(|_| rng::uniform(r, 0.2, 1.0)).collect();
    GaussianMixture::with_raw_weights(comps, raw).unwrap()
}

/// Random orthogonal matrix from the QR factor of a Gaussian matrix.
pub fn random_rotation(r: &mut Rng, d: usize) -> DMatrix<f64> {
    rng::normal_matrix(r, d, d).qr().q()
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-12)
}

/// Largest entrywise relative error, with a floor on the denominator so that
/// entries near zero are compared absolutely.
pub fn max_rel_err(a: &DMatrix<f64>, b: &DMatrix<f64>, floor: f64) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor)).fold(0.0, f64::max)
}

/// Central finite-difference gradient of `f` with respect to every entry of `x`.
pub fn fd_grad(x: &DMatrix<f64>, h: f64, mut f: impl FnMut(&DMatrix<f64>) -> f64) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(x.nrows(), x.ncols());
    let mut xp = x.clone();
    for idx in 0..x.len() {
        let orig = xp[idx];
        xp[idx] = orig + h;
        let up = f(&xp);
        xp[idx] = orig - h;
        let down = f(&xp);
        xp[idx] = orig;
        g[idx] = (up - down) / (2.0 * h);
    }
    g
}

pub fn sample_mean_cov(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.nrows() as f64;
    let mean = x.row_mean().transpose();
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= mean.transpose();
    }
    (mean, c.transpose() * &c / (n - 1.0))
}
