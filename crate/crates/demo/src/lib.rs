//! Browser bindings for three small experiments. Every export returns a JSON
//! string so the page needs nothing beyond `JSON.parse`.

use serde_json::json;
use wasm_bindgen::prelude::*;

use ssl_infolab::cpa_net::{pushforward_gaussian, Activation, PwaNetwork};
use ssl_infolab::datagen::two_moons;
use ssl_infolab::entropy::{mc_entropy, moment_upper_bound, pairwise_bound, PairwiseSide};
use ssl_infolab::gaussian::{Gaussian, GaussianMixture};
use ssl_infolab::nalgebra::{DMatrix, DVector};
use ssl_infolab::stats_validation::{gmm_collapse_run, CovMode, GmmLabState};
use ssl_infolab::{linalg, Error};

fn to_js(e: Error) -> JsValue {
    JsValue::from_str(&e.to_string())
}

/// Two unit-variance Gaussians in `dim` dimensions whose means are
/// `separation` apart along the first axis.
pub fn two_blobs(dim: usize, separation: f64) -> Result<GaussianMixture, Error> {
    let a = Gaussian::standard(dim);
    let mut shift = DVector::zeros(dim);
    shift[0] = separation;
    let b = a.translated(&shift);
    GaussianMixture::uniform(vec![a, b])
}

/// Entropy bounds and a Monte-Carlo reference for `two_blobs` at `points`
/// separations in `[0, max_separation]`.
pub fn entropy_sweep(dim: usize, max_separation: f64, points: usize, mc_samples: usize, seed: u64) -> Result<serde_json::Value, Error> {
    if points < 2 || dim == 0 {
        return Err(Error::InvalidArgument("need dim >= 1 and at least 2 points".into()));
    }
    let mut rows = Vec::with_capacity(points);
    for i in 0..points {
        let s = max_separation * i as f64 / (points - 1) as f64;
        let m = two_blobs(dim, s)?;
        let mc = mc_entropy(&m, mc_samples, seed + i as u64)?;
        rows.push(json!({
            "separation": s,
            "mc": mc.value,
            "mc_se": mc.std_error,
            "pairwise_lower": pairwise_bound(&m, PairwiseSide::Lower)?.value,
            "pairwise_upper": pairwise_bound(&m, PairwiseSide::Upper)?.value,
            "moment_upper": moment_upper_bound(&m)?.value,
        }));
    }
    Ok(json!(rows))
}

/// Pushes an isotropic Gaussian through a random leaky-ReLU network and
/// compares the single-region prediction with sample moments.
pub fn pushforward_check(sigma: f64, n_samples: usize, seed: u64) -> Result<serde_json::Value, Error> {
    let net = PwaNetwork::random(&[2, 16, 16, 2], Activation::LeakyRelu { slope: 0.1 }, seed)?;
    let g = Gaussian::isotropic(DVector::from_vec(vec![0.3, -0.2]), sigma * sigma);
    let p = pushforward_gaussian(&net, &g, n_samples, seed + 1)?;
    let x = g.sample(n_samples, seed + 2);
    let y = net.forward_batch(&x)?;
    let mean = linalg::column_means(&y);
    let cov = linalg::row_covariance(&y);
    let flat = |m: &DMatrix<f64>| m.iter().copied().collect::<Vec<_>>();
    Ok(json!({
        "purity": p.purity,
        "predicted_mean": p.image.mean().iter().copied().collect::<Vec<_>>(),
        "empirical_mean": mean.iter().copied().collect::<Vec<_>>(),
        "predicted_cov": flat(&p.image.covariance()),
        "empirical_cov": flat(&cov),
        "samples": y.row_iter().take(400).map(|r| [r[0], r[1]]).collect::<Vec<_>>(),
    }))
}

/// Centroid-entropy trace of the GMM lab on two moons. `sigma <= 0` selects
/// learned full covariances.
pub fn gmm_trace(lr_inputs: f64, lr_params: f64, sigma: f64, steps: usize, seed: u64) -> Result<serde_json::Value, Error> {
    let (x, _) = two_moons(200, 0.05, seed)?;
    let mode = if sigma > 0.0 { CovMode::FixedSmall { sigma } } else { CovMode::Full };
    let lab = GmmLabState::new(x, 10, mode, lr_inputs, lr_params, seed)?;
    let run = gmm_collapse_run(&lab, steps)?;
    let inputs = &run.final_state.inputs;
    Ok(json!({
        "entropy": run.trace.iter().map(|p| p.centroid_entropy).collect::<Vec<_>>(),
        "log_likelihood": run.trace.iter().map(|p| p.mean_log_likelihood).collect::<Vec<_>>(),
        "points": inputs.row_iter().map(|r| [r[0], r[1]]).collect::<Vec<_>>(),
        "centroids": run.final_state.centroids.row_iter().map(|r| [r[0], r[1]]).collect::<Vec<_>>(),
        "abort": run.abort,
    }))
}

#[wasm_bindgen]
pub fn entropy_vs_separation(dim: usize, max_separation: f64, points: usize, mc_samples: usize, seed: u64) -> Result<String, JsValue> {
    entropy_sweep(dim, max_separation, points, mc_samples, seed).map(|v| v.to_string()).map_err(to_js)
}

#[wasm_bindgen]
pub fn pushforward_purity(sigma: f64, n_samples: usize, seed: u64) -> Result<String, JsValue> {
    pushforward_check(sigma, n_samples, seed).map(|v| v.to_string()).map_err(to_js)
}

#[wasm_bindgen]
pub fn gmm_collapse(lr_inputs: f64, lr_params: f64, sigma: f64, steps: usize, seed: u64) -> Result<String, JsValue> {
    gmm_trace(lr_inputs, lr_params, sigma, steps, seed).map(|v| v.to_string()).map_err(to_js)
}
