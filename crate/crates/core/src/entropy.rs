//! Differential-entropy estimators for Gaussian mixtures and embedding
//! batches. All values are in nats.
//!
//! The Monte-Carlo estimate is the reference against which the closed-form
//! bounds are checked: the moment-matched Gaussian is an upper bound, and the
//! pairwise-distance family sandwiches the true entropy with the
//! Bhattacharyya distance (lower) and the KL divergence (upper).

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cpa_net::{Tape, Var};
use crate::error::{Error, Result};
use crate::gaussian::{bhattacharyya_distance, kl_divergence, log_sum_exp, mixture_moments, Gaussian, GaussianMixture};
use crate::linalg::{cholesky_spd, inverse_from_factor, log_det_from_factor};
use crate::rng;

/// `ln(2πe)`
pub const LN_2PI_E: f64 = 2.837_877_066_409_345_5;

/// Number of seed shards a Monte-Carlo estimate is split into.
pub const MC_SHARDS: usize = 16;

pub const MIN_MC_SAMPLES: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    MonteCarlo,
    MomentUpper,
    PairwiseLower,
    PairwiseUpper,
    LogDet,
    ClosedFormGaussian,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::MonteCarlo => "monte_carlo",
            EstimatorKind::MomentUpper => "moment_upper",
            EstimatorKind::PairwiseLower => "pairwise_lower",
            EstimatorKind::PairwiseUpper => "pairwise_upper",
            EstimatorKind::LogDet => "logdet",
            EstimatorKind::ClosedFormGaussian => "closed_form_gaussian",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntropyEstimate {
    pub value: f64,
    pub kind: EstimatorKind,
    /// Present only for Monte-Carlo estimates.
    pub std_error: Option<f64>,
    pub n_samples: Option<usize>,
}

impl EntropyEstimate {
    fn exact(value: f64, kind: EstimatorKind) -> Self {
        Self { value, kind, std_error: None, n_samples: None }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairwiseSide {
    /// Bhattacharyya (Chernoff α = ½) distance.
    Lower,
    /// KL divergence.
    Upper,
}

/// `½·log det(2πe·Σ)`.
pub fn gaussian_entropy(g: &Gaussian) -> Result<EntropyEstimate> {
    let d = g.dim() as f64;
    let value = 0.5 * (d * LN_2PI_E + g.log_det_cov()?);
    Ok(EntropyEstimate::exact(value, EstimatorKind::ClosedFormGaussian))
}

/// `−(1/n)·Σ log p(xᵢ)` over `n` mixture samples, split into
/// [`MC_SHARDS`] independently seeded shards combined in shard order.
pub fn mc_entropy(m: &GaussianMixture, n: usize, seed: u64) -> Result<EntropyEstimate> {
    if n < MIN_MC_SAMPLES {
        return Err(Error::InsufficientSamples { needed: MIN_MC_SAMPLES, got: n });
    }
    // force factorization errors to surface before spawning work
    for c in m.components() {
        c.effective_factor()?;
    }
    let shards = MC_SHARDS.min(n);
    let per = n / shards;
    let extra = n % shards;
    let partials = rng::sharded(shards, |s| -> Result<(f64, f64)> {
        let count = per + usize::from(s < extra);
        let mut r = rng::from_seed(rng::derive(seed, s as u64));
        let (x, _) = m.sample_labeled(&mut r, count);
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for row in x.row_iter() {
            let v = -m.log_density(&row.transpose())?;
            sum += v;
            sum_sq += v * v;
        }
        Ok((sum, sum_sq))
    });
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for p in partials {
        let (s, q) = p?;
        sum += s;
        sum_sq += q;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = ((sum_sq - nf * mean * mean) / (nf - 1.0)).max(0.0);
    if !mean.is_finite() {
        return Err(Error::non_finite("Monte-Carlo entropy"));
    }
    Ok(EntropyEstimate { value: mean, kind: EstimatorKind::MonteCarlo, std_error: Some((var / nf).sqrt()), n_samples: Some(n) })
}

/// Entropy of the moment-matched Gaussian; never below the mixture entropy.
pub fn moment_upper_bound(m: &GaussianMixture) -> Result<EntropyEstimate> {
    let (mean, cov) = mixture_moments(m);
    let jitter = m.components().iter().map(|c| c.jitter()).fold(0.0, f64::max);
    let g = Gaussian::new(mean, &cov)?.with_jitter(jitter);
    let mut e = gaussian_entropy(&g)?;
    e.kind = EstimatorKind::MomentUpper;
    Ok(e)
}

fn pairwise_distance(p: &Gaussian, q: &Gaussian, side: PairwiseSide) -> Result<f64> {
    match side {
        PairwiseSide::Lower => bhattacharyya_distance(p, q),
        PairwiseSide::Upper => kl_divergence(p, q),
    }
}

/// Pairwise-distance estimator
/// `Σᵢ wᵢ H(pᵢ) − Σᵢ wᵢ log Σⱼ wⱼ exp(−D(pᵢ, pⱼ))`.
pub fn pairwise_bound(m: &GaussianMixture, side: PairwiseSide) -> Result<EntropyEstimate> {
    let (value, _) = pairwise_core(m, side, false)?;
    Ok(value)
}

/// Pairwise estimator together with its gradient with respect to every
/// component mean (covariances held fixed).
pub fn pairwise_bound_with_mean_grad(m: &GaussianMixture, side: PairwiseSide) -> Result<(EntropyEstimate, Vec<DVector<f64>>)> {
    let (value, grads) = pairwise_core(m, side, true)?;
    Ok((value, grads.expect("gradients requested")))
}

#[allow(clippy::type_complexity)]
fn pairwise_core(m: &GaussianMixture, side: PairwiseSide, with_grad: bool) -> Result<(EntropyEstimate, Option<Vec<DVector<f64>>>)> {
    let k = m.len();
    let comps = m.components();
    let w = m.weights();
    let mut dist = DMatrix::zeros(k, k);
    for i in 0..k {
        for j in 0..k {
            if i != j {
                dist[(i, j)] = pairwise_distance(&comps[i], &comps[j], side)?;
            }
        }
    }
    let mut value = 0.0;
    let mut resp = DMatrix::zeros(k, k);
    for i in 0..k {
        value += w[i] * gaussian_entropy(&comps[i])?.value;
        let terms: Vec<f64> = (0..k).map(|j| if w[j] > 0.0 { w[j].ln() - dist[(i, j)] } else { f64::NEG_INFINITY }).collect();
        let lse = log_sum_exp(&terms);
        value -= w[i] * lse;
        for j in 0..k {
            resp[(i, j)] = (terms[j] - lse).exp();
        }
    }
    let kind = match side {
        PairwiseSide::Lower => EstimatorKind::PairwiseLower,
        PairwiseSide::Upper => EstimatorKind::PairwiseUpper,
    };
    let estimate = EntropyEstimate::exact(value, kind);
    if !with_grad {
        return Ok((estimate, None));
    }
    // ∂Ĥ/∂D_ij = wᵢ·r_ij ; D depends on means through a quadratic form in Δ = μⱼ − μᵢ
    let d = m.dim();
    let mut grads = vec![DVector::zeros(d); k];
    let covs = comps.iter().map(|c| c.effective_covariance()).collect::<Result<Vec<_>>>()?;
    let inv_cov: Vec<DMatrix<f64>> = match side {
        PairwiseSide::Upper => covs.iter().map(|c| cholesky_spd(c).map(|l| inverse_from_factor(&l))).collect::<Result<_>>()?,
        PairwiseSide::Lower => Vec::new(),
    };
    for i in 0..k {
        for j in 0..k {
            if i == j {
                continue;
            }
            let coef = w[i] * resp[(i, j)];
            if coef == 0.0 {
                continue;
            }
            let delta = comps[j].mean() - comps[i].mean();
            let dd_dmuj = match side {
                PairwiseSide::Lower => {
                    let avg = (&covs[i] + &covs[j]) * 0.5;
                    inverse_from_factor(&cholesky_spd(&avg)?) * &delta * 0.25
                }
                PairwiseSide::Upper => &inv_cov[j] * &delta,
            };
            grads[j] += &dd_dmuj * coef;
            grads[i] -= &dd_dmuj * coef;
        }
    }
    Ok((estimate, Some(grads)))
}

/// Batch LogDet entropy
/// `½·log det(I + K/(N·β)·ZᶜᵀZᶜ) + (K/2)·log(2πe·β/K)` with `Zᶜ` the
/// column-centered N×K batch.
pub fn logdet_batch_entropy(z: &DMatrix<f64>, beta: f64) -> Result<EntropyEstimate> {
    let mut tape = Tape::new();
    let zv = tape.leaf(z.clone());
    let h = logdet_entropy_on_tape(&mut tape, zv, beta)?;
    Ok(EntropyEstimate::exact(tape.scalar(h), EstimatorKind::LogDet))
}

pub fn logdet_entropy_on_tape(tape: &mut Tape, z: Var, beta: f64) -> Result<Var> {
    let (n, k) = tape.value(z).shape();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    if !(beta > 0.0) {
        return Err(Error::invalid("logdet beta must be positive"));
    }
    let kf = k as f64;
    let zc = tape.center_columns(z);
    let zt = tape.transpose(zc);
    let gram = tape.matmul(zt, zc)?;
    let scaled = tape.scale(gram, kf / (n as f64 * beta));
    let eye = tape.leaf(DMatrix::identity(k, k));
    let m = tape.add(scaled, eye)?;
    let ld = tape.log_det_spd(m)?;
    let half = tape.scale(ld, 0.5);
    Ok(tape.add_scalar(half, 0.5 * kf * (LN_2PI_E + (beta / kf).ln())))
}

/// Pairwise lower bound for the equal-weight mixture of `N(zᵢ, s²·I)`
/// components centered on the batch rows.
pub fn pairwise_lower_batch(z: &DMatrix<f64>, bandwidth: f64) -> Result<EntropyEstimate> {
    let mut tape = Tape::new();
    let zv = tape.leaf(z.clone());
    let h = pairwise_lower_on_tape(&mut tape, zv, bandwidth)?;
    Ok(EntropyEstimate::exact(tape.scalar(h), EstimatorKind::PairwiseLower))
}

/// Differentiable form of [`pairwise_lower_batch`]. For isotropic components
/// of equal variance the Bhattacharyya distance is `‖zᵢ − zⱼ‖² / (8s²)`.
pub fn pairwise_lower_on_tape(tape: &mut Tape, z: Var, bandwidth: f64) -> Result<Var> {
    let (n, k) = tape.value(z).shape();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    if !(bandwidth > 0.0) {
        return Err(Error::invalid("pairwise bandwidth must be positive"));
    }
    let d2 = tape.pairwise_sq_dist(z);
    let neg = tape.scale(d2, -1.0 / (8.0 * bandwidth));
    let lse = tape.log_sum_exp_rows(neg);
    let mean_lse = tape.mean(lse);
    let nf = n as f64;
    let component = 0.5 * k as f64 * (LN_2PI_E + bandwidth.ln());
    // −(1/N)Σᵢ log((1/N)Σⱼ e^{−D}) = −mean(lse) + log N
    let neg_mean = tape.neg(mean_lse);
    Ok(tape.add_scalar(neg_mean, component + nf.ln()))
}

/// Entropy of the Gaussian matched to the batch's first two moments,
/// `½·log det(2πe·(C + λI))`.
pub fn moment_batch_on_tape(tape: &mut Tape, z: Var, jitter: f64) -> Result<Var> {
    let (n, k) = tape.value(z).shape();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    let zc = tape.center_columns(z);
    let zt = tape.transpose(zc);
    let gram = tape.matmul(zt, zc)?;
    let cov = tape.scale(gram, 1.0 / (n as f64 - 1.0));
    let ridge = tape.leaf(DMatrix::identity(k, k) * jitter);
    let reg = tape.add(cov, ridge)?;
    let ld = tape.log_det_spd(reg)?;
    let half = tape.scale(ld, 0.5);
    Ok(tape.add_scalar(half, 0.5 * k as f64 * LN_2PI_E))
}

/// `½·log det` of a matrix from its Cholesky factor; exposed for callers that
/// assemble entropies from precomputed covariances.
pub fn half_log_det(cov: &DMatrix<f64>) -> Result<f64> {
    Ok(0.5 * log_det_from_factor(&cholesky_spd(cov)?))
}
