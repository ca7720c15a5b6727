//! Gaussian and Gaussian-mixture primitives: densities, sampling, moments and
//! closed-form divergences.
//!
//! Covariances are held as a lower-triangular Cholesky factor `L` with
//! `Σ = L·Lᵀ`. Rank-deficient covariances (the low-rank tangent Gaussians of
//! the prototype data model, or pushforwards through a network that narrows
//! dimension) are stored exactly; any operation that needs a log-determinant
//! or an inverse uses `Σ + λ·I` instead, where `λ` is the component's jitter.

use std::borrow::Cow;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{ensure_dim, Error, Result};
use crate::linalg::{self, cholesky_psd, cholesky_spd, log_det_from_factor, solve_lower, solve_lower_matrix};
use crate::rng;

pub const DEFAULT_JITTER: f64 = 1e-6;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

#[derive(Clone, Debug, PartialEq)]
pub struct Gaussian {
    mean: DVector<f64>,
    cov_factor: DMatrix<f64>,
    rank_hint: usize,
    jitter: f64,
}

impl Gaussian {
    /// Builds a Gaussian from a symmetric positive semi-definite covariance.
    pub fn new(mean: DVector<f64>, cov: &DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        if cov.nrows() != d || cov.ncols() != d {
            return Err(Error::DimensionMismatch { expected: d, got: cov.nrows() });
        }
        let asym = (cov - cov.transpose()).abs().max();
        let scale = cov.abs().max().max(1.0);
        if asym > 1e-9 * scale {
            return Err(Error::invalid("covariance is not symmetric"));
        }
        let (l, rank) = cholesky_psd(&linalg::symmetrize(cov));
        let recon = &l * l.transpose();
        if (&recon - cov).abs().max() > 1e-8 * scale {
            return Err(Error::invalid("covariance is not positive semi-definite"));
        }
        Ok(Self { mean, cov_factor: l, rank_hint: rank, jitter: DEFAULT_JITTER })
    }

    /// Builds a Gaussian from a lower-triangular factor with non-negative diagonal.
    pub fn from_factor(mean: DVector<f64>, cov_factor: DMatrix<f64>) -> Result<Self> {
        let d = mean.len();
        ensure_dim(d, cov_factor.nrows())?;
        ensure_dim(d, cov_factor.ncols())?;
        for i in 0..d {
            if cov_factor[(i, i)] < 0.0 || cov_factor[(i, i)].is_nan() {
                return Err(Error::invalid("factor diagonal must be non-negative"));
            }
            for j in (i + 1)..d {
                if cov_factor[(i, j)] != 0.0 {
                    return Err(Error::invalid("factor must be lower-triangular"));
                }
            }
        }
        let rank_hint = (0..d).filter(|&i| cov_factor[(i, i)] > 0.0).count();
        Ok(Self { mean, cov_factor, rank_hint, jitter: DEFAULT_JITTER })
    }

    pub fn isotropic(mean: DVector<f64>, variance: f64) -> Self {
        let d = mean.len();
        let sd = variance.max(0.0).sqrt();
        let l = DMatrix::identity(d, d) * sd;
        let rank_hint = if sd > 0.0 { d } else { 0 };
        Self { mean, cov_factor: l, rank_hint, jitter: DEFAULT_JITTER }
    }

    pub fn standard(dim: usize) -> Self {
        Self::isotropic(DVector::zeros(dim), 1.0)
    }

    /// Sets the ridge added before log-det/inverse when the factor is singular.
    /// A jitter of zero makes such operations fail with `RankDeficient`.
    pub fn with_jitter(mut self, jitter: f64) -> Self {
        self.jitter = jitter.max(0.0);
        self
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov_factor(&self) -> &DMatrix<f64> {
        &self.cov_factor
    }

    pub fn rank_hint(&self) -> usize {
        self.rank_hint
    }

    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn covariance(&self) -> DMatrix<f64> {
        &self.cov_factor * self.cov_factor.transpose()
    }

    pub fn is_full_rank(&self) -> bool {
        self.rank_hint == self.dim()
    }

    /// Factor used for densities and determinants: the stored factor when it
    /// is full rank, otherwise the factor of `Σ + λ·I`.
    pub fn effective_factor(&self) -> Result<Cow<'_, DMatrix<f64>>> {
        if self.is_full_rank() {
            return Ok(Cow::Borrowed(&self.cov_factor));
        }
        if self.jitter <= 0.0 {
            let pivot = (0..self.dim()).find(|&i| self.cov_factor[(i, i)] == 0.0).unwrap_or(0);
            return Err(Error::RankDeficient { pivot, dim: self.dim() });
        }
        let d = self.dim();
        let cov = self.covariance() + DMatrix::identity(d, d) * self.jitter;
        cholesky_spd(&cov).map(Cow::Owned)
    }

    pub fn effective_covariance(&self) -> Result<DMatrix<f64>> {
        let l = self.effective_factor()?;
        Ok(l.as_ref() * l.transpose())
    }

    pub fn log_det_cov(&self) -> Result<f64> {
        Ok(log_det_from_factor(&*self.effective_factor()?))
    }

    /// `log N(x; μ, Σ)` through triangular solves.
    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        ensure_dim(self.dim(), x.len())?;
        let l = self.effective_factor()?;
        let w = solve_lower(&l, &(x - &self.mean));
        let d = self.dim() as f64;
        Ok(-0.5 * (d * LN_2PI + log_det_from_factor(&l) + w.norm_squared()))
    }

    /// `n` i.i.d. draws `μ + L·ε` as the rows of an `n×d` matrix.
    pub fn sample(&self, n: usize, seed: u64) -> DMatrix<f64> {
        self.sample_with(&mut rng::from_seed(seed), n)
    }

    pub fn sample_with(&self, rng: &mut rng::Rng, n: usize) -> DMatrix<f64> {
        let d = self.dim();
        let mut out = DMatrix::zeros(n, d);
        for i in 0..n {
            let eps = DVector::from_fn(d, |_, _| rng::normal(rng));
            let x = &self.mean + &self.cov_factor * eps;
            out.set_row(i, &x.transpose());
        }
        out
    }

    /// Image under the affine map `x ↦ A·x + b`: `N(A·μ + b, A·Σ·Aᵀ)`.
    pub fn affine_image(&self, a: &DMatrix<f64>, b: &DVector<f64>) -> Result<Gaussian> {
        ensure_dim(self.dim(), a.ncols())?;
        ensure_dim(a.nrows(), b.len())?;
        let mean = a * &self.mean + b;
        let af = a * &self.cov_factor;
        let cov = &af * af.transpose();
        Ok(Gaussian::new(mean, &linalg::symmetrize(&cov))?.with_jitter(self.jitter))
    }

    pub fn translated(&self, shift: &DVector<f64>) -> Gaussian {
        let mut g = self.clone();
        g.mean += shift;
        g
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianMixture {
    components: Vec<Gaussian>,
    weights: Vec<f64>,
}

impl GaussianMixture {
    pub fn new(components: Vec<Gaussian>, weights: Vec<f64>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid("mixture needs at least one component"));
        }
        ensure_dim(components.len(), weights.len())?;
        let d = components[0].dim();
        for c in &components {
            ensure_dim(d, c.dim())?;
        }
        if weights.iter().any(|w| !(*w >= 0.0)) {
            return Err(Error::invalid("mixture weights must be non-negative"));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::invalid(format!("mixture weights sum to {total}, not 1")));
        }
        Ok(Self { components, weights })
    }

    /// Normalizes non-negative raw weights before construction.
    pub fn with_raw_weights(components: Vec<Gaussian>, raw: Vec<f64>) -> Result<Self> {
        let total: f64 = raw.iter().sum();
        if !(total > 0.0) {
            return Err(Error::invalid("raw weights must have a positive sum"));
        }
        let mut weights: Vec<f64> = raw.iter().map(|w| w / total).collect();
        // push the rounding residue onto the largest weight
        let residue = 1.0 - weights.iter().sum::<f64>();
        if let Some(imax) = (0..weights.len()).max_by(|&a, &b| weights[a].total_cmp(&weights[b])) {
            weights[imax] += residue;
        }
        Self::new(components, weights)
    }

    pub fn uniform(components: Vec<Gaussian>) -> Result<Self> {
        let k = components.len().max(1);
        Self::with_raw_weights(components, vec![1.0; k])
    }

    pub fn single(g: Gaussian) -> Self {
        Self { components: vec![g], weights: vec![1.0] }
    }

    pub fn components(&self) -> &[Gaussian] {
        &self.components
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn dim(&self) -> usize {
        self.components[0].dim()
    }

    pub fn len(&self) -> usize {
        self.components.len()
    }

    pub fn is_empty(&self) -> bool {
        self.components.is_empty()
    }

    pub fn with_jitter(mut self, jitter: f64) -> Self {
        self.components = self.components.into_iter().map(|c| c.with_jitter(jitter)).collect();
        self
    }

    /// `log Σᵢ wᵢ N(x; μᵢ, Σᵢ)` with a log-sum-exp reduction.
    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        let mut terms = Vec::with_capacity(self.len());
        for (c, w) in self.components.iter().zip(&self.weights) {
            if *w > 0.0 {
                terms.push(w.ln() + c.log_density(x)?);
            }
        }
        Ok(log_sum_exp(&terms))
    }

    /// Draws `n` samples; also returns the component index of each row.
    pub fn sample_labeled(&self, rng: &mut rng::Rng, n: usize) -> (DMatrix<f64>, Vec<usize>) {
        let d = self.dim();
        let mut out = DMatrix::zeros(n, d);
        let mut labels = Vec::with_capacity(n);
        let mut cumulative = Vec::with_capacity(self.len());
        let mut acc = 0.0;
        for w in &self.weights {
            acc += w;
            cumulative.push(acc);
        }
        for i in 0..n {
            let u = rng::uniform(rng, 0.0, 1.0);
            let k = cumulative.iter().position(|&c| u < c).unwrap_or(self.len() - 1);
            let c = &self.components[k];
            let eps = DVector::from_fn(d, |_, _| rng::normal(rng));
            let x = c.mean() + c.cov_factor() * eps;
            out.set_row(i, &x.transpose());
            labels.push(k);
        }
        (out, labels)
    }

    pub fn sample(&self, n: usize, seed: u64) -> DMatrix<f64> {
        self.sample_labeled(&mut rng::from_seed(seed), n).0
    }

    /// Every component mean and covariance multiplied by `s` and `s²`.
    pub fn scaled(&self, s: f64) -> Result<Self> {
        let components = self
            .components
            .iter()
            .map(|c| {
                Gaussian::from_factor(c.mean() * s, c.cov_factor() * s.abs()).map(|g| g.with_jitter(c.jitter()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { components, weights: self.weights.clone() })
    }

    pub fn translated(&self, shift: &DVector<f64>) -> Self {
        Self {
            components: self.components.iter().map(|c| c.translated(shift)).collect(),
            weights: self.weights.clone(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&MixtureDoc::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: MixtureDoc = serde_json::from_str(text)?;
        doc.try_into()
    }
}

/// Wire form of a mixture: `{weights: [...], components: [{mean: [...], cov: [[...]]}]}`.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureDoc {
    pub weights: Vec<f64>,
    pub components: Vec<ComponentDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentDoc {
    pub mean: Vec<f64>,
    pub cov: Vec<Vec<f64>>,
}

impl From<&GaussianMixture> for MixtureDoc {
    fn from(m: &GaussianMixture) -> Self {
        MixtureDoc {
            weights: m.weights.clone(),
            components: m
                .components
                .iter()
                .map(|c| {
                    let cov = c.covariance();
                    ComponentDoc {
                        mean: c.mean().iter().copied().collect(),
                        cov: cov.row_iter().map(|r| r.iter().copied().collect()).collect(),
                    }
                })
                .collect(),
        }
    }
}

impl TryFrom<MixtureDoc> for GaussianMixture {
    type Error = Error;

    fn try_from(doc: MixtureDoc) -> Result<Self> {
        let components = doc
            .components
            .into_iter()
            .map(|c| {
                let d = c.mean.len();
                if c.cov.len() != d || c.cov.iter().any(|r| r.len() != d) {
                    return Err(Error::invalid("component covariance must be d×d"));
                }
                let cov = DMatrix::from_fn(d, d, |i, j| c.cov[i][j]);
                Gaussian::new(DVector::from_vec(c.mean), &cov)
            })
            .collect::<Result<Vec<_>>>()?;
        GaussianMixture::new(components, doc.weights)
    }
}

pub fn log_sum_exp(terms: &[f64]) -> f64 {
    let max = terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln()
}

/// First two moments of a mixture: `Σ wᵢ μᵢ` and `Σ wᵢ (Σᵢ + μᵢμᵢᵀ) − μμᵀ`.
pub fn mixture_moments(m: &GaussianMixture) -> (DVector<f64>, DMatrix<f64>) {
    let d = m.dim();
    let mut mean = DVector::zeros(d);
    for (c, w) in m.components.iter().zip(&m.weights) {
        mean += c.mean() * *w;
    }
    let mut cov = DMatrix::zeros(d, d);
    for (c, w) in m.components.iter().zip(&m.weights) {
        let dm = c.mean() - &mean;
        cov += (c.covariance() + &dm * dm.transpose()) * *w;
    }
    (mean, linalg::symmetrize(&cov))
}

/// Closed-form `KL(p ‖ q)` between Gaussians.
pub fn kl_divergence(p: &Gaussian, q: &Gaussian) -> Result<f64> {
    ensure_dim(p.dim(), q.dim())?;
    let lp = p.effective_factor()?;
    let lq = q.effective_factor()?;
    let d = p.dim() as f64;
    let trace = solve_lower_matrix(&lq, &lp).norm_squared();
    let maha = solve_lower(&lq, &(q.mean() - p.mean())).norm_squared();
    let kl = 0.5 * (trace + maha - d + log_det_from_factor(&lq) - log_det_from_factor(&lp));
    Ok(kl.max(0.0))
}

/// Bhattacharyya distance (Chernoff distance at α = ½).
pub fn bhattacharyya_distance(p: &Gaussian, q: &Gaussian) -> Result<f64> {
    ensure_dim(p.dim(), q.dim())?;
    let cp = p.effective_covariance()?;
    let cq = q.effective_covariance()?;
    let avg = (&cp + &cq) * 0.5;
    let lavg = cholesky_spd(&avg)?;
    let maha = solve_lower(&lavg, &(q.mean() - p.mean())).norm_squared();
    let ld = log_det_from_factor(&lavg) - 0.5 * (p.log_det_cov()? + q.log_det_cov()?);
    Ok((0.125 * maha + 0.5 * ld).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn vec(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    #[test]
    fn standard_normal_mode() {
        let g = Gaussian::standard(1);
        assert_relative_eq!(g.log_density(&vec(&[0.0])).unwrap(), -0.5 * (2.0 * std::f64::consts::PI).ln(), epsilon = 1e-14);
        assert_relative_eq!(g.log_density(&vec(&[0.0])).unwrap(), -0.918_938_533_204_672_7, epsilon = 1e-12);
    }

    #[test]
    fn isotropic_mode_any_dim() {
        let mu = vec(&[1.0, -2.0, 3.0, 0.5]);
        let g = Gaussian::isotropic(mu.clone(), 1.0);
        assert_relative_eq!(g.log_density(&mu).unwrap(), -2.0 * LN_2PI, epsilon = 1e-12);
    }

    #[test]
    fn rank_deficient_without_jitter_errors() {
        let u = DMatrix::from_row_slice(2, 1, &[1.0, 1.0]);
        let g = Gaussian::new(vec(&[0.0, 0.0]), &(&u * u.transpose())).unwrap().with_jitter(0.0);
        assert!(matches!(g.log_density(&vec(&[0.0, 0.0])), Err(Error::RankDeficient { .. })));
        let jittered = g.with_jitter(1e-6);
        assert!(jittered.log_density(&vec(&[0.0, 0.0])).unwrap().is_finite());
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let g = Gaussian::standard(2);
        assert!(matches!(g.log_density(&vec(&[0.0])), Err(Error::DimensionMismatch { .. })));
        assert!(kl_divergence(&g, &Gaussian::standard(3)).is_err());
        assert!(bhattacharyya_distance(&g, &Gaussian::standard(3)).is_err());
    }

    #[test]
    fn zero_covariance_samples_equal_mean() {
        let mu = vec(&[2.0, -1.0]);
        let g = Gaussian::isotropic(mu.clone(), 0.0);
        let s = g.sample(17, 3);
        for r in s.row_iter() {
            assert_eq!(r.transpose(), mu);
        }
    }

    #[test]
    fn mixture_moments_two_points() {
        let m = GaussianMixture::uniform(vec![
            Gaussian::isotropic(vec(&[1.0]), 0.0),
            Gaussian::isotropic(vec(&[-1.0]), 0.0),
        ])
        .unwrap();
        let (mean, cov) = mixture_moments(&m);
        assert_relative_eq!(mean[0], 0.0);
        assert_relative_eq!(cov[(0, 0)], 1.0);
    }

    #[test]
    fn kl_mean_shift() {
        let p = Gaussian::standard(1);
        let q = Gaussian::isotropic(vec(&[1.0]), 1.0);
        assert_relative_eq!(kl_divergence(&p, &q).unwrap(), 0.5, epsilon = 1e-14);
        assert_relative_eq!(kl_divergence(&p, &p).unwrap(), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn bhattacharyya_equal_variance() {
        let p = Gaussian::standard(1);
        let q = Gaussian::isotropic(vec(&[2.0]), 1.0);
        assert_relative_eq!(bhattacharyya_distance(&p, &q).unwrap(), 0.5, epsilon = 1e-14);
        assert_eq!(bhattacharyya_distance(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn weights_must_sum_to_one() {
        let c = vec![Gaussian::standard(1), Gaussian::standard(1)];
        assert!(GaussianMixture::new(c.clone(), vec![0.5, 0.6]).is_err());
        assert!(GaussianMixture::new(c.clone(), vec![1.0]).is_err());
        assert!(GaussianMixture::new(vec![], vec![]).is_err());
        assert!(GaussianMixture::with_raw_weights(c, vec![1.0, 3.0]).is_ok());
    }

    #[test]
    fn json_roundtrip() {
        let m = GaussianMixture::new(
            vec![
                Gaussian::new(vec(&[0.0, 1.0]), &DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0])).unwrap(),
                Gaussian::isotropic(vec(&[3.0, -1.0]), 0.25),
            ],
            vec![0.25, 0.75],
        )
        .unwrap();
        let back = GaussianMixture::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(back.weights(), m.weights());
        for (a, b) in back.components().iter().zip(m.components()) {
            assert_relative_eq!(a.covariance(), b.covariance(), epsilon = 1e-12);
            assert_eq!(a.mean(), b.mean());
        }
    }

    #[test]
    fn json_rejects_unknown_keys() {
        let text = r#"{"weights":[1.0],"components":[{"mean":[0.0],"cov":[[1.0]]}],"extra":1}"#;
        assert!(GaussianMixture::from_json(text).is_err());
    }
}
