//! Empirical checks: D'Agostino–Pearson normality testing of network
//! outputs, pairwise-distance histograms, and a small GMM laboratory that
//! exhibits collapse when the inputs are trained alongside the centroids.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cpa_net::PwaNetwork;
use crate::datagen::{format_float, PrototypeDataset};
use crate::entropy::{pairwise_bound, PairwiseSide, LN_2PI_E};
use crate::error::{Error, Result};
use crate::gaussian::{log_sum_exp, Gaussian, GaussianMixture};
use crate::linalg::{cholesky_spd, log_det_from_factor, solve_lower, symmetrize};
use crate::rng;

pub const MIN_NORMALITY_SAMPLES: usize = 20;
pub const REJECT_LEVEL: f64 = 0.01;

/// Omnibus K² statistic with its χ²(2) p-value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalityTest {
    pub z_skew: f64,
    pub z_kurt: f64,
    pub k2: f64,
    pub p_value: f64,
}

/// D'Agostino–Pearson test of the null that `x` is normally distributed.
pub fn dagostino_pearson_test(x: &[f64]) -> Result<NormalityTest> {
    let n = x.len();
    if n < MIN_NORMALITY_SAMPLES {
        return Err(Error::InsufficientSamples { needed: MIN_NORMALITY_SAMPLES, got: n });
    }
    let nf = n as f64;
    let mean = x.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for v in x {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    if !(m2 > 0.0) || m2 <= f64::EPSILON * mean.abs().max(1.0).powi(2) * 1e-6 {
        return Err(Error::invalid("degenerate sample: zero variance"));
    }
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2);

    // skewness transform
    let y = skew * ((nf + 1.0) * (nf + 3.0) / (6.0 * (nf - 2.0))).sqrt();
    let beta2 = 3.0 * (nf * nf + 27.0 * nf - 70.0) * (nf + 1.0) * (nf + 3.0) / ((nf - 2.0) * (nf + 5.0) * (nf + 7.0) * (nf + 9.0));
    let w2 = -1.0 + (2.0 * (beta2 - 1.0)).sqrt();
    let delta = 1.0 / (0.5 * w2.ln()).sqrt();
    let alpha = (2.0 / (w2 - 1.0)).sqrt();
    let ya = if y == 0.0 { 1.0 / alpha } else { y / alpha };
    let z_skew = delta * (ya + (ya * ya + 1.0).sqrt()).ln();

    // kurtosis transform
    let e = 3.0 * (nf - 1.0) / (nf + 1.0);
    let var_b2 = 24.0 * nf * (nf - 2.0) * (nf - 3.0) / ((nf + 1.0) * (nf + 1.0) * (nf + 3.0) * (nf + 5.0));
    let xk = (kurt - e) / var_b2.sqrt();
    let sqrt_beta1 = 6.0 * (nf * nf - 5.0 * nf + 2.0) / ((nf + 7.0) * (nf + 9.0)) * (6.0 * (nf + 3.0) * (nf + 5.0) / (nf * (nf - 2.0) * (nf - 3.0))).sqrt();
    let a = 6.0 + 8.0 / sqrt_beta1 * (2.0 / sqrt_beta1 + (1.0 + 4.0 / (sqrt_beta1 * sqrt_beta1)).sqrt());
    let term1 = 1.0 - 2.0 / (9.0 * a);
    let denom = 1.0 + xk * (2.0 / (a - 4.0)).sqrt();
    if denom == 0.0 {
        return Err(Error::non_finite("kurtosis transform"));
    }
    let term2 = denom.signum() * ((1.0 - 2.0 / a) / denom.abs()).cbrt();
    let z_kurt = (term1 - term2) / (2.0 / (9.0 * a)).sqrt();

    let k2 = z_skew * z_skew + z_kurt * z_kurt;
    let p_value = (-0.5 * k2).exp().clamp(0.0, 1.0);
    if !p_value.is_finite() {
        return Err(Error::non_finite("normality p-value"));
    }
    Ok(NormalityTest { z_skew, z_kurt, k2, p_value })
}

pub fn dagostino_pearson(x: &[f64]) -> Result<f64> {
    Ok(dagostino_pearson_test(x)?.p_value)
}

/// Per-dimension tests of one output cloud, Bonferroni-combined.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CloudTest {
    pub prototype: usize,
    pub p_values: Vec<f64>,
    /// `min(1, K·min pₖ)`
    pub combined_p: f64,
    pub reject: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalityReport {
    pub noise_scale: f64,
    pub n_samples: usize,
    /// Samples were constant in some output dimension; nothing was tested.
    pub degenerate: bool,
    pub clouds: Vec<CloudTest>,
    /// Median Bonferroni-combined p-value across prototypes.
    pub omnibus_p: f64,
    pub rejection_fraction: f64,
    pub reject_at_99: bool,
}

/// Bonferroni-combined normality test of the columns of `y`.
pub fn test_cloud(y: &DMatrix<f64>, prototype: usize) -> Result<CloudTest> {
    let k = y.ncols();
    let p_values = (0..k).map(|j| dagostino_pearson(y.column(j).as_slice())).collect::<Result<Vec<_>>>()?;
    let min_p = p_values.iter().cloned().fold(1.0, f64::min);
    let combined_p = (k as f64 * min_p).min(1.0);
    Ok(CloudTest { prototype, p_values, combined_p, reject: combined_p < REJECT_LEVEL })
}

fn median(v: &mut [f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// For each noise scale, pushes `n_per_point` draws from every prototype's
/// Gaussian through `net` and tests the output clouds for normality.
pub fn gaussianity_sweep(net: &PwaNetwork, ds: &PrototypeDataset, noise_grid: &[f64], n_per_point: usize, seed: u64) -> Result<Vec<NormalityReport>> {
    if noise_grid.is_empty() {
        return Err(Error::invalid("noise grid is empty"));
    }
    if n_per_point < MIN_NORMALITY_SAMPLES {
        return Err(Error::InsufficientSamples { needed: MIN_NORMALITY_SAMPLES, got: n_per_point });
    }
    crate::error::ensure_dim(net.input_dim(), ds.prototypes().ncols())?;
    let reports = rng::sharded(noise_grid.len(), |g| -> Result<NormalityReport> {
        let sigma = noise_grid[g];
        if !(sigma >= 0.0) {
            return Err(Error::invalid(format!("noise scale {sigma} is negative")));
        }
        let scaled = ds.with_noise_scale(sigma);
        let mut r = rng::from_seed(rng::derive(seed, g as u64));
        let mut clouds = Vec::with_capacity(ds.len());
        let mut degenerate = false;
        for i in 0..ds.len() {
            let mut x = DMatrix::zeros(n_per_point, ds.prototypes().ncols());
            for row in 0..n_per_point {
                x.set_row(row, &scaled.draw(&mut r, i).transpose());
            }
            let y = net.forward_batch(&x)?;
            match test_cloud(&y, i) {
                Ok(c) => clouds.push(c),
                Err(Error::InvalidArgument(_)) => {
                    degenerate = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        if degenerate {
            return Ok(NormalityReport { noise_scale: sigma, n_samples: n_per_point, degenerate, clouds: Vec::new(), omnibus_p: f64::NAN, rejection_fraction: f64::NAN, reject_at_99: false });
        }
        let mut ps: Vec<f64> = clouds.iter().map(|c| c.combined_p).collect();
        let omnibus_p = median(&mut ps);
        let rejection_fraction = clouds.iter().filter(|c| c.reject).count() as f64 / clouds.len() as f64;
        Ok(NormalityReport { noise_scale: sigma, n_samples: n_per_point, degenerate, clouds, omnibus_p, rejection_fraction, reject_at_99: omnibus_p < REJECT_LEVEL })
    });
    reports.into_iter().collect()
}

/// `noise_scale,p_value,rejection_fraction` rows; degenerate points are written as `nan`.
pub fn write_sweep_csv<W: Write>(w: W, reports: &[NormalityReport]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["noise_scale", "p_value", "rejection_fraction", "degenerate"])?;
    for r in reports {
        wr.write_record([format_float(r.noise_scale), format_float(r.omnibus_p), format_float(r.rejection_fraction), r.degenerate.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    crate::error::ensure_dim(x.len(), y.len())?;
    if x.len() < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: x.len() });
    }
    let rx = ranks(x);
    let ry = ranks(y);
    let n = x.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in rx.iter().zip(&ry) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Ok(0.0);
    }
    Ok(sxy / (sxx * syy).sqrt())
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let rank = 0.5 * (i + j) as f64 + 1.0;
        for &k in &idx[i..=j] {
            out[k] = rank;
        }
        i = j + 1;
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DistanceHistogram {
    /// `n_bins + 1` edges spanning `[0, max]`.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
    pub total: u64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

/// Histogram of all `n(n−1)/2` pairwise Euclidean distances between rows.
/// The last bin is closed on the right.
pub fn pairwise_distance_histogram(points: &DMatrix<f64>, n_bins: usize) -> Result<DistanceHistogram> {
    let n = points.nrows();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    if n_bins == 0 {
        return Err(Error::invalid("n_bins must be >= 1"));
    }
    let mut d = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            d.push((points.row(i) - points.row(j)).norm());
        }
    }
    if d.iter().any(|v| !v.is_finite()) {
        return Err(Error::non_finite("pairwise distance"));
    }
    let max = d.iter().cloned().fold(0.0, f64::max);
    let width = if max > 0.0 { max / n_bins as f64 } else { 1.0 };
    let edges: Vec<f64> = (0..=n_bins).map(|b| if b == n_bins && max > 0.0 { max } else { b as f64 * width }).collect();
    let mut counts = vec![0u64; n_bins];
    for &v in &d {
        counts[bin_index(v, width, n_bins)] += 1;
    }
    let total = d.len() as u64;
    let min = d.iter().cloned().fold(f64::INFINITY, f64::min);
    let median = median(&mut d);
    Ok(DistanceHistogram { edges, counts, total, min, median, max })
}

/// Bin of a distance `v` for equal-width bins starting at 0.
pub fn bin_index(v: f64, width: f64, n_bins: usize) -> usize {
    ((v / width).floor() as usize).min(n_bins - 1)
}

pub fn write_histogram_csv<W: Write>(w: W, h: &DistanceHistogram) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["bin_left", "count"])?;
    for (b, c) in h.counts.iter().enumerate() {
        wr.write_record([format_float(h.edges[b]), c.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovMode {
    /// Learned full covariances, initialized to the identity.
    Full,
    /// Fixed isotropic covariance `σ²·I`.
    FixedSmall { sigma: f64 },
}

/// Variance of the isotropic kernels used for the centroid entropy; it makes
/// each kernel's entropy exactly 0, so the estimate lies in `[0, log K]`.
pub const ENTROPY_KERNEL_VAR: f64 = 1.0 / (2.0 * std::f64::consts::PI * std::f64::consts::E);

/// Floor added to learned covariance diagonals.
const COV_FLOOR: f64 = 1e-9;

/// Equal-weight GMM whose centroids, covariances and (optionally) input
/// points are moved by covariance-preconditioned likelihood ascent.
#[derive(Clone, Debug, PartialEq)]
pub struct GmmLabState {
    pub centroids: DMatrix<f64>,
    pub covariances: Vec<DMatrix<f64>>,
    pub cov_mode: CovMode,
    pub inputs: DMatrix<f64>,
    pub lr_inputs: f64,
    pub lr_params: f64,
    pub centroid_entropy: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GmmTracePoint {
    pub step: usize,
    pub centroid_entropy: f64,
    pub mean_log_likelihood: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GmmRun {
    pub trace: Vec<GmmTracePoint>,
    pub final_state: GmmLabState,
    pub abort: Option<String>,
}

/// Pairwise (Bhattacharyya) entropy of the centroid mixture with isotropic
/// kernels of variance [`ENTROPY_KERNEL_VAR`].
pub fn centroid_entropy(centroids: &DMatrix<f64>) -> Result<f64> {
    let comps = centroids.row_iter().map(|r| Gaussian::isotropic(r.transpose(), ENTROPY_KERNEL_VAR)).collect();
    let m = GaussianMixture::uniform(comps)?;
    let h = pairwise_bound(&m, PairwiseSide::Lower)?.value;
    // kernel entropy is 0 by construction; clear rounding
    let d = centroids.ncols() as f64;
    Ok(h - 0.5 * d * (LN_2PI_E + ENTROPY_KERNEL_VAR.ln()))
}

impl GmmLabState {
    /// Centroids start at distinct random inputs; learned covariances start
    /// at the identity.
    pub fn new(inputs: DMatrix<f64>, n_components: usize, cov_mode: CovMode, lr_inputs: f64, lr_params: f64, seed: u64) -> Result<Self> {
        let (n, d) = inputs.shape();
        if n_components == 0 || n_components > n {
            return Err(Error::invalid(format!("need 1..={n} components, got {n_components}")));
        }
        if let CovMode::FixedSmall { sigma } = cov_mode {
            if !(sigma > 0.0) {
                return Err(Error::invalid("FixedSmall sigma must be > 0"));
            }
        }
        for lr in [lr_inputs, lr_params] {
            if !(0.0..=1.0).contains(&lr) {
                return Err(Error::invalid(format!("learning rates are step fractions in [0, 1], got {lr}")));
            }
        }
        let perm = rng::permutation(&mut rng::from_seed(seed), n);
        let centroids = DMatrix::from_fn(n_components, d, |k, j| inputs[(perm[k], j)]);
        let cov = match cov_mode {
            CovMode::Full => DMatrix::identity(d, d),
            CovMode::FixedSmall { sigma } => DMatrix::identity(d, d) * (sigma * sigma),
        };
        let centroid_entropy = centroid_entropy(&centroids)?;
        Ok(Self { centroids, covariances: vec![cov; n_components], cov_mode, inputs, lr_inputs, lr_params, centroid_entropy })
    }

    /// Responsibilities (N×K) and mean log-likelihood.
    fn e_step(&self, factors: &[DMatrix<f64>]) -> Result<(DMatrix<f64>, f64)> {
        let (n, d) = self.inputs.shape();
        let k = self.centroids.nrows();
        let log_w = -(k as f64).ln();
        let consts: Vec<f64> = factors.iter().map(|l| -0.5 * (d as f64 * (2.0 * std::f64::consts::PI).ln() + log_det_from_factor(l))).collect();
        let mut resp = DMatrix::zeros(n, k);
        let mut ll = 0.0;
        let mut terms = vec![0.0; k];
        for i in 0..n {
            for c in 0..k {
                let diff = (self.inputs.row(i) - self.centroids.row(c)).transpose();
                let y = solve_lower(&factors[c], &diff);
                terms[c] = log_w + consts[c] - 0.5 * y.norm_squared();
            }
            let lse = log_sum_exp(&terms);
            ll += lse;
            for c in 0..k {
                resp[(i, c)] = (terms[c] - lse).exp();
            }
        }
        Ok((resp, ll / n as f64))
    }

    fn factors(&self) -> Result<Vec<DMatrix<f64>>> {
        self.covariances.iter().map(cholesky_spd).collect()
    }

    pub fn mean_log_likelihood(&self) -> Result<f64> {
        Ok(self.e_step(&self.factors()?)?.1)
    }

    /// One simultaneous update of centroids, covariances and inputs.
    fn step(&mut self) -> Result<f64> {
        let factors = self.factors()?;
        let (resp, ll) = self.e_step(&factors)?;
        let (n, d) = self.inputs.shape();
        let k = self.centroids.nrows();
        let mut new_centroids = self.centroids.clone();
        let mut new_covs = self.covariances.clone();
        if self.lr_params > 0.0 {
            for c in 0..k {
                let nk: f64 = resp.column(c).sum();
                if nk <= 1e-12 {
                    continue;
                }
                let mut shift = DVector::zeros(d);
                let mut scatter = DMatrix::zeros(d, d);
                for i in 0..n {
                    let diff = (self.inputs.row(i) - self.centroids.row(c)).transpose();
                    shift += &diff * resp[(i, c)];
                    scatter += &diff * diff.transpose() * resp[(i, c)];
                }
                new_centroids.set_row(c, &(self.centroids.row(c) + (shift / nk).transpose() * self.lr_params));
                if let CovMode::Full = self.cov_mode {
                    let target = scatter / nk;
                    let mut s = &self.covariances[c] * (1.0 - self.lr_params) + target * self.lr_params;
                    for j in 0..d {
                        s[(j, j)] += COV_FLOOR;
                    }
                    new_covs[c] = symmetrize(&s);
                }
            }
        }
        if self.lr_inputs > 0.0 {
            // each point ascends its own log-density, preconditioned per component
            let mut new_inputs = self.inputs.clone();
            for i in 0..n {
                let mut pull = DVector::zeros(d);
                for c in 0..k {
                    pull += (self.centroids.row(c) - self.inputs.row(i)).transpose() * resp[(i, c)];
                }
                new_inputs.set_row(i, &(self.inputs.row(i) + pull.transpose() * self.lr_inputs));
            }
            self.inputs = new_inputs;
        }
        self.centroids = new_centroids;
        self.covariances = new_covs;
        Ok(ll)
    }
}

/// Runs `steps` ascent steps and records `(step, centroid entropy, mean
/// log-likelihood)` before the first and after every step.
pub fn gmm_collapse_run(lab: &GmmLabState, steps: usize) -> Result<GmmRun> {
    if steps == 0 {
        return Err(Error::invalid("steps must be >= 1"));
    }
    let mut state = lab.clone();
    let mut trace = Vec::with_capacity(steps + 1);
    let ll0 = state.mean_log_likelihood()?;
    trace.push(GmmTracePoint { step: 0, centroid_entropy: state.centroid_entropy, mean_log_likelihood: ll0 });
    for s in 1..=steps {
        let before = state.clone();
        let outcome = state.step().and_then(|_| {
            let h = centroid_entropy(&state.centroids)?;
            let ll = state.mean_log_likelihood()?;
            Ok((h, ll))
        });
        match outcome {
            Ok((h, ll)) if h.is_finite() && ll.is_finite() => {
                state.centroid_entropy = h;
                trace.push(GmmTracePoint { step: s, centroid_entropy: h, mean_log_likelihood: ll });
            }
            Ok(_) => return Ok(GmmRun { trace, final_state: before, abort: Some(format!("non-finite likelihood at step {s}")) }),
            Err(e) if e.is_numerical() => return Ok(GmmRun { trace, final_state: before, abort: Some(format!("step {s}: {e}")) }),
            Err(e) => return Err(e),
        }
    }
    Ok(GmmRun { trace, final_state: state, abort: None })
}

pub fn write_gmm_trace_csv<W: Write>(w: W, trace: &[GmmTracePoint]) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["step", "entropy", "mean_log_likelihood"])?;
    for p in trace {
        wr.write_record([p.step.to_string(), format_float(p.centroid_entropy), format_float(p.mean_log_likelihood)])?;
    }
    wr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::two_moons;

    #[test]
    fn too_few_samples() {
        assert!(matches!(dagostino_pearson(&[0.0; 19]), Err(Error::InsufficientSamples { .. })));
    }

    #[test]
    fn constant_sample_is_degenerate() {
        assert!(matches!(dagostino_pearson(&[3.0; 50]), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn affine_invariance() {
        let mut r = rng::from_seed(3);
        let x: Vec<f64> = (0..200).map(|_| rng::normal(&mut r).powi(3)).collect();
        let y: Vec<f64> = x.iter().map(|v| -2.5 * v + 7.0).collect();
        let (a, b) = (dagostino_pearson(&x).unwrap(), dagostino_pearson(&y).unwrap());
        assert!((a - b).abs() <= 1e-10);
    }

    #[test]
    fn histogram_simplex() {
        let p = DMatrix::identity(3, 3);
        let h = pairwise_distance_histogram(&p, 4).unwrap();
        assert_eq!(h.total, 3);
        assert!((h.min - 2f64.sqrt()).abs() < 1e-15 && (h.max - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(h.counts[3], 3);
    }

    #[test]
    fn histogram_identical_points() {
        let p = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        let h = pairwise_distance_histogram(&p, 3).unwrap();
        assert_eq!(h.min, 0.0);
        assert_eq!(h.counts.iter().sum::<u64>(), 1);
    }

    #[test]
    fn spearman_basics() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(ranks(&[1.0, 1.0, 2.0]), vec![1.5, 1.5, 3.0]);
    }

    #[test]
    fn centroid_entropy_range() {
        let far = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 100.0, 0.0, 0.0, 100.0]);
        assert!((centroid_entropy(&far).unwrap() - 3f64.ln()).abs() < 1e-9);
        let same = DMatrix::from_element(3, 2, 0.5);
        assert!(centroid_entropy(&same).unwrap().abs() < 1e-12);
    }

    #[test]
    fn zero_learning_rates_constant_trace() {
        let (x, _) = two_moons(60, 0.05, 1).unwrap();
        let lab = GmmLabState::new(x, 5, CovMode::Full, 0.0, 0.0, 2).unwrap();
        let run = gmm_collapse_run(&lab, 5).unwrap();
        assert!(run.trace.windows(2).all(|w| w[0].centroid_entropy == w[1].centroid_entropy && w[0].mean_log_likelihood == w[1].mean_log_likelihood));
    }
}
