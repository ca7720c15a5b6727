//! Generalization bound for a linear probe on top of an SSL encoder,
//! evaluated term by term on concrete labeled and unlabeled samples.
//!
//! Embedding matrices follow the column convention of the bound: `Z` is d×n
//! with one sample per column, and label matrices `Y` are n×r one-hot rows.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cpa_net::PwaNetwork;
use crate::error::{Error, Result};
use crate::linalg::{spectral_norm, PINV_RTOL};
use crate::rng;

pub const SPECTRAL_ITERS: usize = 100;
pub const SPECTRAL_TOL: f64 = 1e-10;
pub const DEFAULT_SIGN_DRAWS: usize = 1000;
/// Sample counts up to this size enumerate every sign pattern.
pub const EXHAUSTIVE_MAX_M: usize = 10;

/// A frozen representation `f: R^D → R^K`, applied row-wise to N×D inputs.
pub trait Encoder: Sync {
    fn encode(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>>;
}

impl Encoder for PwaNetwork {
    fn encode(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.forward_batch(x)
    }
}

/// Adapts a closure into an [`Encoder`].
pub struct FnEncoder<F>(pub F);

impl<F> Encoder for FnEncoder<F>
where
    F: Fn(&DMatrix<f64>) -> DMatrix<f64> + Sync,
{
    fn encode(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        Ok((self.0)(x))
    }
}

/// Truncated SVD `Z = U_r·S_r·V_rᵀ` keeping singular values above
/// `PINV_RTOL·σ_max`.
struct RowSpace {
    u: DMatrix<f64>,
    s: DVector<f64>,
    v: DMatrix<f64>,
}

impl RowSpace {
    fn of(z: &DMatrix<f64>) -> Self {
        let (d, n) = z.shape();
        if d == 0 || n == 0 {
            return Self { u: DMatrix::zeros(d, 0), s: DVector::zeros(0), v: DMatrix::zeros(n, 0) };
        }
        let svd = crate::linalg::svd(z);
        let s_max = svd.s.iter().cloned().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..svd.s.len()).filter(|&k| svd.s[k] > PINV_RTOL * s_max && svd.s[k] > 0.0).collect();
        let u_r = DMatrix::from_fn(d, keep.len(), |i, j| svd.u[(i, keep[j])]);
        let v_r = DMatrix::from_fn(n, keep.len(), |i, j| svd.v[(i, keep[j])]);
        let s_r = DVector::from_fn(keep.len(), |j, _| svd.s[keep[j]]);
        Self { u: u_r, s: s_r, v: v_r }
    }

    /// `(I − V_r·V_rᵀ)·Y`
    fn residual(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        y - &self.v * (self.v.transpose() * y)
    }
}

fn check_shapes(z: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<()> {
    crate::error::ensure_dim(z.ncols(), y.nrows())
}

/// `P_Z = I − Zᵀ(ZZᵀ)†Z` as a dense n×n matrix.
pub fn projector(z: &DMatrix<f64>) -> DMatrix<f64> {
    let rs = RowSpace::of(z);
    DMatrix::identity(z.ncols(), z.ncols()) - &rs.v * rs.v.transpose()
}

/// `‖P_Z·Y‖_F`.
pub fn projection_residual(z: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<f64> {
    check_shapes(z, y)?;
    Ok(RowSpace::of(z).residual(y).norm())
}

/// Minimum-norm least-squares probe `W = Yᵀ·Zᵀ·(ZZᵀ)†` (r×d).
pub fn min_norm_probe(z: &DMatrix<f64>, y: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_shapes(z, y)?;
    let rs = RowSpace::of(z);
    // Zᵀ(ZZᵀ)† = Z† = V_r·S_r⁻¹·U_rᵀ
    let mut v_scaled = rs.v.clone();
    for (j, s) in rs.s.iter().enumerate() {
        v_scaled.column_mut(j).unscale_mut(*s);
    }
    Ok(y.transpose() * v_scaled * rs.u.transpose())
}

/// Ridge probe `Yᵀ·Zᵀ·(ZZᵀ + λI)⁻¹`; `λ = 0` falls back to [`min_norm_probe`].
pub fn ridge_probe(z: &DMatrix<f64>, y: &DMatrix<f64>, ridge: f64) -> Result<DMatrix<f64>> {
    if !(ridge >= 0.0) {
        return Err(Error::invalid("ridge must be >= 0"));
    }
    if ridge == 0.0 {
        return min_norm_probe(z, y);
    }
    check_shapes(z, y)?;
    let d = z.nrows();
    let gram = z * z.transpose() + DMatrix::identity(d, d) * ridge;
    let l = crate::linalg::cholesky_spd(&gram)?;
    let inv = crate::linalg::inverse_from_factor(&l);
    Ok(y.transpose() * z.transpose() * inv)
}

pub fn one_hot(labels: &[usize], n_classes: usize) -> DMatrix<f64> {
    let mut y = DMatrix::zeros(labels.len(), n_classes);
    for (i, &l) in labels.iter().enumerate() {
        y[(i, l)] = 1.0;
    }
    y
}

/// Mean Euclidean distance between the embeddings of paired views.
pub fn invariance_loss(f: &dyn Encoder, x: &DMatrix<f64>, x_prime: &DMatrix<f64>) -> Result<f64> {
    let d = pair_distances(f, x, x_prime)?;
    if d.is_empty() {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

fn pair_distances(f: &dyn Encoder, x: &DMatrix<f64>, x_prime: &DMatrix<f64>) -> Result<Vec<f64>> {
    if x.shape() != x_prime.shape() {
        return Err(Error::invalid("pair views differ in shape"));
    }
    let a = f.encode(x)?;
    let b = f.encode(x_prime)?;
    Ok((0..a.nrows()).map(|i| (a.row(i) - b.row(i)).norm()).collect())
}

/// Normalized empirical Rademacher estimate
/// `(1/√m)·E_ξ[max_h Σᵢ ξᵢ·values[h][i]]` for a finite hypothesis list.
/// Every sign pattern is enumerated when `m ≤ EXHAUSTIVE_MAX_M` or
/// `2^m ≤ n_sign_draws`; otherwise `n_sign_draws` patterns are drawn.
pub fn rademacher_from_values(values: &[Vec<f64>], n_sign_draws: usize, seed: u64) -> Result<f64> {
    let m = values.first().map(Vec::len).ok_or_else(|| Error::invalid("hypothesis ensemble is empty"))?;
    if values.iter().any(|v| v.len() != m) {
        return Err(Error::invalid("hypotheses disagree on sample count"));
    }
    if m == 0 {
        return Err(Error::InsufficientSamples { needed: 1, got: 0 });
    }
    if n_sign_draws == 0 {
        return Err(Error::invalid("n_sign_draws must be >= 1"));
    }
    let sup = |signs: &dyn Fn(usize) -> f64| values.iter().map(|v| v.iter().enumerate().map(|(i, x)| signs(i) * x).sum::<f64>()).fold(f64::NEG_INFINITY, f64::max);
    let mean = if m <= EXHAUSTIVE_MAX_M || (m < 64 && (1u64 << m) <= n_sign_draws as u64) {
        let total = 1u64 << m;
        (0..total).map(|p| sup(&|i| if p >> i & 1 == 1 { 1.0 } else { -1.0 })).sum::<f64>() / total as f64
    } else {
        let shards = crate::entropy::MC_SHARDS.min(n_sign_draws);
        let per = n_sign_draws / shards;
        let extra = n_sign_draws % shards;
        let sums = rng::sharded(shards, |s| {
            let mut r = rng::from_seed(rng::derive(seed, s as u64));
            let count = per + usize::from(s < extra);
            let mut acc = 0.0;
            let mut signs = vec![0.0; m];
            for _ in 0..count {
                for x in signs.iter_mut() {
                    *x = if rng::index(&mut r, 2) == 1 { 1.0 } else { -1.0 };
                }
                acc += sup(&|i| signs[i]);
            }
            acc
        });
        sums.iter().sum::<f64>() / n_sign_draws as f64
    };
    Ok(mean / (m as f64).sqrt())
}

/// Rademacher estimate of the pair-distance class `‖f(x⁺) − f(x⁺⁺)‖` over a
/// finite encoder ensemble; a lower estimate of the supremum over all
/// encoders.
pub fn empirical_rademacher(ensemble: &[&dyn Encoder], x: &DMatrix<f64>, x_prime: &DMatrix<f64>, n_sign_draws: usize, seed: u64) -> Result<f64> {
    let values = ensemble.iter().map(|f| pair_distances(*f, x, x_prime)).collect::<Result<Vec<_>>>()?;
    rademacher_from_values(&values, n_sign_draws, seed)
}

pub struct BoundInputs<'a> {
    /// Labeled set S: n×D inputs and labels.
    pub labeled_x: &'a DMatrix<f64>,
    pub labeled_y: &'a [usize],
    /// Unlabeled pairs S̄: m×D each, plus the labels of `x⁺` known to the
    /// harness.
    pub unlabeled_x: &'a DMatrix<f64>,
    pub unlabeled_x_prime: &'a DMatrix<f64>,
    pub unlabeled_y: &'a [usize],
    pub n_classes: usize,
    pub encoder: &'a dyn Encoder,
    /// Additional encoders for the complexity estimates; the trained encoder
    /// is always included.
    pub ensemble: Vec<&'a dyn Encoder>,
    pub delta: f64,
    /// True class marginals; the empirical labeled frequencies when absent.
    pub class_prior: Option<Vec<f64>>,
    pub n_sign_draws: usize,
    pub seed: u64,
    /// Held-out labeled data for the measured loss.
    pub test: Option<(&'a DMatrix<f64>, &'a [usize])>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub kappa_s: f64,
    pub kappa_s_bar: f64,
    pub kappa: f64,
    pub tau: f64,
    pub tau_s_bar: f64,
    pub c: f64,
    pub zeta: f64,
    pub p_hat: Vec<f64>,
    pub p: Vec<f64>,
    pub rademacher_f: f64,
    pub rademacher_wf: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: usize,
    pub m: usize,
    pub delta: f64,
    pub invariance_loss: f64,
    /// `c·I_S̄`
    pub invariance_term: f64,
    pub proj_unlabeled_term: f64,
    pub proj_labeled_term: f64,
    /// `2·R̃_m(F)/√m + 4·R̃_m(W∘F)/√m`, the complexity part of `Q`.
    pub rademacher_term: f64,
    pub q_mn: f64,
    pub constants: BoundConstants,
    pub total_bound: f64,
    /// Empirical labeled loss `(1/n)·Σ‖W_S f(xᵢ) − yᵢ‖`.
    pub train_loss: f64,
    pub measured_test_loss: Option<f64>,
    pub ensemble_size: usize,
    pub log2_ensemble_size: f64,
    /// The ensemble-based Rademacher values and τ are lower estimates.
    pub rademacher_is_lower_estimate: bool,
    pub informal: InformalTerms,
}

/// The bound regrouped in its informal shape: the unscaled invariance loss,
/// both projection terms and `2·R̃_m(F)/√m`, with everything else (the
/// `c`-correction and `Q`) collected in `remainder` so the parts still sum to
/// `total_bound`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InformalTerms {
    pub invariance_loss: f64,
    pub proj_unlabeled_term: f64,
    pub proj_labeled_term: f64,
    pub complexity_term: f64,
    pub remainder: f64,
}

/// `Q_{m,n}` from its constants.
pub fn q_mn(k: &BoundConstants, m: usize, n: usize, delta: f64) -> f64 {
    let (mf, nf) = (m as f64, n as f64);
    let n_classes = k.p_hat.len().max(1) as f64;
    let mass: f64 = k.p_hat.iter().zip(&k.p).map(|(a, b)| a.sqrt() + b.sqrt()).sum();
    k.c * (2.0 * k.rademacher_f / mf.sqrt() + k.tau * ((3.0 / delta).ln() / (2.0 * mf)).sqrt() + k.tau_s_bar * ((3.0 / delta).ln() / (2.0 * nf)).sqrt())
        + k.kappa_s * (2.0 * (6.0 * n_classes / delta).ln() / (2.0 * nf)).sqrt() * mass
        + 4.0 * k.rademacher_wf / mf.sqrt()
        + 2.0 * k.kappa * ((4.0 / delta).ln() / (2.0 * mf)).sqrt()
        + 2.0 * k.kappa_s_bar * ((4.0 / delta).ln() / (2.0 * nf)).sqrt()
}

fn loss_values(w: &DMatrix<f64>, z_rows: &DMatrix<f64>, y: &DMatrix<f64>) -> Vec<f64> {
    let pred = z_rows * w.transpose();
    (0..pred.nrows()).map(|i| (pred.row(i) - y.row(i)).norm()).collect()
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().cloned().fold(0.0, f64::max)
}

fn finite(term: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::non_finite(term))
    }
}

pub fn evaluate_bound(inp: &BoundInputs<'_>) -> Result<BoundReport> {
    let n = inp.labeled_x.nrows();
    let m = inp.unlabeled_x.nrows();
    if n == 0 || m == 0 {
        return Err(Error::InsufficientSamples { needed: 1, got: n.min(m) });
    }
    if !(inp.delta > 0.0 && inp.delta < 1.0) {
        return Err(Error::invalid("delta must lie in (0, 1)"));
    }
    crate::error::ensure_dim(n, inp.labeled_y.len())?;
    crate::error::ensure_dim(m, inp.unlabeled_y.len())?;
    let r = inp.n_classes;
    if r == 0 || inp.labeled_y.iter().chain(inp.unlabeled_y).any(|&l| l >= r) {
        return Err(Error::invalid("labels must lie in 0..n_classes"));
    }
    let y_s = one_hot(inp.labeled_y, r);
    let y_sb = one_hot(inp.unlabeled_y, r);

    let f = inp.encoder;
    let zs_rows = f.encode(inp.labeled_x)?;
    let zsb_rows = f.encode(inp.unlabeled_x)?;
    let zs = zs_rows.transpose();
    let zsb = zsb_rows.transpose();

    let w_s = min_norm_probe(&zs, &y_s)?;
    let w_sb = min_norm_probe(&zsb, &y_sb)?;
    let c = finite("c", spectral_norm(&(&w_s - &w_sb), SPECTRAL_ITERS, SPECTRAL_TOL))?;

    let dists = pair_distances(f, inp.unlabeled_x, inp.unlabeled_x_prime)?;
    let inv = finite("invariance_loss", dists.iter().sum::<f64>() / m as f64)?;
    let tau_s_bar = finite("tau_s_bar", max_of(&dists))?;

    let proj_unlabeled_term = finite("proj_unlabeled_term", 2.0 / (m as f64).sqrt() * projection_residual(&zsb, &y_sb)?)?;
    let proj_labeled_term = finite("proj_labeled_term", projection_residual(&zs, &y_s)? / (n as f64).sqrt())?;

    let loss_s_lab = loss_values(&w_s, &zs_rows, &y_s);
    let loss_s_unl = loss_values(&w_s, &zsb_rows, &y_sb);
    let kappa_s = finite("kappa_s", max_of(&loss_s_lab).max(max_of(&loss_s_unl)))?;
    let loss_sb_lab = loss_values(&w_sb, &zs_rows, &y_s);
    let loss_sb_unl = loss_values(&w_sb, &zsb_rows, &y_sb);
    let kappa_s_bar = finite("kappa_s_bar", max_of(&loss_sb_lab).max(max_of(&loss_sb_unl)))?;

    let mut ensemble: Vec<&dyn Encoder> = vec![f];
    ensemble.extend(inp.ensemble.iter().copied());
    let mut pair_vals = Vec::with_capacity(ensemble.len());
    let mut wf_vals = Vec::with_capacity(ensemble.len());
    let mut tau = tau_s_bar;
    let mut kappa = kappa_s.max(kappa_s_bar);
    for (h, g) in ensemble.iter().enumerate() {
        let d = if h == 0 { dists.clone() } else { pair_distances(*g, inp.unlabeled_x, inp.unlabeled_x_prime)? };
        tau = tau.max(max_of(&d));
        pair_vals.push(d);
        let (g_lab, g_unl) = if h == 0 { (zs_rows.clone(), zsb_rows.clone()) } else { (g.encode(inp.labeled_x)?, g.encode(inp.unlabeled_x)?) };
        let w_g = min_norm_probe(&g_unl.transpose(), &y_sb)?;
        let on_unl = loss_values(&w_g, &g_unl, &y_sb);
        kappa = kappa.max(max_of(&on_unl)).max(max_of(&loss_values(&w_g, &g_lab, &y_s)));
        wf_vals.push(on_unl);
    }
    let tau = finite("tau", tau)?;
    let kappa = finite("kappa", kappa)?;
    let rademacher_f = finite("rademacher_f", rademacher_from_values(&pair_vals, inp.n_sign_draws, inp.seed)?)?;
    let rademacher_wf = finite("rademacher_wf", rademacher_from_values(&wf_vals, inp.n_sign_draws, rng::derive(inp.seed, 1))?)?;

    let mut p_hat = vec![0.0; r];
    for &l in inp.labeled_y {
        p_hat[l] += 1.0 / n as f64;
    }
    let p = match &inp.class_prior {
        Some(p) => {
            crate::error::ensure_dim(r, p.len())?;
            if p.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::invalid("class prior must be non-negative"));
            }
            p.clone()
        }
        None => p_hat.clone(),
    };
    let zeta = y_s.row_iter().chain(y_sb.row_iter()).map(|row| row.norm()).fold(0.0, f64::max);

    let constants = BoundConstants { kappa_s, kappa_s_bar, kappa, tau, tau_s_bar, c, zeta, p_hat, p, rademacher_f, rademacher_wf };
    let q = finite("q_mn", q_mn(&constants, m, n, inp.delta))?;
    let invariance_term = c * inv;
    let total_bound = finite("total_bound", invariance_term + proj_unlabeled_term + proj_labeled_term + q)?;
    let rademacher_term = 2.0 * rademacher_f / (m as f64).sqrt() + 4.0 * rademacher_wf / (m as f64).sqrt();
    let complexity_term = 2.0 * rademacher_f / (m as f64).sqrt();
    let informal = InformalTerms {
        invariance_loss: inv,
        proj_unlabeled_term,
        proj_labeled_term,
        complexity_term,
        remainder: total_bound - inv - proj_unlabeled_term - proj_labeled_term - complexity_term,
    };
    let train_loss = loss_s_lab.iter().sum::<f64>() / n as f64;
    let measured_test_loss = match inp.test {
        Some((tx, ty)) => {
            crate::error::ensure_dim(tx.nrows(), ty.len())?;
            if ty.iter().any(|&l| l >= r) {
                return Err(Error::invalid("test labels must lie in 0..n_classes"));
            }
            let l = loss_values(&w_s, &f.encode(tx)?, &one_hot(ty, r));
            Some(finite("measured_test_loss", l.iter().sum::<f64>() / l.len().max(1) as f64)?)
        }
        None => None,
    };
    Ok(BoundReport {
        n,
        m,
        delta: inp.delta,
        invariance_loss: inv,
        invariance_term,
        proj_unlabeled_term,
        proj_labeled_term,
        rademacher_term,
        q_mn: q,
        constants,
        total_bound,
        train_loss,
        measured_test_loss,
        ensemble_size: ensemble.len(),
        log2_ensemble_size: (ensemble.len() as f64).log2(),
        rademacher_is_lower_estimate: true,
        informal,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn random(seed: u64, r: usize, c: usize) -> DMatrix<f64> {
        rng::normal_matrix(&mut rng::from_seed(seed), r, c)
    }

    #[test]
    fn full_rank_embeddings_have_zero_residual() {
        let z = random(1, 6, 4);
        let y = one_hot(&[0, 1, 1, 0], 2);
        assert!(projection_residual(&z, &y).unwrap() < 1e-10);
    }

    #[test]
    fn labels_in_row_space() {
        let z = random(2, 2, 7);
        let w = random(3, 3, 2);
        let y = z.transpose() * w.transpose();
        assert!(projection_residual(&z, &y).unwrap() < 1e-10);
    }

    #[test]
    fn identity_probe_is_label_transpose() {
        let y = random(4, 3, 2);
        let w = min_norm_probe(&DMatrix::identity(3, 3), &y).unwrap();
        assert_relative_eq!(w, y.transpose(), epsilon = 1e-12);
        assert_eq!(min_norm_probe(&random(5, 3, 4), &DMatrix::zeros(4, 2)).unwrap(), DMatrix::zeros(2, 3));
    }

    #[test]
    fn projector_is_orthogonal() {
        let z = random(6, 3, 9);
        let p = projector(&z);
        assert!((&p * &p - &p).norm() < 1e-8);
        assert!((&p - p.transpose()).norm() < 1e-8);
        assert!((&p * z.transpose()).norm() < 1e-8);
    }

    #[test]
    fn rademacher_single_pair_enumeration() {
        // max over one function of ±v averaged over both signs is 0
        assert_relative_eq!(rademacher_from_values(&[vec![2.0]], 10, 0).unwrap(), 0.0);
        // two functions giving v and 0: mean(max(v,0), max(-v,0)) = v/2
        assert_relative_eq!(rademacher_from_values(&[vec![2.0], vec![0.0]], 10, 0).unwrap(), 1.0);
    }

    #[test]
    fn constant_encoder_has_zero_complexity() {
        let x = random(7, 5, 3);
        let xp = random(8, 5, 3);
        let f = FnEncoder(|x: &DMatrix<f64>| DMatrix::from_element(x.nrows(), 2, 1.5));
        assert_eq!(invariance_loss(&f, &x, &xp).unwrap(), 0.0);
        assert_eq!(empirical_rademacher(&[&f], &x, &xp, 100, 0).unwrap(), 0.0);
    }

    #[test]
    fn ridge_limit_is_zero_probe() {
        let z = random(9, 3, 10);
        let y = one_hot(&[0, 1, 0, 1, 1, 0, 0, 1, 0, 1], 2);
        assert!(ridge_probe(&z, &y, 1e12).unwrap().norm() < 1e-9);
        assert!(ridge_probe(&z, &y, -1.0).is_err());
    }
}
