//! Self-supervised objectives over paired embedding batches. Every loss is
//! built on the reverse-mode [`Tape`] so the same code path yields values and
//! gradients; the plain functions evaluate on a throwaway tape.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cpa_net::{Tape, Var};
use crate::entropy::{logdet_entropy_on_tape, moment_batch_on_tape, pairwise_lower_on_tape};
use crate::error::{Error, Result};
use crate::linalg::cholesky_psd;

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingBatch {
    z: DMatrix<f64>,
    z_prime: DMatrix<f64>,
}

impl EmbeddingBatch {
    pub fn new(z: DMatrix<f64>, z_prime: DMatrix<f64>) -> Result<Self> {
        if z.shape() != z_prime.shape() {
            return Err(Error::invalid(format!("view shapes differ: {:?} vs {:?}", z.shape(), z_prime.shape())));
        }
        if z.nrows() < 2 {
            return Err(Error::InsufficientSamples { needed: 2, got: z.nrows() });
        }
        Ok(Self { z, z_prime })
    }

    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    pub fn z_prime(&self) -> &DMatrix<f64> {
        &self.z_prime
    }

    pub fn n(&self) -> usize {
        self.z.nrows()
    }

    pub fn k(&self) -> usize {
        self.z.ncols()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum CovMode {
    /// Variance and covariance terms applied to each view separately.
    #[default]
    PerView,
    /// One covariance matrix from the row-stacked views `[Z; Z′]`.
    Concatenated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EntropyPlugin {
    #[default]
    None,
    PairwiseLower,
    LogDet,
    /// Entropy of the moment-matched Gaussian of the batch.
    Moment,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SslObjectiveConfig {
    pub alpha: f64,
    pub beta_cov: f64,
    pub gamma_inv: f64,
    pub gamma_target: f64,
    pub epsilon: f64,
    pub entropy_plugin: EntropyPlugin,
    pub entropy_weight: f64,
    pub temperature: f64,
    pub logdet_beta: f64,
    /// Variance `s²` of the isotropic kernels in the batch pairwise estimator.
    pub pairwise_bandwidth: f64,
    pub cov_mode: CovMode,
    /// Ridge added to a rank-deficient conditional covariance.
    pub jitter: f64,
}

impl Default for SslObjectiveConfig {
    fn default() -> Self {
        Self {
            alpha: 25.0,
            beta_cov: 1.0,
            gamma_inv: 25.0,
            gamma_target: 1.0,
            epsilon: 1e-4,
            entropy_plugin: EntropyPlugin::None,
            entropy_weight: 1.0,
            temperature: 0.5,
            logdet_beta: 1.0,
            pairwise_bandwidth: 1.0,
            cov_mode: CovMode::PerView,
            jitter: crate::gaussian::DEFAULT_JITTER,
        }
    }
}

impl SslObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        let nonneg = [("alpha", self.alpha), ("beta_cov", self.beta_cov), ("gamma_inv", self.gamma_inv), ("entropy_weight", self.entropy_weight), ("jitter", self.jitter)];
        for (name, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite value >= 0, got {v}")));
            }
        }
        let pos = [
            ("gamma_target", self.gamma_target),
            ("epsilon", self.epsilon),
            ("temperature", self.temperature),
            ("logdet_beta", self.logdet_beta),
            ("pairwise_bandwidth", self.pairwise_bandwidth),
        ];
        for (name, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be a finite value > 0, got {v}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    #[default]
    #[serde(rename = "vicreg")]
    Vicreg,
    #[serde(rename = "vicreg+pairwise")]
    VicregPairwise,
    #[serde(rename = "vicreg+logdet")]
    VicregLogDet,
    #[serde(rename = "infonce")]
    InfoNce,
    #[serde(rename = "info_objective")]
    InfoObjective,
    /// Invariance term alone; the collapse-prone baseline.
    #[serde(rename = "invariance_only")]
    InvarianceOnly,
}

impl Objective {
    pub const ALL: [Objective; 6] =
        [Objective::Vicreg, Objective::VicregPairwise, Objective::VicregLogDet, Objective::InfoNce, Objective::InfoObjective, Objective::InvarianceOnly];

    pub fn name(self) -> &'static str {
        match self {
            Objective::Vicreg => "vicreg",
            Objective::VicregPairwise => "vicreg+pairwise",
            Objective::VicregLogDet => "vicreg+logdet",
            Objective::InfoNce => "infonce",
            Objective::InfoObjective => "info_objective",
            Objective::InvarianceOnly => "invariance_only",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|o| o.name() == name)
            .ok_or_else(|| Error::Config(format!("unknown objective `{name}`")))
    }

    /// Whether the objective needs per-sample conditional covariances.
    pub fn needs_sigmas(self) -> bool {
        self == Objective::InfoObjective
    }
}

fn covariance_on_tape(tape: &mut Tape, z: Var) -> Result<Var> {
    let n = tape.value(z).nrows();
    let zc = tape.center_columns(z);
    let zt = tape.transpose(zc);
    let gram = tape.matmul(zt, zc)?;
    Ok(tape.scale(gram, 1.0 / (n as f64 - 1.0)))
}

/// Row-stacks two equally shaped nodes through constant selector matrices.
fn vstack_on_tape(tape: &mut Tape, a: Var, b: Var) -> Result<Var> {
    let n = tape.value(a).nrows();
    let mut top = DMatrix::zeros(2 * n, n);
    let mut bottom = DMatrix::zeros(2 * n, n);
    for i in 0..n {
        top[(i, i)] = 1.0;
        bottom[(n + i, i)] = 1.0;
    }
    let st = tape.leaf(top);
    let sb = tape.leaf(bottom);
    let ta = tape.matmul(st, a)?;
    let tb = tape.matmul(sb, b)?;
    tape.add(ta, tb)
}

/// `(1/K)·Σₖ max(0, γ − √(Cₖₖ + ε))`.
pub fn vicreg_variance_on_tape(tape: &mut Tape, z: Var, cfg: &SslObjectiveConfig) -> Result<Var> {
    check_rows(tape, z)?;
    let c = covariance_on_tape(tape, z)?;
    let d = tape.diag(c)?;
    let d = tape.add_scalar(d, cfg.epsilon);
    let s = tape.sqrt(d);
    let gap = tape.neg(s);
    let gap = tape.add_scalar(gap, cfg.gamma_target);
    let hinge = tape.max_const(gap, 0.0);
    Ok(tape.mean(hinge))
}

/// `(1/K)·Σₖ Σ_{k′≠k} C²ₖₖ′`.
pub fn vicreg_covariance_on_tape(tape: &mut Tape, z: Var) -> Result<Var> {
    check_rows(tape, z)?;
    let k = tape.value(z).ncols();
    let c = covariance_on_tape(tape, z)?;
    let mut off = DMatrix::from_element(k, k, 1.0);
    off.fill_diagonal(0.0);
    let masked = tape.mask(c, off)?;
    let sq = tape.square(masked);
    let total = tape.sum(sq);
    Ok(tape.scale(total, 1.0 / k as f64))
}

/// `(1/N)·Σᵢ ‖zᵢ − z′ᵢ‖²`.
pub fn vicreg_invariance_on_tape(tape: &mut Tape, z: Var, z_prime: Var) -> Result<Var> {
    let n = tape.value(z).nrows();
    let diff = tape.sub(z, z_prime)?;
    let sq = tape.square(diff);
    let total = tape.sum(sq);
    Ok(tape.scale(total, 1.0 / n as f64))
}

pub fn vicreg_total_on_tape(tape: &mut Tape, z: Var, z_prime: Var, cfg: &SslObjectiveConfig) -> Result<Var> {
    let inv = vicreg_invariance_on_tape(tape, z, z_prime)?;
    let inv = tape.scale(inv, cfg.gamma_inv);
    let mut terms = vec![inv];
    let views = match cfg.cov_mode {
        CovMode::PerView => vec![z, z_prime],
        CovMode::Concatenated => vec![vstack_on_tape(tape, z, z_prime)?],
    };
    for v in views {
        let var = vicreg_variance_on_tape(tape, v, cfg)?;
        terms.push(tape.scale(var, cfg.alpha));
        let cov = vicreg_covariance_on_tape(tape, v)?;
        terms.push(tape.scale(cov, cfg.beta_cov));
    }
    tape.add_all(&terms)
}

/// SimCLR InfoNCE with in-batch negatives on L2-normalized rows.
pub fn simclr_infonce_on_tape(tape: &mut Tape, z: Var, z_prime: Var, cfg: &SslObjectiveConfig) -> Result<Var> {
    check_rows(tape, z)?;
    let zn = tape.row_normalize(z)?;
    let zpn = tape.row_normalize(z_prime)?;
    let zpt = tape.transpose(zpn);
    let sim = tape.matmul(zn, zpt)?;
    let logits = tape.scale(sim, 1.0 / cfg.temperature);
    let lse = tape.log_sum_exp_rows(logits);
    let lse_mean = tape.mean(lse);
    let pos = tape.diag(logits)?;
    let pos_mean = tape.mean(pos);
    tape.sub(lse_mean, pos_mean)
}

/// Differentiable entropy of a batch under the configured plug-in; `None`
/// when the plug-in is disabled.
pub fn entropy_plugin_on_tape(tape: &mut Tape, z: Var, cfg: &SslObjectiveConfig) -> Result<Option<Var>> {
    Ok(match cfg.entropy_plugin {
        EntropyPlugin::None => None,
        EntropyPlugin::PairwiseLower => Some(pairwise_lower_on_tape(tape, z, cfg.pairwise_bandwidth)?),
        EntropyPlugin::LogDet => Some(logdet_entropy_on_tape(tape, z, cfg.logdet_beta)?),
        EntropyPlugin::Moment => Some(moment_batch_on_tape(tape, z, cfg.jitter.max(cfg.epsilon))?),
    })
}

/// `log det Σ`, adding `jitter·I` only when `Σ` is numerically rank-deficient.
pub fn conditional_log_det_on_tape(tape: &mut Tape, sigma: Var, jitter: f64) -> Result<Var> {
    let value = tape.value(sigma);
    let (r, c) = value.shape();
    if r != c {
        return Err(Error::invalid("conditional covariance must be square"));
    }
    let (_, rank) = cholesky_psd(value);
    if rank == r {
        if let Ok(v) = tape.log_det_spd(sigma) {
            return Ok(v);
        }
    }
    if jitter <= 0.0 {
        return Err(Error::RankDeficient { pivot: rank, dim: r });
    }
    let ridge = tape.leaf(DMatrix::identity(r, r) * jitter);
    let reg = tape.add(sigma, ridge)?;
    tape.log_det_spd(reg)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InfoBreakdown {
    pub loss: f64,
    /// Plug-in entropy `H(Z)` (0 without a plug-in).
    pub entropy: f64,
    /// `(1/N)·Σᵢ [log|Σ(xᵢ)| + log|Σ(x′ᵢ)|]`.
    pub log_det: f64,
    /// `(1/(2N))·Σᵢ ‖μ(xᵢ) − μ(x′ᵢ)‖²`.
    pub invariance: f64,
}

pub struct InfoNodes {
    pub loss: Var,
    pub entropy: Option<Var>,
    pub log_det: Var,
    pub invariance: Var,
}

/// Minimized form of the information objective:
/// `−w·H(Z) + (1/N)·Σᵢ [log|Σᵢ| + log|Σ′ᵢ|] + (1/(2N))·Σᵢ ‖μᵢ − μ′ᵢ‖²`.
/// `entropy` overrides the configured plug-in when supplied.
pub fn info_objective_on_tape(
    tape: &mut Tape,
    z: Var,
    z_prime: Var,
    sigmas: &[Var],
    sigmas_prime: &[Var],
    entropy: Option<Var>,
    cfg: &SslObjectiveConfig,
) -> Result<InfoNodes> {
    let n = tape.value(z).nrows();
    crate::error::ensure_dim(n, sigmas.len())?;
    crate::error::ensure_dim(n, sigmas_prime.len())?;
    let mut lds = Vec::with_capacity(2 * n);
    for &s in sigmas.iter().chain(sigmas_prime) {
        lds.push(conditional_log_det_on_tape(tape, s, cfg.jitter)?);
    }
    let ld_sum = tape.add_all(&lds)?;
    let log_det = tape.scale(ld_sum, 1.0 / n as f64);
    let inv = vicreg_invariance_on_tape(tape, z, z_prime)?;
    let invariance = tape.scale(inv, 0.5);
    let h = match entropy {
        Some(h) => Some(h),
        None => entropy_plugin_on_tape(tape, z, cfg)?,
    };
    let mut terms = vec![log_det, invariance];
    if let Some(h) = h {
        terms.push(tape.scale(h, -cfg.entropy_weight));
    }
    let loss = tape.add_all(&terms)?;
    Ok(InfoNodes { loss, entropy: h, log_det, invariance })
}

/// Loss node for any objective. `sigmas` is required only by
/// [`Objective::InfoObjective`].
pub fn objective_on_tape(
    tape: &mut Tape,
    objective: Objective,
    z: Var,
    z_prime: Var,
    sigmas: Option<(&[Var], &[Var])>,
    cfg: &SslObjectiveConfig,
) -> Result<Var> {
    let with_entropy = |tape: &mut Tape, base: Var, plugin: EntropyPlugin| -> Result<Var> {
        let local = SslObjectiveConfig { entropy_plugin: plugin, ..*cfg };
        let h = entropy_plugin_on_tape(tape, z, &local)?.expect("plugin set");
        let h = tape.scale(h, -cfg.entropy_weight);
        tape.add(base, h)
    };
    match objective {
        Objective::Vicreg => vicreg_total_on_tape(tape, z, z_prime, cfg),
        Objective::VicregPairwise => {
            let base = vicreg_total_on_tape(tape, z, z_prime, cfg)?;
            with_entropy(tape, base, EntropyPlugin::PairwiseLower)
        }
        Objective::VicregLogDet => {
            let base = vicreg_total_on_tape(tape, z, z_prime, cfg)?;
            with_entropy(tape, base, EntropyPlugin::LogDet)
        }
        Objective::InfoNce => simclr_infonce_on_tape(tape, z, z_prime, cfg),
        Objective::InvarianceOnly => {
            let inv = vicreg_invariance_on_tape(tape, z, z_prime)?;
            Ok(tape.scale(inv, cfg.gamma_inv))
        }
        Objective::InfoObjective => {
            let (s, sp) = sigmas.ok_or_else(|| Error::invalid("info_objective needs conditional covariances"))?;
            Ok(info_objective_on_tape(tape, z, z_prime, s, sp, None, cfg)?.loss)
        }
    }
}

fn check_rows(tape: &Tape, z: Var) -> Result<()> {
    let n = tape.value(z).nrows();
    if n < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: n });
    }
    Ok(())
}

fn eval_single(z: &DMatrix<f64>, f: impl FnOnce(&mut Tape, Var) -> Result<Var>) -> Result<f64> {
    let mut tape = Tape::new();
    let zv = tape.leaf(z.clone());
    let out = f(&mut tape, zv)?;
    Ok(tape.scalar(out))
}

fn eval_pair(b: &EmbeddingBatch, f: impl FnOnce(&mut Tape, Var, Var) -> Result<Var>) -> Result<f64> {
    let mut tape = Tape::new();
    let z = tape.leaf(b.z.clone());
    let zp = tape.leaf(b.z_prime.clone());
    let out = f(&mut tape, z, zp)?;
    Ok(tape.scalar(out))
}

pub fn vicreg_variance(z: &DMatrix<f64>, cfg: &SslObjectiveConfig) -> Result<f64> {
    eval_single(z, |t, v| vicreg_variance_on_tape(t, v, cfg))
}

pub fn vicreg_covariance(z: &DMatrix<f64>) -> Result<f64> {
    eval_single(z, vicreg_covariance_on_tape)
}

pub fn vicreg_invariance(b: &EmbeddingBatch) -> Result<f64> {
    eval_pair(b, vicreg_invariance_on_tape)
}

pub fn vicreg_total(b: &EmbeddingBatch, cfg: &SslObjectiveConfig) -> Result<f64> {
    eval_pair(b, |t, z, zp| vicreg_total_on_tape(t, z, zp, cfg))
}

pub fn simclr_infonce(b: &EmbeddingBatch, cfg: &SslObjectiveConfig) -> Result<f64> {
    eval_pair(b, |t, z, zp| simclr_infonce_on_tape(t, z, zp, cfg))
}

/// Information objective from fixed conditional covariances. `entropy`, if
/// given, replaces the configured plug-in with a constant.
pub fn info_objective(
    b: &EmbeddingBatch,
    sigmas: &[DMatrix<f64>],
    sigmas_prime: &[DMatrix<f64>],
    entropy: Option<f64>,
    cfg: &SslObjectiveConfig,
) -> Result<InfoBreakdown> {
    let mut tape = Tape::new();
    let z = tape.leaf(b.z.clone());
    let zp = tape.leaf(b.z_prime.clone());
    let s: Vec<Var> = sigmas.iter().map(|m| tape.leaf(m.clone())).collect();
    let sp: Vec<Var> = sigmas_prime.iter().map(|m| tape.leaf(m.clone())).collect();
    let h = entropy.map(|h| tape.constant_scalar(h));
    let nodes = info_objective_on_tape(&mut tape, z, zp, &s, &sp, h, cfg)?;
    Ok(InfoBreakdown {
        loss: tape.scalar(nodes.loss),
        entropy: nodes.entropy.map_or(0.0, |h| tape.scalar(h)),
        log_det: tape.scalar(nodes.log_det),
        invariance: tape.scalar(nodes.invariance),
    })
}

/// Value and gradients with respect to both views; objectives needing
/// conditional covariances are rejected.
pub fn loss_and_grad(objective: Objective, b: &EmbeddingBatch, cfg: &SslObjectiveConfig) -> Result<(f64, DMatrix<f64>, DMatrix<f64>)> {
    let mut tape = Tape::new();
    let z = tape.leaf(b.z.clone());
    let zp = tape.leaf(b.z_prime.clone());
    let loss = objective_on_tape(&mut tape, objective, z, zp, None, cfg)?;
    let g = tape.grad(loss)?;
    Ok((tape.scalar(loss), g.wrt(&tape, z), g.wrt(&tape, zp)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;
    use approx::assert_relative_eq;

    fn batch(seed: u64, n: usize, k: usize) -> EmbeddingBatch {
        let mut r = rng::from_seed(seed);
        EmbeddingBatch::new(rng::normal_matrix(&mut r, n, k), rng::normal_matrix(&mut r, n, k)).unwrap()
    }

    #[test]
    fn constant_batch_variance() {
        let z = DMatrix::from_element(8, 3, 1.7);
        assert_relative_eq!(vicreg_variance(&z, &SslObjectiveConfig::default()).unwrap(), 0.99, epsilon = 1e-12);
    }

    #[test]
    fn wide_batch_has_no_variance_penalty() {
        let z = rng::normal_matrix(&mut rng::from_seed(4), 200, 3) * 5.0;
        assert_eq!(vicreg_variance(&z, &SslObjectiveConfig::default()).unwrap(), 0.0);
    }

    #[test]
    fn covariance_two_dims() {
        let z = DMatrix::from_row_slice(3, 2, &[0.0, 0.0, 1.0, 2.0, 2.0, 1.0]);
        let c01 = crate::linalg::row_covariance(&z)[(0, 1)];
        assert_relative_eq!(vicreg_covariance(&z).unwrap(), c01 * c01, epsilon = 1e-14);
    }

    #[test]
    fn invariance_shift() {
        let z = rng::normal_matrix(&mut rng::from_seed(5), 6, 3);
        let shift = DMatrix::from_fn(6, 3, |_, j| [1.0, -2.0, 0.5][j]);
        let b = EmbeddingBatch::new(z.clone(), &z + shift).unwrap();
        assert_relative_eq!(vicreg_invariance(&b).unwrap(), 5.25, epsilon = 1e-12);
        assert_eq!(vicreg_invariance(&EmbeddingBatch::new(z.clone(), z).unwrap()).unwrap(), 0.0);
    }

    #[test]
    fn zero_weights_total_is_zero() {
        let cfg = SslObjectiveConfig { alpha: 0.0, beta_cov: 0.0, gamma_inv: 0.0, ..Default::default() };
        assert_eq!(vicreg_total(&batch(1, 10, 4), &cfg).unwrap(), 0.0);
    }

    #[test]
    fn infonce_two_point() {
        let z = DMatrix::identity(2, 2);
        let b = EmbeddingBatch::new(z.clone(), z).unwrap();
        let cfg = SslObjectiveConfig { temperature: 1.0, ..Default::default() };
        let expected = -(1f64.exp() / (1f64.exp() + 1.0)).ln();
        assert_relative_eq!(simclr_infonce(&b, &cfg).unwrap(), expected, epsilon = 1e-14);
        assert_relative_eq!(expected, 0.3133, epsilon = 1e-4);
    }

    #[test]
    fn infonce_zero_row() {
        let mut z = DMatrix::identity(3, 2);
        z.row_mut(2).fill(0.0);
        let b = EmbeddingBatch::new(z.clone(), DMatrix::from_element(3, 2, 1.0)).unwrap();
        assert!(matches!(simclr_infonce(&b, &SslObjectiveConfig::default()), Err(Error::ZeroNormRow { .. })));
    }

    #[test]
    fn mismatched_views_rejected() {
        assert!(EmbeddingBatch::new(DMatrix::zeros(3, 2), DMatrix::zeros(3, 3)).is_err());
        assert!(EmbeddingBatch::new(DMatrix::zeros(1, 2), DMatrix::zeros(1, 2)).is_err());
    }

    #[test]
    fn info_objective_pure_entropy() {
        let z = rng::normal_matrix(&mut rng::from_seed(2), 4, 3);
        let b = EmbeddingBatch::new(z.clone(), z).unwrap();
        let eye = vec![DMatrix::identity(3, 3); 4];
        let r = info_objective(&b, &eye, &eye, Some(1.25), &SslObjectiveConfig::default()).unwrap();
        assert_relative_eq!(r.loss, -1.25, epsilon = 1e-14);
    }

    #[test]
    fn info_objective_rank_deficient_without_jitter() {
        let b = batch(3, 3, 2);
        let s = vec![DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]); 3];
        let cfg = SslObjectiveConfig { jitter: 0.0, ..Default::default() };
        assert!(matches!(info_objective(&b, &s, &s, None, &cfg), Err(Error::RankDeficient { .. })));
        assert!(info_objective(&b, &s, &s, None, &SslObjectiveConfig::default()).is_ok());
    }

    #[test]
    fn objective_names_roundtrip() {
        for o in Objective::ALL {
            assert_eq!(Objective::parse(o.name()).unwrap(), o);
        }
        assert!(Objective::parse("barlow").is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SslObjectiveConfig::default().validate().is_ok());
        assert!(SslObjectiveConfig { temperature: 0.0, ..Default::default() }.validate().is_err());
        assert!(SslObjectiveConfig { alpha: -1.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn concatenated_mode_differs() {
        let b = batch(9, 12, 3);
        let per = vicreg_total(&b, &SslObjectiveConfig::default()).unwrap();
        let cat = vicreg_total(&b, &SslObjectiveConfig { cov_mode: CovMode::Concatenated, ..Default::default() }).unwrap();
        assert!(per.is_finite() && cat.is_finite() && per != cat);
    }
}
