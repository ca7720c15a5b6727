//! Minibatch SSL training of piecewise-affine encoders, per-step entropy
//! diagnostics, and linear-probe evaluation.

use std::io::Write;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cpa_net::{PwaNetwork, Tape, Var};
use crate::datagen::{format_float, PairSample, PairSource};
use crate::entropy::{logdet_batch_entropy, pairwise_lower_batch};
use crate::error::{Error, Result};
use crate::genbound::{one_hot, ridge_probe};
use crate::linalg::{column_means, row_covariance};
use crate::rng;
use crate::ssl_losses::{objective_on_tape, vicreg_covariance, vicreg_invariance, vicreg_variance, EmbeddingBatch, Objective, SslObjectiveConfig};

const BATCH_STREAM: u64 = 0;
const PROBE_STREAM: u64 = 1;
const DIAG_STREAM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Optimizer {
    Sgd,
    SgdMomentum { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for Optimizer {
    fn default() -> Self {
        Optimizer::Adam { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine decay from the base rate to 0 over the run.
    Cosine,
}

impl LrSchedule {
    /// Rate for 1-based `step` out of `total`.
    pub fn rate(self, base: f64, step: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => base,
            LrSchedule::Cosine => {
                let t = (step - 1) as f64 / total.max(1) as f64;
                0.5 * base * (1.0 + (std::f64::consts::PI * t).cos())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Pairs drawn per epoch; an epoch is `ceil(pairs_per_epoch / batch_size)` steps.
    pub pairs_per_epoch: usize,
    pub learning_rate: f64,
    pub optimizer: Optimizer,
    pub lr_schedule: LrSchedule,
    pub seed: u64,
    pub diagnostics_every: usize,
    /// Size of the fixed held-out batch used for entropy diagnostics.
    pub probe_batch: usize,
    /// Size of the fixed pair batch on which the logged loss is evaluated.
    pub diag_pairs: usize,
    /// Wall time makes traces non-reproducible, so it is logged as 0 unless enabled.
    pub record_wall_time: bool,
    /// Overrides the epoch-derived step count when set.
    pub max_steps: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            batch_size: 64,
            pairs_per_epoch: 1024,
            learning_rate: 1e-2,
            optimizer: Optimizer::default(),
            lr_schedule: LrSchedule::Cosine,
            seed: 0,
            diagnostics_every: 200,
            probe_batch: 1024,
            diag_pairs: 256,
            record_wall_time: false,
            max_steps: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config(format!("batch_size must be >= 2, got {}", self.batch_size)));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be > 0, got {}", self.learning_rate)));
        }
        if self.diagnostics_every == 0 {
            return Err(Error::Config("diagnostics_every must be >= 1".into()));
        }
        if self.probe_batch < 2 || self.diag_pairs < 2 {
            return Err(Error::Config("probe_batch and diag_pairs must be >= 2".into()));
        }
        match self.optimizer {
            Optimizer::Sgd => {}
            Optimizer::SgdMomentum { momentum } if (0.0..1.0).contains(&momentum) => {}
            Optimizer::Adam { beta1, beta2, eps } if (0.0..1.0).contains(&beta1) && (0.0..1.0).contains(&beta2) && eps > 0.0 => {}
            other => return Err(Error::Config(format!("optimizer parameters out of range: {other:?}"))),
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.pairs_per_epoch.div_ceil(self.batch_size).max(1)
    }

    pub fn total_steps(&self) -> usize {
        self.max_steps.unwrap_or(self.epochs * self.steps_per_epoch())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub step: usize,
    pub loss: f64,
    pub variance_term: f64,
    pub covariance_term: f64,
    pub invariance_term: f64,
    pub embedding_std: Vec<f64>,
    pub logdet_entropy: f64,
    pub pairwise_entropy: f64,
    pub wall_time_s: f64,
}

impl TraceRecord {
    pub fn min_std(&self) -> f64 {
        self.embedding_std.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn max_std(&self) -> f64 {
        self.embedding_std.iter().cloned().fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainTrace {
    pub records: Vec<TraceRecord>,
}

impl TrainTrace {
    pub fn first(&self) -> Option<&TraceRecord> {
        self.records.first()
    }

    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    pub fn header(k: usize) -> Vec<String> {
        let mut h: Vec<String> = ["step", "loss", "variance_term", "covariance_term", "invariance_term"].iter().map(|s| s.to_string()).collect();
        h.extend((0..k).map(|j| format!("std_{j}")));
        h.extend(["logdet_entropy", "pairwise_entropy", "wall_time_s"].iter().map(|s| s.to_string()));
        h
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let k = self.records.first().map_or(0, |r| r.embedding_std.len());
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(Self::header(k))?;
        for r in &self.records {
            let mut rec = vec![r.step.to_string(), format_float(r.loss), format_float(r.variance_term), format_float(r.covariance_term), format_float(r.invariance_term)];
            rec.extend(r.embedding_std.iter().map(|v| format_float(*v)));
            rec.extend([format_float(r.logdet_entropy), format_float(r.pairwise_entropy), format_float(r.wall_time_s)]);
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: std::io::Read>(r: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(r);
        let headers = rd.headers()?.clone();
        let k = headers.iter().filter(|h| h.starts_with("std_")).count();
        if headers.iter().collect::<Vec<_>>() != Self::header(k).iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::invalid("trace CSV header does not match the trace layout"));
        }
        let mut records = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let num = |i: usize| -> Result<f64> { rec[i].parse::<f64>().map_err(|_| Error::invalid(format!("bad trace value `{}`", &rec[i]))) };
            let step = rec[0].parse::<usize>().map_err(|_| Error::invalid("bad trace step"))?;
            records.push(TraceRecord {
                step,
                loss: num(1)?,
                variance_term: num(2)?,
                covariance_term: num(3)?,
                invariance_term: num(4)?,
                embedding_std: (0..k).map(|j| num(5 + j)).collect::<Result<_>>()?,
                logdet_entropy: num(5 + k)?,
                pairwise_entropy: num(6 + k)?,
                wall_time_s: num(7 + k)?,
            });
        }
        Ok(Self { records })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AbortInfo {
    pub step: usize,
    pub reason: String,
}

/// Training output. On abort `net` holds the last parameters for which the
/// loss and gradient were finite.
#[derive(Clone, Debug)]
pub struct TrainResult {
    pub net: PwaNetwork,
    pub trace: TrainTrace,
    pub abort: Option<AbortInfo>,
}

impl TrainResult {
    pub fn into_result(self) -> Result<(PwaNetwork, TrainTrace)> {
        match self.abort {
            Some(a) => Err(Error::TrainingAborted { step: a.step, reason: a.reason }),
            None => Ok((self.net, self.trace)),
        }
    }
}

struct OptimizerState {
    kind: Optimizer,
    lr: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl OptimizerState {
    fn new(kind: Optimizer, lr: f64, n: usize) -> Self {
        Self { kind, lr, m: vec![0.0; n], v: vec![0.0; n], t: 0 }
    }

    fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        self.t += 1;
        match self.kind {
            Optimizer::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    *p -= self.lr * g;
                }
            }
            Optimizer::SgdMomentum { momentum } => {
                for ((p, g), m) in params.iter_mut().zip(grads).zip(self.m.iter_mut()) {
                    *m = momentum * *m + g;
                    *p -= self.lr * *m;
                }
            }
            Optimizer::Adam { beta1, beta2, eps } => {
                let c1 = 1.0 - beta1.powi(self.t);
                let c2 = 1.0 - beta2.powi(self.t);
                for i in 0..params.len() {
                    let g = grads[i];
                    self.m[i] = beta1 * self.m[i] + (1.0 - beta1) * g;
                    self.v[i] = beta2 * self.v[i] + (1.0 - beta2) * g * g;
                    params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + eps);
                }
            }
        }
    }
}

/// Conditional covariances `Jᵢ·F·Fᵀ·Jᵢᵀ` of the encoder output around each
/// row, recorded on the tape.
///
/// When `Jᵢ·F` cannot reach full rank (fewer factor columns or a narrower
/// layer than the output), `jitter·I` is always added. Leaving it to the
/// numerical rank test would switch the ridge on and off near degenerate
/// parameters and make the objective jump.
fn conditional_covs(
    tape: &mut Tape,
    net: &PwaNetwork,
    params: &crate::cpa_net::NetParams,
    fwd: &crate::cpa_net::TapeForward,
    sources: &[usize],
    source: &dyn PairSource,
    jitter: f64,
) -> Result<Vec<Var>> {
    let k = net.output_dim();
    let narrowest = net.widths().into_iter().min().unwrap_or(0);
    let mut out = Vec::with_capacity(sources.len());
    for (i, &s) in sources.iter().enumerate() {
        let j = net.jacobian_on_tape(tape, params, fwd, i)?;
        let factor = source.view_cov_factor(s);
        let singular = factor.ncols().min(narrowest) < k;
        let f = tape.leaf(factor);
        let jf = tape.matmul(j, f)?;
        let jft = tape.transpose(jf);
        let sigma = tape.matmul(jf, jft)?;
        out.push(if singular && jitter > 0.0 {
            let ridge = tape.leaf(DMatrix::identity(k, k) * jitter);
            tape.add(sigma, ridge)?
        } else {
            sigma
        });
    }
    Ok(out)
}

/// Objective value and flat parameter gradient on one pair batch.
pub fn batch_loss_and_grad(
    net: &PwaNetwork,
    objective: Objective,
    cfg: &SslObjectiveConfig,
    pairs: &PairSample,
    source: &dyn PairSource,
    with_grad: bool,
) -> Result<(f64, Option<Vec<f64>>)> {
    let mut tape = Tape::new();
    let params = net.params_on_tape(&mut tape);
    let x = tape.leaf(pairs.x.clone());
    let xp = tape.leaf(pairs.x_prime.clone());
    let fa = net.forward_on_tape(&mut tape, &params, x)?;
    let fb = net.forward_on_tape(&mut tape, &params, xp)?;
    let loss = if objective.needs_sigmas() {
        let sa = conditional_covs(&mut tape, net, &params, &fa, &pairs.sources, source, cfg.jitter)?;
        let sb = conditional_covs(&mut tape, net, &params, &fb, &pairs.sources, source, cfg.jitter)?;
        objective_on_tape(&mut tape, objective, fa.output, fb.output, Some((&sa, &sb)), cfg)?
    } else {
        objective_on_tape(&mut tape, objective, fa.output, fb.output, None, cfg)?
    };
    let value = tape.scalar(loss);
    if !with_grad {
        return Ok((value, None));
    }
    let g = tape.grad(loss)?;
    Ok((value, Some(net.grads_flat(&tape, &g, &params))))
}

struct Diagnostics {
    probe_x: DMatrix<f64>,
    pairs: PairSample,
}

impl Diagnostics {
    fn new(source: &dyn PairSource, cfg: &TrainConfig) -> Self {
        let (probe_x, _) = source.sample_labeled_with(&mut rng::from_seed(rng::derive(cfg.seed, PROBE_STREAM)), cfg.probe_batch);
        let pairs = source.sample_pairs_with(&mut rng::from_seed(rng::derive(cfg.seed, DIAG_STREAM)), cfg.diag_pairs);
        Self { probe_x, pairs }
    }

    fn record(&self, net: &PwaNetwork, objective: Objective, obj: &SslObjectiveConfig, source: &dyn PairSource, step: usize, wall: f64) -> Result<TraceRecord> {
        let (loss, _) = batch_loss_and_grad(net, objective, obj, &self.pairs, source, false)?;
        let z = net.forward_batch(&self.pairs.x)?;
        let zp = net.forward_batch(&self.pairs.x_prime)?;
        let batch = EmbeddingBatch::new(z.clone(), zp)?;
        let probe = net.forward_batch(&self.probe_x)?;
        let cov = row_covariance(&probe);
        Ok(TraceRecord {
            step,
            loss,
            variance_term: vicreg_variance(&z, obj)?,
            covariance_term: vicreg_covariance(&z)?,
            invariance_term: vicreg_invariance(&batch)?,
            embedding_std: cov.diagonal().iter().map(|v| v.max(0.0).sqrt()).collect(),
            logdet_entropy: logdet_batch_entropy(&probe, obj.logdet_beta)?.value,
            pairwise_entropy: pairwise_lower_batch(&probe, obj.pairwise_bandwidth)?.value,
            wall_time_s: wall,
        })
    }
}

/// Trains `net` on view pairs from `source`. Deterministic given the config.
pub fn train_ssl(net: &PwaNetwork, source: &dyn PairSource, objective: Objective, obj: &SslObjectiveConfig, cfg: &TrainConfig) -> Result<TrainResult> {
    obj.validate()?;
    cfg.validate()?;
    crate::error::ensure_dim(source.input_dim(), net.input_dim())?;
    let start = Instant::now();
    let wall = |s: &Instant| if cfg.record_wall_time { s.elapsed().as_secs_f64() } else { 0.0 };
    let diag = Diagnostics::new(source, cfg);
    let mut net = net.clone();
    let mut trace = TrainTrace::default();
    trace.records.push(diag.record(&net, objective, obj, source, 0, wall(&start))?);
    let total = cfg.total_steps();
    let mut params = net.params_flat();
    let mut opt = OptimizerState::new(cfg.optimizer, cfg.learning_rate, params.len());
    let mut batch_rng = rng::from_seed(rng::derive(cfg.seed, BATCH_STREAM));
    for step in 1..=total {
        let pairs = source.sample_pairs_with(&mut batch_rng, cfg.batch_size);
        let abort = |reason: String| AbortInfo { step, reason };
        let (loss, grads) = match batch_loss_and_grad(&net, objective, obj, &pairs, source, true) {
            Ok((l, g)) => (l, g.expect("gradient requested")),
            Err(e) if e.is_numerical() => return Ok(TrainResult { net, trace, abort: Some(abort(e.to_string())) }),
            Err(e) => return Err(e),
        };
        if !loss.is_finite() {
            return Ok(TrainResult { net, trace, abort: Some(abort(format!("non-finite loss {loss}"))) });
        }
        if grads.iter().any(|g| !g.is_finite()) {
            return Ok(TrainResult { net, trace, abort: Some(abort("non-finite gradient".into())) });
        }
        let mut next = params.clone();
        opt.lr = cfg.lr_schedule.rate(cfg.learning_rate, step, total);
        opt.step(&mut next, &grads);
        if next.iter().any(|p| !p.is_finite()) {
            return Ok(TrainResult { net, trace, abort: Some(abort("non-finite parameters after update".into())) });
        }
        params = next;
        net.set_params_flat(&params)?;
        if step % cfg.diagnostics_every == 0 || step == total {
            match diag.record(&net, objective, obj, source, step, wall(&start)) {
                Ok(r) => trace.records.push(r),
                Err(e) if e.is_numerical() => return Ok(TrainResult { net, trace, abort: Some(abort(e.to_string())) }),
                Err(e) => return Err(e),
            }
        }
    }
    Ok(TrainResult { net, trace, abort: None })
}

/// Least-squares probe on centered embeddings with an unpenalized intercept
/// (the class frequencies).
#[derive(Clone, Debug, PartialEq)]
pub struct LinearProbe {
    pub weight: DMatrix<f64>,
    pub center: DVector<f64>,
    pub intercept: DVector<f64>,
}

impl LinearProbe {
    pub fn fit(z: &DMatrix<f64>, labels: &[usize], n_classes: usize, ridge: f64) -> Result<Self> {
        crate::error::ensure_dim(z.nrows(), labels.len())?;
        if labels.is_empty() {
            return Err(Error::InsufficientSamples { needed: 1, got: 0 });
        }
        if labels.iter().any(|&l| l >= n_classes) {
            return Err(Error::invalid("labels must lie in 0..n_classes"));
        }
        let center = column_means(z);
        let zc = DMatrix::from_fn(z.nrows(), z.ncols(), |i, j| z[(i, j)] - center[j]);
        let y = one_hot(labels, n_classes);
        let intercept = column_means(&y);
        let yc = DMatrix::from_fn(y.nrows(), y.ncols(), |i, j| y[(i, j)] - intercept[j]);
        let weight = ridge_probe(&zc.transpose(), &yc, ridge)?;
        Ok(Self { weight, center, intercept })
    }

    /// Argmax class per row; ties go to the lowest class index.
    pub fn predict(&self, z: &DMatrix<f64>) -> Vec<usize> {
        (0..z.nrows())
            .map(|i| {
                let zc = z.row(i).transpose() - &self.center;
                let scores = &self.weight * zc + &self.intercept;
                let mut best = 0;
                for c in 1..scores.len() {
                    if scores[c] > scores[best] {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }

    pub fn accuracy(&self, z: &DMatrix<f64>, labels: &[usize]) -> f64 {
        let pred = self.predict(z);
        pred.iter().zip(labels).filter(|(a, b)| a == b).count() as f64 / labels.len().max(1) as f64
    }
}

/// Accuracy of a linear probe fitted on frozen training embeddings.
pub fn linear_probe(net: &PwaNetwork, train: (&DMatrix<f64>, &[usize]), test: (&DMatrix<f64>, &[usize]), ridge: f64) -> Result<f64> {
    let n_classes = train.1.iter().chain(test.1).max().map_or(1, |m| m + 1);
    let probe = LinearProbe::fit(&net.forward_batch(train.0)?, train.1, n_classes, ridge)?;
    crate::error::ensure_dim(test.0.nrows(), test.1.len())?;
    Ok(probe.accuracy(&net.forward_batch(test.0)?, test.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cpa_net::Activation;
    use crate::datagen::{two_moons, NoisyPointSet};

    fn moons() -> NoisyPointSet {
        let (x, y) = two_moons(200, 0.05, 1).unwrap();
        NoisyPointSet::new(x, y, 0.1).unwrap()
    }

    fn small_cfg(epochs: usize) -> TrainConfig {
        TrainConfig { epochs, batch_size: 32, pairs_per_epoch: 64, probe_batch: 64, diag_pairs: 32, diagnostics_every: 2, ..Default::default() }
    }

    #[test]
    fn zero_epochs_keeps_net() {
        let net = PwaNetwork::random(&[2, 8, 3], Activation::Relu, 1).unwrap();
        let res = train_ssl(&net, &moons(), Objective::Vicreg, &SslObjectiveConfig::default(), &small_cfg(0)).unwrap();
        assert_eq!(res.net.params_flat(), net.params_flat());
        assert_eq!(res.trace.records.len(), 1);
        assert_eq!(res.trace.records[0].step, 0);
    }

    #[test]
    fn training_is_reproducible_and_steps_increase() {
        let net = PwaNetwork::random(&[2, 8, 3], Activation::LeakyRelu { slope: 0.1 }, 2).unwrap();
        let run = || train_ssl(&net, &moons(), Objective::Vicreg, &SslObjectiveConfig::default(), &small_cfg(3)).unwrap();
        let (a, b) = (run(), run());
        assert_eq!(a.net.params_flat(), b.net.params_flat());
        assert_eq!(a.trace, b.trace);
        assert!(a.trace.records.windows(2).all(|w| w[0].step < w[1].step));
        assert_eq!(a.trace.last().unwrap().step, 6);
    }

    #[test]
    fn info_objective_trains() {
        let net = PwaNetwork::random(&[2, 6, 2], Activation::LeakyRelu { slope: 0.1 }, 3).unwrap();
        let res = train_ssl(&net, &moons(), Objective::InfoObjective, &SslObjectiveConfig::default(), &small_cfg(1)).unwrap();
        assert!(res.abort.is_none());
        assert!(res.trace.last().unwrap().loss.is_finite());
    }

    #[test]
    fn trace_csv_roundtrip() {
        let net = PwaNetwork::random(&[2, 4, 2], Activation::Relu, 4).unwrap();
        let res = train_ssl(&net, &moons(), Objective::InfoNce, &SslObjectiveConfig::default(), &small_cfg(1)).unwrap();
        let mut buf = Vec::new();
        res.trace.write_csv(&mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("step,loss,variance_term,covariance_term,invariance_term,std_0,std_1,logdet_entropy"));
        assert_eq!(TrainTrace::read_csv(buf.as_slice()).unwrap(), res.trace);
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(TrainConfig { batch_size: 1, ..Default::default() }.validate().is_err());
        assert!(TrainConfig { learning_rate: 0.0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn probe_constant_labels() {
        let z = rng::normal_matrix(&mut rng::from_seed(1), 20, 3);
        let p = LinearProbe::fit(&z, &[1; 20], 3, 0.0).unwrap();
        assert_eq!(p.accuracy(&z, &[1; 20]), 1.0);
    }

    #[test]
    fn probe_realizable() {
        let labels: Vec<usize> = (0..30).map(|i| i % 3).collect();
        let z = one_hot(&labels, 3) * 2.0;
        let p = LinearProbe::fit(&z, &labels, 3, 0.0).unwrap();
        assert_eq!(p.accuracy(&z, &labels), 1.0);
    }
}
