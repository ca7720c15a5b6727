//! Experiment configuration and orchestration: single training runs, the
//! multi-seed method comparison, entropy tracking and bound evaluation, with
//! results persisted under `<out>/<experiment>/<seed>/`.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::cpa_net::{Activation, PwaNetwork};
use crate::datagen::{format_float, read_labeled_csv, two_moons, NoisyPointSet, PairSource, PrototypeDataset, PrototypeSpec};
use crate::error::{Error, Result};
use crate::genbound::{evaluate_bound, BoundInputs, BoundReport, Encoder, DEFAULT_SIGN_DRAWS};
use crate::rng;
use crate::ssl_losses::{Objective, SslObjectiveConfig};
use crate::trainer::{train_ssl, LinearProbe, TrainConfig, TrainResult, TrainTrace};

pub const SCHEMA_VERSION: u32 = 1;

const DATA_STREAM: u64 = 10;
const PROBE_STREAM: u64 = 11;
const NET_STREAM: u64 = 12;
const BOUND_STREAM: u64 = 13;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DataConfig {
    /// Two-moons base points; views add isotropic noise of scale `view_noise`.
    TwoMoons { n_points: usize, noise: f64, view_noise: f64 },
    /// Random prototype Gaussians; views are two draws around one prototype.
    Prototypes { spec: PrototypeSpec },
    /// Labeled points from a CSV file (`x0..,label`), viewed like two-moons.
    Csv { path: PathBuf, view_noise: f64 },
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig::TwoMoons { n_points: 512, noise: 0.05, view_noise: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub activation: Activation,
    /// Uniform init bound is `init_gain / sqrt(fan_in)`.
    pub init_gain: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self { hidden: vec![32, 32], output_dim: 8, activation: Activation::LeakyRelu { slope: 0.1 }, init_gain: 4.0 }
    }
}

/// `[objective]` holds `name` next to the flattened loss hyperparameters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "toml::Table", into = "toml::Table")]
pub struct ObjectiveSection {
    pub name: Objective,
    pub params: SslObjectiveConfig,
}

impl TryFrom<toml::Table> for ObjectiveSection {
    type Error = String;

    fn try_from(mut t: toml::Table) -> std::result::Result<Self, String> {
        let name = match t.remove("name") {
            Some(toml::Value::String(n)) => Objective::parse(&n).map_err(|e| e.to_string())?,
            Some(other) => return Err(format!("objective name must be a string, got {other}")),
            None => Objective::default(),
        };
        let params = toml::Value::Table(t).try_into().map_err(|e: toml::de::Error| e.to_string())?;
        Ok(Self { name, params })
    }
}

impl From<ObjectiveSection> for toml::Table {
    fn from(o: ObjectiveSection) -> Self {
        let mut t = toml::Table::try_from(&o.params).expect("objective params serialize to a table");
        t.insert("name".into(), toml::Value::String(o.name.name().into()));
        t
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProbeConfig {
    pub ridge: f64,
    pub n_train: usize,
    pub n_test: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self { ridge: 1.0, n_train: 512, n_test: 2000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BoundConfig {
    /// Labeled set size n.
    pub n_labeled: usize,
    /// Unlabeled pair count m.
    pub n_unlabeled: usize,
    pub n_test: usize,
    pub delta: f64,
    pub n_sign_draws: usize,
    /// Encoders used for the sup estimates: the trained one, its
    /// initialization, then noise-perturbed copies of the trained weights.
    pub ensemble_size: usize,
    /// Perturbation std relative to the RMS of the trained parameters.
    pub perturb_scale: f64,
}

impl Default for BoundConfig {
    fn default() -> Self {
        Self { n_labeled: 200, n_unlabeled: 200, n_test: 2000, delta: 0.1, n_sign_draws: DEFAULT_SIGN_DRAWS, ensemble_size: 8, perturb_scale: 0.1 }
    }
}

/// Everything a run needs. `train.seed` is overwritten with the run seed.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    #[serde(default = "default_experiment")]
    pub experiment: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub net: NetConfig,
    #[serde(default)]
    pub objective: ObjectiveSection,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub probe: ProbeConfig,
    #[serde(default)]
    pub bound: BoundConfig,
}

fn default_experiment() -> String {
    "default".into()
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl Default for ExperimentConfig {
    /// The standard two-moons run.
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            experiment: default_experiment(),
            seed: 0,
            out_dir: default_out_dir(),
            data: DataConfig::default(),
            net: NetConfig::default(),
            objective: ObjectiveSection::default(),
            train: TrainConfig::default(),
            probe: ProbeConfig::default(),
            bound: BoundConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!("schema_version {} is not supported (expected {SCHEMA_VERSION})", self.schema_version)));
        }
        if self.experiment.is_empty() || self.experiment.contains(['/', '\\']) {
            return Err(Error::Config(format!("experiment name {:?} is not a plain directory name", self.experiment)));
        }
        match &self.data {
            DataConfig::TwoMoons { n_points, noise, view_noise } => {
                if *n_points == 0 || n_points % 2 != 0 {
                    return Err(Error::Config(format!("data.n_points must be positive and even, got {n_points}")));
                }
                if !(*noise >= 0.0 && *view_noise >= 0.0) {
                    return Err(Error::Config("data noise scales must be >= 0".into()));
                }
            }
            DataConfig::Prototypes { .. } => {}
            DataConfig::Csv { view_noise, .. } => {
                if !(*view_noise >= 0.0) {
                    return Err(Error::Config("data.view_noise must be >= 0".into()));
                }
            }
        }
        if self.bound.ensemble_size == 0 || !(self.bound.perturb_scale >= 0.0) || self.bound.n_sign_draws == 0 {
            return Err(Error::Config("bound needs ensemble_size >= 1, perturb_scale >= 0, n_sign_draws >= 1".into()));
        }
        if !(self.bound.delta > 0.0 && self.bound.delta < 1.0) {
            return Err(Error::Config(format!("bound.delta must lie in (0, 1), got {}", self.bound.delta)));
        }
        if self.net.output_dim == 0 || self.net.hidden.contains(&0) {
            return Err(Error::Config("layer widths must be >= 1".into()));
        }
        if !(self.net.init_gain > 0.0) {
            return Err(Error::Config("net.init_gain must be > 0".into()));
        }
        if !(self.probe.ridge >= 0.0) || self.probe.n_train < 2 || self.probe.n_test == 0 {
            return Err(Error::Config("probe needs ridge >= 0, n_train >= 2, n_test >= 1".into()));
        }
        self.objective.params.validate().map_err(as_config)?;
        self.train.validate().map_err(as_config)?;
        Ok(())
    }

    /// Applies `section.key=value` overrides; values parse as TOML literals
    /// and fall back to plain strings.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let mut doc = toml::Value::try_from(self).map_err(|e| Error::Config(e.to_string()))?;
        for item in overrides {
            let (path, raw) = item.split_once('=').ok_or_else(|| Error::Config(format!("override {item:?} is not key=value")))?;
            let value = parse_literal(raw.trim());
            set_path(&mut doc, path.trim(), value)?;
        }
        let cfg: Self = doc.try_into().map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn run_dir(&self, seed: u64) -> PathBuf {
        self.out_dir.join(&self.experiment).join(seed.to_string())
    }

    pub fn widths(&self, input_dim: usize) -> Vec<usize> {
        let mut w = vec![input_dim];
        w.extend(&self.net.hidden);
        w.push(self.net.output_dim);
        w
    }
}

fn as_config(e: Error) -> Error {
    match e {
        Error::Config(_) => e,
        other => Error::Config(other.to_string()),
    }
}

fn parse_literal(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(doc: &mut toml::Value, path: &str, value: toml::Value) -> Result<()> {
    let mut cur = doc;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, key) in parts.iter().enumerate() {
        let table = cur.as_table_mut().ok_or_else(|| Error::Config(format!("{path}: {key} is not inside a table")))?;
        if i + 1 == parts.len() {
            table.insert(key.to_string(), value);
            return Ok(());
        }
        cur = table.entry(key.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
    }
    Err(Error::Config("empty override key".into()))
}

/// Owned data source for a run.
pub enum DataSource {
    Points(NoisyPointSet),
    Prototypes(PrototypeDataset),
}

impl DataSource {
    pub fn build(cfg: &DataConfig, seed: u64) -> Result<Self> {
        let s = rng::derive(seed, DATA_STREAM);
        Ok(match cfg {
            DataConfig::TwoMoons { n_points, noise, view_noise } => {
                let (x, y) = two_moons(*n_points, *noise, s)?;
                DataSource::Points(NoisyPointSet::new(x, y, *view_noise)?)
            }
            DataConfig::Prototypes { spec } => DataSource::Prototypes(PrototypeDataset::random(spec, s)?),
            DataConfig::Csv { path, view_noise } => {
                let file = fs::File::open(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                let (x, y) = read_labeled_csv(file)?;
                DataSource::Points(NoisyPointSet::new(x, y, *view_noise)?)
            }
        })
    }

    pub fn as_source(&self) -> &dyn PairSource {
        match self {
            DataSource::Points(p) => p,
            DataSource::Prototypes(p) => p,
        }
    }
}

pub type Labeled = (DMatrix<f64>, Vec<usize>);

/// Seeded probe train and test sets.
pub fn probe_sets(source: &dyn PairSource, probe: &ProbeConfig, seed: u64) -> (Labeled, Labeled) {
    let mut r = rng::from_seed(rng::derive(seed, PROBE_STREAM));
    let train = source.sample_labeled_with(&mut r, probe.n_train);
    let test = source.sample_labeled_with(&mut r, probe.n_test);
    (train, test)
}

pub fn initial_net(cfg: &ExperimentConfig, input_dim: usize, seed: u64) -> Result<PwaNetwork> {
    PwaNetwork::random_with_gain(&cfg.widths(input_dim), cfg.net.activation, cfg.net.init_gain, rng::derive(seed, NET_STREAM))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: Objective,
    pub seed: u64,
    pub steps: usize,
    pub aborted: Option<String>,
    pub probe_accuracy: Option<f64>,
    pub initial_logdet_entropy: f64,
    pub final_logdet_entropy: f64,
    pub final_min_std: f64,
    pub final_max_std: f64,
}

#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub result: TrainResult,
    pub summary: RunSummary,
}

/// Trains one method on one seed and linear-probes the result. A training
/// abort is reported in the summary with no accuracy.
pub fn train_once(cfg: &ExperimentConfig, method: Objective, seed: u64) -> Result<RunOutcome> {
    let data = DataSource::build(&cfg.data, seed)?;
    let source = data.as_source();
    let net = initial_net(cfg, source.input_dim(), seed)?;
    let train = TrainConfig { seed, ..cfg.train };
    let result = train_ssl(&net, source, method, &cfg.objective.params, &train)?;
    let probe_accuracy = match result.abort {
        Some(_) => None,
        None => {
            let ((px, py), (tx, ty)) = probe_sets(source, &cfg.probe, seed);
            let f = LinearProbe::fit(&result.net.forward_batch(&px)?, &py, source.n_classes(), cfg.probe.ridge)?;
            Some(f.accuracy(&result.net.forward_batch(&tx)?, &ty))
        }
    };
    let first = result.trace.first().expect("trace starts with the initial record");
    let last = result.trace.last().expect("trace is non-empty");
    let summary = RunSummary {
        method,
        seed,
        steps: last.step,
        aborted: result.abort.as_ref().map(|a| format!("step {}: {}", a.step, a.reason)),
        probe_accuracy,
        initial_logdet_entropy: first.logdet_entropy,
        final_logdet_entropy: last.logdet_entropy,
        final_min_std: last.min_std(),
        final_max_std: last.max_std(),
    };
    Ok(RunOutcome { result, summary })
}

/// Pretty JSON with a trailing newline; creates missing parent directories.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Writes `trace.csv`, `checkpoint.json` and `report.json` into `dir`.
pub fn write_run(dir: &Path, trace: &TrainTrace, net: &PwaNetwork, report: &impl Serialize) -> Result<()> {
    fs::create_dir_all(dir)?;
    trace.write_csv(fs::File::create(dir.join("trace.csv"))?)?;
    fs::write(dir.join("checkpoint.json"), net.to_json()? + "\n")?;
    write_json(&dir.join("report.json"), report)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonRow {
    pub method: String,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    pub n_seeds: usize,
    pub accuracies: Vec<f64>,
    /// Seeds whose training aborted; the row is failed when non-empty.
    pub failed_seeds: Vec<u64>,
}

impl ComparisonRow {
    pub fn failed(&self) -> bool {
        !self.failed_seeds.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

pub const MIN_PUBLISHED_SEEDS: usize = 3;

impl ComparisonTable {
    pub fn row(&self, method: &str) -> Option<&ComparisonRow> {
        self.rows.iter().find(|r| r.method == method)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(w);
        wr.write_record(["method", "mean_accuracy", "std_accuracy", "n_seeds", "status"])?;
        for r in &self.rows {
            let status = if r.failed() { "failed" } else { "ok" };
            wr.write_record([r.method.clone(), format_float(r.mean_accuracy), format_float(r.std_accuracy), r.n_seeds.to_string(), status.into()])?;
        }
        wr.flush()?;
        Ok(())
    }

    /// Markdown table with `mean ± std` accuracies in percent.
    pub fn to_markdown(&self) -> String {
        let mut s = String::from("| Method | Accuracy (%) | Seeds |\n|---|---|---|\n");
        for r in &self.rows {
            let acc = if r.failed() { "failed".to_string() } else { format!("{:.2} ± {:.2}", 100.0 * r.mean_accuracy, 100.0 * r.std_accuracy) };
            s.push_str(&format!("| {} | {} | {} |\n", r.method, acc, r.n_seeds));
        }
        s
    }
}

/// Mean and sample standard deviation.
pub fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

/// Trains every method on seeds `cfg.seed .. cfg.seed + n_seeds`, probes each
/// encoder and tabulates the accuracies. Per-seed artifacts go under
/// `<out>/<experiment>/<seed>/<method>/` when `persist` is set.
pub fn run_comparison(cfg: &ExperimentConfig, methods: &[Objective], n_seeds: usize, persist: bool) -> Result<ComparisonTable> {
    cfg.validate()?;
    if methods.is_empty() {
        return Err(Error::Config("no methods given".into()));
    }
    if n_seeds < MIN_PUBLISHED_SEEDS {
        return Err(Error::Config(format!("a comparison needs at least {MIN_PUBLISHED_SEEDS} seeds, got {n_seeds}")));
    }
    let mut rows = Vec::with_capacity(methods.len());
    for &method in methods {
        let outcomes = rng::sharded(n_seeds, |i| train_once(cfg, method, cfg.seed + i as u64));
        let mut accuracies = Vec::with_capacity(n_seeds);
        let mut failed_seeds = Vec::new();
        for o in outcomes {
            let o = o?;
            if persist {
                let dir = cfg.run_dir(o.summary.seed).join(method_slug(method));
                write_run(&dir, &o.result.trace, &o.result.net, &o.summary)?;
            }
            match o.summary.probe_accuracy {
                Some(a) => accuracies.push(a),
                None => failed_seeds.push(o.summary.seed),
            }
        }
        let (mean_accuracy, std_accuracy) = mean_std(&accuracies);
        rows.push(ComparisonRow { method: method.name().into(), mean_accuracy, std_accuracy, n_seeds, accuracies, failed_seeds });
    }
    Ok(ComparisonTable { rows })
}

/// Directory-safe method name.
pub fn method_slug(method: Objective) -> String {
    method.name().replace('+', "_")
}

#[derive(Clone, Debug)]
pub struct MethodTrace {
    pub method: Objective,
    pub trace: TrainTrace,
    pub aborted: Option<String>,
}

/// Trains each method for exactly `n_steps` steps on identical data and seed,
/// logging LogDet and pairwise entropy diagnostics.
pub fn run_entropy_tracking(cfg: &ExperimentConfig, methods: &[Objective], n_steps: usize) -> Result<Vec<MethodTrace>> {
    cfg.validate()?;
    let data = DataSource::build(&cfg.data, cfg.seed)?;
    let source = data.as_source();
    let net = initial_net(cfg, source.input_dim(), cfg.seed)?;
    let train = TrainConfig { seed: cfg.seed, max_steps: Some(n_steps), ..cfg.train };
    methods
        .iter()
        .map(|&method| {
            let r = train_ssl(&net, source, method, &cfg.objective.params, &train)?;
            let aborted = r.abort.map(|a| format!("step {}: {}", a.step, a.reason));
            Ok(MethodTrace { method, trace: r.trace, aborted })
        })
        .collect()
}

/// Extra encoders for the complexity estimates with a provenance label each.
/// The trained encoder itself is always part of the ensemble and is listed
/// first in the labels.
pub fn bound_ensemble(trained: &PwaNetwork, initial: Option<&PwaNetwork>, b: &BoundConfig, seed: u64) -> Result<(Vec<PwaNetwork>, Vec<String>)> {
    let mut nets = Vec::new();
    let mut labels = vec!["trained".to_string()];
    if let Some(init) = initial.filter(|_| b.ensemble_size > 1) {
        nets.push(init.clone());
        labels.push("initial".into());
    }
    let params = trained.params_flat();
    let rms = (params.iter().map(|p| p * p).sum::<f64>() / params.len().max(1) as f64).sqrt();
    let mut r = rng::from_seed(rng::derive(seed, BOUND_STREAM + 2));
    while nets.len() + 1 < b.ensemble_size {
        let noisy: Vec<f64> = params.iter().map(|p| p + b.perturb_scale * rms * rng::normal(&mut r)).collect();
        let mut net = trained.clone();
        net.set_params_flat(&noisy)?;
        nets.push(net);
        labels.push(format!("perturbed(scale={})", b.perturb_scale));
    }
    Ok((nets, labels))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundOutcome {
    pub report: BoundReport,
    pub ensemble: Vec<String>,
}

/// Labeled set, unlabeled pairs with their labels, and optional test set.
pub struct BoundData<'a> {
    pub labeled: (&'a DMatrix<f64>, &'a [usize]),
    pub pairs: (&'a DMatrix<f64>, &'a DMatrix<f64>, &'a [usize]),
    pub test: Option<(&'a DMatrix<f64>, &'a [usize])>,
    pub n_classes: usize,
}

pub fn evaluate_encoder_bound(net: &PwaNetwork, initial: Option<&PwaNetwork>, data: &BoundData<'_>, b: &BoundConfig, seed: u64) -> Result<BoundOutcome> {
    let (extra, ensemble) = bound_ensemble(net, initial, b, seed)?;
    let inputs = BoundInputs {
        labeled_x: data.labeled.0,
        labeled_y: data.labeled.1,
        unlabeled_x: data.pairs.0,
        unlabeled_x_prime: data.pairs.1,
        unlabeled_y: data.pairs.2,
        n_classes: data.n_classes,
        encoder: net,
        ensemble: extra.iter().map(|n| n as &dyn Encoder).collect(),
        delta: b.delta,
        class_prior: None,
        n_sign_draws: b.n_sign_draws,
        seed: rng::derive(seed, BOUND_STREAM + 1),
        test: data.test,
    };
    Ok(BoundOutcome { report: evaluate_bound(&inputs)?, ensemble })
}

/// Trains an encoder with the configured objective, then evaluates the
/// downstream bound on fresh labeled and unlabeled samples.
pub fn run_bound(cfg: &ExperimentConfig, seed: u64) -> Result<(BoundOutcome, RunOutcome)> {
    let outcome = train_once(cfg, cfg.objective.name, seed)?;
    let data = DataSource::build(&cfg.data, seed)?;
    let source = data.as_source();
    let init = initial_net(cfg, source.input_dim(), seed)?;
    let b = &cfg.bound;
    let mut r = rng::from_seed(rng::derive(seed, BOUND_STREAM));
    let (lx, ly) = source.sample_labeled_with(&mut r, b.n_labeled);
    let pairs = source.sample_pairs_with(&mut r, b.n_unlabeled);
    let (tx, ty) = source.sample_labeled_with(&mut r, b.n_test);
    let bd = BoundData { labeled: (&lx, &ly), pairs: (&pairs.x, &pairs.x_prime, &pairs.labels), test: Some((&tx, &ty)), n_classes: source.n_classes() };
    let bound = evaluate_encoder_bound(&outcome.result.net, Some(&init), &bd, b, seed)?;
    Ok((bound, outcome))
}
