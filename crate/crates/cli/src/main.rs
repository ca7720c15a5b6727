use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;

use ssl_infolab::cpa_net::{Activation, PwaNetwork};
use ssl_infolab::datagen::{format_float, read_labeled_csv, read_pairs_csv, two_moons, PrototypeDataset, PrototypeSpec};
use ssl_infolab::entropy::{mc_entropy, moment_upper_bound, pairwise_bound, PairwiseSide};
use ssl_infolab::gaussian::GaussianMixture;
use ssl_infolab::harness::{self, ExperimentConfig};
use ssl_infolab::ssl_losses::Objective;
use ssl_infolab::stats_validation::{self as sv, CovMode, GmmLabState};
use ssl_infolab::Error;

#[derive(Parser)]
#[command(name = "ssl-infolab", version, about = "Entropy estimators, SSL objectives and generalization bounds on toy data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Entropy estimates of a Gaussian mixture given as JSON.
    Entropy(EntropyArgs),
    /// Train one encoder and linear-probe it.
    Train(RunArgs),
    /// Train an encoder and evaluate the downstream generalization bound.
    Bound(BoundArgs),
    /// Normality sweep of network outputs over input noise scales.
    ValidateGaussianity(GaussArgs),
    /// Histogram of pairwise distances between points.
    PairwiseDist(DistArgs),
    /// GMM likelihood ascent with optionally trainable inputs.
    GmmCollapse(GmmArgs),
    /// Multi-seed linear-probe comparison of SSL objectives.
    Compare(CompareArgs),
    /// Entropy diagnostics along training for several objectives.
    TrackEntropy(TrackArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML experiment config; the standard two-moons run when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// `section.key=value` override, applied after the file. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output root; overrides `out_dir`.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl ConfigArgs {
    fn load(&self) -> Result<ExperimentConfig, Error> {
        let base = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        let mut cfg = base.with_overrides(&self.overrides)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out_dir = o.clone();
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct EntropyArgs {
    #[arg(long)]
    mixture: PathBuf,
    #[arg(long, default_value_t = 100_000)]
    mc_samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    /// Overrides `objective.name`.
    #[arg(long)]
    method: Option<String>,
}

#[derive(Args)]
struct BoundArgs {
    #[command(flatten)]
    run: RunArgs,
    /// Labeled CSV (`x0..,label`). With the two flags below this evaluates a
    /// saved encoder instead of training one.
    #[arg(long, requires_all = ["unlabeled_pairs", "checkpoint"])]
    labeled: Option<PathBuf>,
    /// Unlabeled pairs CSV (`x0..,xp0..,label`); labels give the class split.
    #[arg(long, requires_all = ["labeled", "checkpoint"])]
    unlabeled_pairs: Option<PathBuf>,
    /// Encoder checkpoint JSON.
    #[arg(long, requires_all = ["labeled", "unlabeled_pairs"])]
    checkpoint: Option<PathBuf>,
    /// Overrides `bound.delta`.
    #[arg(long)]
    delta: Option<f64>,
    /// Exit 4 when the measured test loss exceeds the bound.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct GaussArgs {
    /// Network checkpoint JSON; a random network from `--widths` otherwise.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    #[arg(long, value_delimiter = ',', default_value = "4,32,32,32,32,4")]
    widths: Vec<usize>,
    #[arg(long, default_value = "relu")]
    activation: String,
    #[arg(long, default_value_t = 8)]
    prototypes: usize,
    #[arg(long, default_value_t = 2)]
    rank: usize,
    #[arg(long, value_delimiter = ',', default_value = "0.03,0.1,0.3,1,3,10")]
    noise_grid: Vec<f64>,
    #[arg(long, default_value_t = 512)]
    n_per_point: usize,
    /// Test the columns of a feature CSV (`x0..,label`) as one cloud instead.
    #[arg(long, conflicts_with = "checkpoint")]
    samples: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out/gaussianity")]
    out: PathBuf,
}

#[derive(Args)]
struct DistArgs {
    /// Labeled CSV (`x0..,label`); two-moons points otherwise.
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long, default_value_t = 1000)]
    n_points: usize,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 50)]
    bins: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out/pairwise-dist")]
    out: PathBuf,
}

#[derive(Args)]
struct GmmArgs {
    #[arg(long, default_value_t = 200)]
    n_points: usize,
    #[arg(long, default_value_t = 0.05)]
    noise: f64,
    #[arg(long, default_value_t = 10)]
    components: usize,
    /// `full` or `fixed:<sigma>`.
    #[arg(long, default_value = "full")]
    cov: String,
    #[arg(long, default_value_t = 0.1)]
    lr_inputs: f64,
    #[arg(long, default_value_t = 0.1)]
    lr_params: f64,
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value = "out/gmm-collapse")]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long, value_delimiter = ',', default_value = "vicreg,vicreg+pairwise,vicreg+logdet,infonce,invariance_only")]
    methods: Vec<String>,
    #[arg(long, default_value_t = 5)]
    seeds: usize,
    /// Exit 4 unless vicreg+pairwise averages at least invariance_only.
    #[arg(long)]
    check: bool,
}

#[derive(Args)]
struct TrackArgs {
    #[command(flatten)]
    cfg: ConfigArgs,
    #[arg(long, value_delimiter = ',', default_value = "vicreg,vicreg+pairwise,vicreg+logdet,infonce,invariance_only")]
    methods: Vec<String>,
    /// Training steps; the config's epoch budget when omitted.
    #[arg(long)]
    steps: Option<usize>,
    /// Exit 4 unless vicreg's final LogDet entropy is below its initial value.
    #[arg(long)]
    check: bool,
}

enum Failure {
    Lib(Error),
    Usage(String),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

impl Failure {
    fn kind_and_code(&self) -> (&'static str, u8) {
        match self {
            Failure::Usage(_) => ("usage", 2),
            Failure::Check(_) => ("check_failed", 4),
            Failure::Lib(e) if e.is_numerical() => ("numerical", 3),
            Failure::Lib(Error::TrainingAborted { .. }) => ("numerical", 3),
            Failure::Lib(Error::Io(_)) => ("io", 2),
            Failure::Lib(_) => ("config", 2),
        }
    }

    fn message(&self) -> String {
        match self {
            Failure::Lib(e) => e.to_string(),
            Failure::Usage(m) | Failure::Check(m) => m.clone(),
        }
    }
}

type CmdResult = Result<(), Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if matches!(e.kind(), clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => return report(Failure::Usage(e.to_string().trim().to_string())),
    };
    let outcome = match cli.command {
        Command::Entropy(a) => entropy(a),
        Command::Train(a) => train(a),
        Command::Bound(a) => bound(a),
        Command::ValidateGaussianity(a) => validate_gaussianity(a),
        Command::PairwiseDist(a) => pairwise_dist(a),
        Command::GmmCollapse(a) => gmm_collapse(a),
        Command::Compare(a) => compare(a),
        Command::TrackEntropy(a) => track_entropy(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => report(f),
    }
}

fn report(f: Failure) -> ExitCode {
    let (kind, code) = f.kind_and_code();
    let doc = json!({ "error": { "kind": kind, "message": f.message() }, "exit_code": code });
    eprintln!("{doc}");
    ExitCode::from(code)
}

fn emit<T: Serialize>(value: &T) -> Result<(), Error> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

fn parse_methods(names: &[String]) -> Result<Vec<Objective>, Error> {
    names.iter().map(|n| Objective::parse(n.trim())).collect()
}

fn entropy(a: EntropyArgs) -> CmdResult {
    let m = GaussianMixture::from_json(&read_text(&a.mixture)?)?;
    let estimates = [
        mc_entropy(&m, a.mc_samples, a.seed)?,
        moment_upper_bound(&m)?,
        pairwise_bound(&m, PairwiseSide::Lower)?,
        pairwise_bound(&m, PairwiseSide::Upper)?,
    ];
    let mut csv = String::from("estimator,value_nats,std_error,n_samples\n");
    for e in &estimates {
        let se = e.std_error.map(format_float).unwrap_or_default();
        let n = e.n_samples.map(|n| n.to_string()).unwrap_or_default();
        csv.push_str(&format!("{},{},{se},{n}\n", e.kind.name(), format_float(e.value)));
    }
    match a.out {
        Some(p) => fs::write(&p, csv).map_err(Error::from)?,
        None => print!("{csv}"),
    }
    Ok(())
}

fn read_text(path: &Path) -> Result<String, Error> {
    fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn load_run_config(a: &RunArgs) -> Result<ExperimentConfig, Error> {
    let mut cfg = a.cfg.load()?;
    if let Some(m) = &a.method {
        cfg.objective.name = Objective::parse(m)?;
    }
    Ok(cfg)
}

fn train(a: RunArgs) -> CmdResult {
    let cfg = load_run_config(&a)?;
    let o = harness::train_once(&cfg, cfg.objective.name, cfg.seed)?;
    harness::write_run(&cfg.run_dir(cfg.seed), &o.result.trace, &o.result.net, &o.summary)?;
    emit(&o.summary)?;
    if let Some(a) = o.result.abort {
        return Err(Error::TrainingAborted { step: a.step, reason: a.reason }.into());
    }
    Ok(())
}

fn bound(a: BoundArgs) -> CmdResult {
    let mut cfg = load_run_config(&a.run)?;
    if let Some(d) = a.delta {
        cfg.bound.delta = d;
        cfg.validate()?;
    }
    let outcome = match (&a.labeled, &a.unlabeled_pairs, &a.checkpoint) {
        (Some(l), Some(u), Some(c)) => {
            let net = PwaNetwork::from_json(&read_text(c)?)?;
            let (lx, ly) = read_labeled_csv(open(l)?)?;
            let (x, xp, labels) = read_pairs_csv(open(u)?)?;
            let labels = labels.ok_or_else(|| Error::Config(format!("{}: pairs need a label column", u.display())))?;
            let n_classes = ly.iter().chain(&labels).max().map_or(0, |c| c + 1);
            let data = harness::BoundData { labeled: (&lx, &ly), pairs: (&x, &xp, &labels), test: None, n_classes };
            let outcome = harness::evaluate_encoder_bound(&net, None, &data, &cfg.bound, cfg.seed)?;
            if let Some(out) = &a.run.cfg.out {
                harness::write_json(&out.join("bound.json"), &outcome)?;
            }
            (outcome, a.run.cfg.out.clone())
        }
        _ => {
            let (outcome, o) = harness::run_bound(&cfg, cfg.seed)?;
            let doc = json!({ "bound": outcome, "train": o.summary });
            let dir = cfg.run_dir(cfg.seed);
            harness::write_run(&dir, &o.result.trace, &o.result.net, &doc)?;
            (outcome, Some(dir))
        }
    };
    let (outcome, dir) = outcome;
    emit(&outcome)?;
    let r = &outcome.report;
    let test = r.measured_test_loss.map(format_float).unwrap_or_default();
    let summary = format!(
        "n,m,delta,train_loss,q_mn,total_bound,measured_test_loss\n{},{},{},{},{},{},{test}\n",
        r.n,
        r.m,
        format_float(r.delta),
        format_float(r.train_loss),
        format_float(r.q_mn),
        format_float(r.total_bound)
    );
    eprint!("{summary}");
    if let Some(dir) = dir {
        fs::create_dir_all(&dir).map_err(Error::from)?;
        fs::write(dir.join("bound.csv"), summary).map_err(Error::from)?;
    }
    if a.check {
        if let Some(test) = r.measured_test_loss {
            if !(test <= r.total_bound) {
                return Err(Failure::Check(format!("measured test loss {test} exceeds the bound {}", r.total_bound)));
            }
        }
    }
    Ok(())
}

fn validate_gaussianity(a: GaussArgs) -> CmdResult {
    fs::create_dir_all(&a.out).map_err(Error::from)?;
    if let Some(path) = &a.samples {
        let (x, _) = read_labeled_csv(open(path)?)?;
        let cloud = sv::test_cloud(&x, 0)?;
        harness::write_json(&a.out.join("gaussianity.json"), &cloud)?;
        return Ok(emit(&cloud)?);
    }
    let net = match &a.checkpoint {
        Some(p) => PwaNetwork::from_json(&fs::read_to_string(p).map_err(Error::from)?)?,
        None => PwaNetwork::random(&a.widths, Activation::parse(&a.activation)?, a.seed)?,
    };
    let spec = PrototypeSpec { n_prototypes: a.prototypes, dim: net.input_dim(), rank: a.rank, ..PrototypeSpec::default() };
    let ds = PrototypeDataset::random(&spec, a.seed)?;
    let reports = sv::gaussianity_sweep(&net, &ds, &a.noise_grid, a.n_per_point, a.seed)?;
    sv::write_sweep_csv(fs::File::create(a.out.join("gaussianity.csv")).map_err(Error::from)?, &reports)?;
    harness::write_json(&a.out.join("gaussianity.json"), &reports)?;
    let fractions: Vec<f64> = reports.iter().filter(|r| !r.degenerate).map(|r| r.rejection_fraction).collect();
    let grid: Vec<f64> = reports.iter().filter(|r| !r.degenerate).map(|r| r.noise_scale).collect();
    let rho = if grid.len() >= 2 { Some(sv::spearman(&grid, &fractions)?) } else { None };
    emit(&json!({ "rejection_fraction": fractions, "noise_scale": grid, "spearman_rho": rho }))?;
    Ok(())
}

fn open(path: &Path) -> Result<fs::File, Error> {
    fs::File::open(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn pairwise_dist(a: DistArgs) -> CmdResult {
    let points = match &a.input {
        Some(p) => read_labeled_csv(open(p)?)?.0,
        None => two_moons(a.n_points, a.noise, a.seed)?.0,
    };
    let h = sv::pairwise_distance_histogram(&points, a.bins)?;
    fs::create_dir_all(&a.out).map_err(Error::from)?;
    sv::write_histogram_csv(fs::File::create(a.out.join("histogram.csv")).map_err(Error::from)?, &h)?;
    harness::write_json(&a.out.join("histogram.json"), &h)?;
    emit(&json!({ "total": h.total, "min": h.min, "median": h.median, "max": h.max }))?;
    Ok(())
}

fn parse_cov(s: &str) -> Result<CovMode, Error> {
    match s {
        "full" => Ok(CovMode::Full),
        other => other
            .strip_prefix("fixed:")
            .and_then(|v| v.parse::<f64>().ok())
            .map(|sigma| CovMode::FixedSmall { sigma })
            .ok_or_else(|| Error::Config(format!("--cov must be `full` or `fixed:<sigma>`, got {other:?}"))),
    }
}

fn gmm_collapse(a: GmmArgs) -> CmdResult {
    let (x, _) = two_moons(a.n_points, a.noise, a.seed)?;
    let lab = GmmLabState::new(x, a.components, parse_cov(&a.cov)?, a.lr_inputs, a.lr_params, a.seed)?;
    let run = sv::gmm_collapse_run(&lab, a.steps)?;
    fs::create_dir_all(&a.out).map_err(Error::from)?;
    sv::write_gmm_trace_csv(fs::File::create(a.out.join("trace.csv")).map_err(Error::from)?, &run.trace)?;
    let first = run.trace[0].centroid_entropy;
    let last = run.trace.last().expect("trace has the initial point").centroid_entropy;
    let doc = json!({ "initial_entropy": first, "final_entropy": last, "steps_completed": run.trace.len() - 1, "abort": run.abort });
    harness::write_json(&a.out.join("summary.json"), &doc)?;
    emit(&doc)?;
    if let Some(reason) = run.abort {
        return Err(Error::NonFinite { term: reason }.into());
    }
    Ok(())
}

fn compare(a: CompareArgs) -> CmdResult {
    let cfg = a.cfg.load()?;
    let methods = parse_methods(&a.methods)?;
    if a.check && !(methods.contains(&Objective::VicregPairwise) && methods.contains(&Objective::InvarianceOnly)) {
        return Err(Failure::Usage("--check needs vicreg+pairwise and invariance_only in --methods".into()));
    }
    let table = harness::run_comparison(&cfg, &methods, a.seeds, true)?;
    let dir = cfg.out_dir.join(&cfg.experiment);
    fs::create_dir_all(&dir).map_err(Error::from)?;
    table.write_csv(fs::File::create(dir.join("comparison.csv")).map_err(Error::from)?)?;
    fs::write(dir.join("comparison.md"), table.to_markdown()).map_err(Error::from)?;
    harness::write_json(&dir.join("comparison.json"), &table)?;
    print!("{}", table.to_markdown());
    if a.check {
        let (p, i) = (table.row("vicreg+pairwise").expect("checked above"), table.row("invariance_only").expect("checked above"));
        if p.failed() || !(p.mean_accuracy >= i.mean_accuracy) {
            return Err(Failure::Check(format!("vicreg+pairwise mean accuracy {} is below invariance_only mean {}", p.mean_accuracy, i.mean_accuracy)));
        }
    }
    Ok(())
}

fn track_entropy(a: TrackArgs) -> CmdResult {
    let cfg = a.cfg.load()?;
    let methods = parse_methods(&a.methods)?;
    if a.check && !methods.contains(&Objective::Vicreg) {
        return Err(Failure::Usage("--check needs vicreg in --methods".into()));
    }
    let steps = a.steps.unwrap_or(cfg.train.total_steps());
    let traces = harness::run_entropy_tracking(&cfg, &methods, steps)?;
    let root = cfg.run_dir(cfg.seed);
    let mut summary = Vec::new();
    for t in &traces {
        let dir = root.join(harness::method_slug(t.method));
        fs::create_dir_all(&dir).map_err(Error::from)?;
        t.trace.write_csv(fs::File::create(dir.join("trace.csv")).map_err(Error::from)?)?;
        let (first, last) = (t.trace.first().expect("initial record"), t.trace.last().expect("initial record"));
        summary.push(json!({
            "method": t.method.name(),
            "initial_logdet_entropy": first.logdet_entropy,
            "final_logdet_entropy": last.logdet_entropy,
            "initial_pairwise_entropy": first.pairwise_entropy,
            "final_pairwise_entropy": last.pairwise_entropy,
            "aborted": t.aborted,
        }));
    }
    harness::write_json(&root.join("summary.json"), &summary)?;
    emit(&summary)?;
    if let Some(t) = traces.iter().find(|t| t.aborted.is_some()) {
        return Err(Error::TrainingAborted { step: t.trace.last().map_or(0, |r| r.step), reason: t.aborted.clone().unwrap_or_default() }.into());
    }
    if a.check {
        let v = traces.iter().find(|t| t.method == Objective::Vicreg).expect("checked above");
        let (first, last) = (v.trace.first().expect("initial record"), v.trace.last().expect("initial record"));
        if !(last.logdet_entropy < first.logdet_entropy) {
            return Err(Failure::Check(format!("vicreg LogDet entropy did not decrease: {} -> {}", first.logdet_entropy, last.logdet_entropy)));
        }
    }
    Ok(())
}
