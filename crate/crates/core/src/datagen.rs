//! Synthetic datasets: prototype Gaussians with low-rank tangent covariances,
//! two interleaved moons, view-pair generation by Gaussian perturbation, and
//! CSV persistence.

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Rng};

/// Maximum rejection-sampling attempts per prototype when enforcing the
/// separation floor.
const MAX_PLACEMENT_TRIES: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct PrototypeDataset {
    prototypes: DMatrix<f64>,
    /// D×r factors `F` with `Σ = F·Fᵀ`.
    tangent_factors: Vec<DMatrix<f64>>,
    labels: Vec<usize>,
    noise_scale: f64,
    separation_floor: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrototypeSpec {
    pub n_prototypes: usize,
    pub dim: usize,
    pub rank: usize,
    pub n_classes: usize,
    /// Prototypes are drawn uniformly from `[−spread, spread]^D`.
    pub spread: f64,
    pub separation_floor: f64,
    /// Tangent eigenvalues are drawn uniformly from `[0.5, 1]·tangent_scale²`.
    pub tangent_scale: f64,
    pub noise_scale: f64,
}

impl Default for PrototypeSpec {
    fn default() -> Self {
        Self { n_prototypes: 8, dim: 4, rank: 2, n_classes: 2, spread: 4.0, separation_floor: 1.0, tangent_scale: 0.3, noise_scale: 1.0 }
    }
}

/// Paired views with their source index (prototype or base point) and label.
#[derive(Clone, Debug, PartialEq)]
pub struct PairSample {
    pub x: DMatrix<f64>,
    pub x_prime: DMatrix<f64>,
    pub labels: Vec<usize>,
    pub sources: Vec<usize>,
}

/// Anything that can emit labeled points and two-view pairs.
pub trait PairSource {
    fn input_dim(&self) -> usize;
    fn n_classes(&self) -> usize;
    fn sample_pairs_with(&self, rng: &mut Rng, n_pairs: usize) -> PairSample;
    fn sample_labeled_with(&self, rng: &mut Rng, n: usize) -> (DMatrix<f64>, Vec<usize>);
    /// Factor `F` of the view-noise covariance `F·Fᵀ` around `source`.
    fn view_cov_factor(&self, source: usize) -> DMatrix<f64>;
}

impl PrototypeDataset {
    pub fn new(prototypes: DMatrix<f64>, tangent_factors: Vec<DMatrix<f64>>, labels: Vec<usize>, noise_scale: f64, separation_floor: f64) -> Result<Self> {
        let (n, d) = prototypes.shape();
        if n == 0 {
            return Err(Error::invalid("at least one prototype is required"));
        }
        crate::error::ensure_dim(n, tangent_factors.len())?;
        crate::error::ensure_dim(n, labels.len())?;
        for f in &tangent_factors {
            crate::error::ensure_dim(d, f.nrows())?;
        }
        if !(noise_scale >= 0.0) || !(separation_floor >= 0.0) {
            return Err(Error::invalid("noise_scale and separation_floor must be >= 0"));
        }
        let ds = Self { prototypes, tangent_factors, labels, noise_scale, separation_floor };
        for i in 0..n {
            for j in 0..i {
                let dist = (ds.prototypes.row(i) - ds.prototypes.row(j)).norm();
                if dist < separation_floor {
                    return Err(Error::invalid(format!("prototypes {j} and {i} are {dist:.4} apart, below the floor {separation_floor}")));
                }
            }
            if ds.nearest_prototype(&ds.prototype(i)) != i {
                return Err(Error::invalid(format!("prototype {i} is not its own nearest prototype")));
            }
        }
        Ok(ds)
    }

    pub fn random(spec: &PrototypeSpec, seed: u64) -> Result<Self> {
        let PrototypeSpec { n_prototypes, dim, rank, n_classes, spread, separation_floor, tangent_scale, noise_scale } = *spec;
        if n_prototypes == 0 || dim == 0 || n_classes == 0 {
            return Err(Error::Config("prototype counts and dimension must be positive".into()));
        }
        if rank == 0 || rank >= dim {
            return Err(Error::Config(format!("tangent rank must satisfy 1 <= rank < dim, got {rank} with dim {dim}")));
        }
        let mut r = rng::from_seed(seed);
        let mut protos: Vec<DVector<f64>> = Vec::with_capacity(n_prototypes);
        for i in 0..n_prototypes {
            let mut placed = false;
            for _ in 0..MAX_PLACEMENT_TRIES {
                let cand = DVector::from_fn(dim, |_, _| rng::uniform(&mut r, -spread, spread));
                if protos.iter().all(|p| (p - &cand).norm() >= separation_floor) {
                    protos.push(cand);
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(Error::Config(format!("could not place prototype {i} with separation {separation_floor} inside spread {spread}")));
            }
        }
        let factors = (0..n_prototypes)
            .map(|_| {
                let g = rng::normal_matrix(&mut r, dim, rank);
                let u = g.qr().q();
                let s = DVector::from_fn(rank, |_, _| tangent_scale * rng::uniform(&mut r, 0.5, 1.0).sqrt());
                u.columns(0, rank) * DMatrix::from_diagonal(&s)
            })
            .collect();
        let prototypes = DMatrix::from_fn(n_prototypes, dim, |i, j| protos[i][j]);
        let labels = (0..n_prototypes).map(|i| i % n_classes).collect();
        Self::new(prototypes, factors, labels, noise_scale, separation_floor)
    }

    pub fn prototypes(&self) -> &DMatrix<f64> {
        &self.prototypes
    }

    pub fn prototype(&self, i: usize) -> DVector<f64> {
        self.prototypes.row(i).transpose()
    }

    pub fn tangent_factors(&self) -> &[DMatrix<f64>] {
        &self.tangent_factors
    }

    /// Unscaled tangent covariance `Σ_{x*ᵢ}`.
    pub fn tangent_covariance(&self, i: usize) -> DMatrix<f64> {
        &self.tangent_factors[i] * self.tangent_factors[i].transpose()
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn noise_scale(&self) -> f64 {
        self.noise_scale
    }

    pub fn separation_floor(&self) -> f64 {
        self.separation_floor
    }

    pub fn len(&self) -> usize {
        self.prototypes.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn with_noise_scale(&self, noise_scale: f64) -> Self {
        Self { noise_scale, ..self.clone() }
    }

    /// One draw from prototype `i`'s Gaussian.
    pub fn draw(&self, rng: &mut Rng, i: usize) -> DVector<f64> {
        let f = &self.tangent_factors[i];
        let eps = DVector::from_fn(f.ncols(), |_, _| rng::normal(rng));
        self.prototype(i) + f * eps * self.noise_scale
    }

    /// Index minimizing `(x − x*ₙ)ᵀ·Σ_{x*ₙ}·(x − x*ₙ)`; ties go to the
    /// lowest index.
    pub fn nearest_prototype(&self, x: &DVector<f64>) -> usize {
        let mut best = (0, f64::INFINITY);
        for i in 0..self.len() {
            let diff = x - self.prototype(i);
            let proj = self.tangent_factors[i].transpose() * diff;
            let q = proj.norm_squared();
            if q < best.1 {
                best = (i, q);
            }
        }
        best.0
    }
}

impl PairSource for PrototypeDataset {
    fn input_dim(&self) -> usize {
        self.prototypes.ncols()
    }

    fn n_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    fn sample_pairs_with(&self, rng: &mut Rng, n_pairs: usize) -> PairSample {
        let d = self.input_dim();
        let mut x = DMatrix::zeros(n_pairs, d);
        let mut xp = DMatrix::zeros(n_pairs, d);
        let mut labels = Vec::with_capacity(n_pairs);
        let mut sources = Vec::with_capacity(n_pairs);
        for i in 0..n_pairs {
            let t = rng::index(rng, self.len());
            x.set_row(i, &self.draw(rng, t).transpose());
            xp.set_row(i, &self.draw(rng, t).transpose());
            labels.push(self.labels[t]);
            sources.push(t);
        }
        PairSample { x, x_prime: xp, labels, sources }
    }

    fn sample_labeled_with(&self, rng: &mut Rng, n: usize) -> (DMatrix<f64>, Vec<usize>) {
        let mut x = DMatrix::zeros(n, self.input_dim());
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let t = rng::index(rng, self.len());
            x.set_row(i, &self.draw(rng, t).transpose());
            labels.push(self.labels[t]);
        }
        (x, labels)
    }

    fn view_cov_factor(&self, source: usize) -> DMatrix<f64> {
        &self.tangent_factors[source] * self.noise_scale
    }
}

/// Two views per pair: independent draws from the shared prototype.
pub fn sample_pairs(ds: &PrototypeDataset, n_pairs: usize, seed: u64) -> Result<PairSample> {
    if n_pairs == 0 {
        return Err(Error::invalid("n_pairs must be >= 1"));
    }
    Ok(ds.sample_pairs_with(&mut rng::from_seed(seed), n_pairs))
}

/// Fixed labeled points whose views are isotropic Gaussian perturbations.
#[derive(Clone, Debug, PartialEq)]
pub struct NoisyPointSet {
    points: DMatrix<f64>,
    labels: Vec<usize>,
    view_noise: f64,
}

impl NoisyPointSet {
    pub fn new(points: DMatrix<f64>, labels: Vec<usize>, view_noise: f64) -> Result<Self> {
        crate::error::ensure_dim(points.nrows(), labels.len())?;
        if points.nrows() == 0 {
            return Err(Error::invalid("point set is empty"));
        }
        if !(view_noise >= 0.0) {
            return Err(Error::invalid("view_noise must be >= 0"));
        }
        Ok(Self { points, labels, view_noise })
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn view_noise(&self) -> f64 {
        self.view_noise
    }

    fn view(&self, rng: &mut Rng, i: usize) -> DVector<f64> {
        let d = self.points.ncols();
        self.points.row(i).transpose() + DVector::from_fn(d, |_, _| rng::normal(rng)) * self.view_noise
    }
}

impl PairSource for NoisyPointSet {
    fn input_dim(&self) -> usize {
        self.points.ncols()
    }

    fn n_classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    fn sample_pairs_with(&self, rng: &mut Rng, n_pairs: usize) -> PairSample {
        let d = self.input_dim();
        let mut x = DMatrix::zeros(n_pairs, d);
        let mut xp = DMatrix::zeros(n_pairs, d);
        let mut labels = Vec::with_capacity(n_pairs);
        let mut sources = Vec::with_capacity(n_pairs);
        for i in 0..n_pairs {
            let t = rng::index(rng, self.points.nrows());
            x.set_row(i, &self.view(rng, t).transpose());
            xp.set_row(i, &self.view(rng, t).transpose());
            labels.push(self.labels[t]);
            sources.push(t);
        }
        PairSample { x, x_prime: xp, labels, sources }
    }

    fn sample_labeled_with(&self, rng: &mut Rng, n: usize) -> (DMatrix<f64>, Vec<usize>) {
        let mut x = DMatrix::zeros(n, self.input_dim());
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let t = rng::index(rng, self.points.nrows());
            x.set_row(i, &self.points.row(t));
            labels.push(self.labels[t]);
        }
        (x, labels)
    }

    fn view_cov_factor(&self, _source: usize) -> DMatrix<f64> {
        DMatrix::identity(self.input_dim(), self.input_dim()) * self.view_noise
    }
}

/// Two interleaved half circles of radius 1: the upper arc centered at the
/// origin (label 0) and the lower arc centered at (1, 0.5) (label 1), each on
/// an evenly spaced angle grid, plus `N(0, noise²·I)` jitter.
pub fn two_moons(n: usize, noise: f64, seed: u64) -> Result<(DMatrix<f64>, Vec<usize>)> {
    if n == 0 || n % 2 != 0 {
        return Err(Error::invalid(format!("two_moons needs a positive even n, got {n}")));
    }
    if !(noise >= 0.0) {
        return Err(Error::invalid("noise must be >= 0"));
    }
    let half = n / 2;
    let angle = |i: usize| if half == 1 { 0.0 } else { std::f64::consts::PI * i as f64 / (half - 1) as f64 };
    let mut x = DMatrix::zeros(n, 2);
    let mut labels = Vec::with_capacity(n);
    for i in 0..half {
        let t = angle(i);
        x[(i, 0)] = t.cos();
        x[(i, 1)] = t.sin();
        labels.push(0);
    }
    for i in 0..half {
        let t = angle(i);
        x[(half + i, 0)] = 1.0 - t.cos();
        x[(half + i, 1)] = 0.5 - t.sin();
        labels.push(1);
    }
    if noise > 0.0 {
        let mut r = rng::from_seed(seed);
        for i in 0..n {
            for j in 0..2 {
                x[(i, j)] += noise * rng::normal(&mut r);
            }
        }
    }
    Ok((x, labels))
}

/// Writes `x0,…,x{d−1},label` rows.
pub fn write_labeled_csv<W: Write>(w: W, x: &DMatrix<f64>, labels: &[usize]) -> Result<()> {
    crate::error::ensure_dim(x.nrows(), labels.len())?;
    let mut wr = csv::Writer::from_writer(w);
    let mut header: Vec<String> = (0..x.ncols()).map(|j| format!("x{j}")).collect();
    header.push("label".into());
    wr.write_record(&header)?;
    for (i, &label) in labels.iter().enumerate() {
        let mut rec: Vec<String> = x.row(i).iter().map(|v| format_float(*v)).collect();
        rec.push(label.to_string());
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

/// Reads a header row then one sample per line with the label last.
pub fn read_labeled_csv<R: Read>(r: R) -> Result<(DMatrix<f64>, Vec<usize>)> {
    let rows = read_rows(r)?;
    let width = rows.first().map_or(0, Vec::len);
    if width < 2 {
        return Err(Error::invalid("labeled CSV needs at least one feature column and a label column"));
    }
    let d = width - 1;
    let mut x = DMatrix::zeros(rows.len(), d);
    let mut labels = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        for j in 0..d {
            x[(i, j)] = row[j];
        }
        labels.push(as_label(row[d], i)?);
    }
    Ok((x, labels))
}

/// Writes `a0,…,b0,…` rows holding the two views of each pair, plus a
/// trailing `label` column when labels are given.
pub fn write_pairs_csv<W: Write>(w: W, x: &DMatrix<f64>, x_prime: &DMatrix<f64>, labels: Option<&[usize]>) -> Result<()> {
    if x.shape() != x_prime.shape() {
        return Err(Error::invalid("pair views differ in shape"));
    }
    if let Some(l) = labels {
        crate::error::ensure_dim(x.nrows(), l.len())?;
    }
    let mut wr = csv::Writer::from_writer(w);
    let d = x.ncols();
    let mut header: Vec<String> = (0..d).map(|j| format!("a{j}")).chain((0..d).map(|j| format!("b{j}"))).collect();
    if labels.is_some() {
        header.push("label".into());
    }
    wr.write_record(&header)?;
    for i in 0..x.nrows() {
        let mut rec: Vec<String> = x.row(i).iter().chain(x_prime.row(i).iter()).map(|v| format_float(*v)).collect();
        if let Some(l) = labels {
            rec.push(l[i].to_string());
        }
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

/// Pair views as `(x, x′, labels)`; labels are present when the last header
/// field is `label`.
pub type PairsCsv = (DMatrix<f64>, DMatrix<f64>, Option<Vec<usize>>);

pub fn read_pairs_csv<R: Read>(r: R) -> Result<PairsCsv> {
    let (header, rows) = read_table(r)?;
    let labeled = header.last().is_some_and(|h| h == "label");
    let width = header.len() - labeled as usize;
    if width == 0 || width % 2 != 0 {
        return Err(Error::invalid("pair CSV needs an even, non-zero number of feature columns"));
    }
    let d = width / 2;
    let x = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][j]);
    let xp = DMatrix::from_fn(rows.len(), d, |i, j| rows[i][d + j]);
    let labels = if labeled { Some(rows.iter().enumerate().map(|(i, r)| as_label(r[width], i)).collect::<Result<Vec<_>>>()?) } else { None };
    Ok((x, xp, labels))
}

fn as_label(v: f64, row: usize) -> Result<usize> {
    if v < 0.0 || v.fract() != 0.0 {
        return Err(Error::invalid(format!("row {}: label {v} is not a non-negative integer", row + 1)));
    }
    Ok(v as usize)
}

fn read_rows<R: Read>(r: R) -> Result<Vec<Vec<f64>>> {
    Ok(read_table(r)?.1)
}

fn read_table<R: Read>(r: R) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    let width = header.len();
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        if rec.len() != width {
            return Err(Error::invalid(format!("row {} has {} fields, header has {width}", i + 1, rec.len())));
        }
        let vals = rec
            .iter()
            .map(|s| s.parse::<f64>().map_err(|_| Error::invalid(format!("row {}: `{s}` is not a number", i + 1))))
            .collect::<Result<Vec<_>>>()?;
        rows.push(vals);
    }
    if rows.is_empty() {
        return Err(Error::invalid("CSV has no data rows"));
    }
    Ok((header, rows))
}

/// Any CSV this crate writes, as header plus string fields.
#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.header.iter().position(|h| h == name).ok_or_else(|| Error::invalid(format!("CSV has no column `{name}`")))
    }

    /// Numeric column; empty fields are `None`.
    pub fn numbers(&self, name: &str) -> Result<Vec<Option<f64>>> {
        let j = self.column_index(name)?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, r)| match r[j].as_str() {
                "" => Ok(None),
                s => s.parse::<f64>().map(Some).map_err(|_| Error::invalid(format!("row {}: `{s}` is not a number", i + 1))),
            })
            .collect()
    }
}

/// Reads a headed CSV, checking that every row matches the header width.
pub fn read_csv_table<R: Read>(r: R) -> Result<CsvTable> {
    let mut rd = csv::ReaderBuilder::new().has_headers(true).from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header.is_empty() || header.iter().any(String::is_empty) {
        return Err(Error::invalid("CSV header is missing or has empty names"));
    }
    let mut rows = Vec::new();
    for (i, rec) in rd.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::invalid(format!("row {} has {} fields, header has {}", i + 1, rec.len(), header.len())));
        }
        rows.push(rec.iter().map(str::to_string).collect());
    }
    Ok(CsvTable { header, rows })
}

/// Shortest decimal text that parses back to the same `f64`.
pub fn format_float(v: f64) -> String {
    format!("{v:?}")
}
