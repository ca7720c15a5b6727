use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::tape::{Gradients, Tape, Var};
use crate::error::{ensure_dim, Error, Result};
use crate::rng;

/// Pre-activations closer to zero than this are treated as region boundaries.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Continuous piecewise-affine nonlinearities.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu { slope: f64 },
    Abs,
}

impl Activation {
    /// Region bit for a pre-activation. Exact zeros land on the non-negative side.
    pub fn pattern_bit(pre: f64) -> bool {
        pre >= 0.0
    }

    pub fn slope(self, bit: bool) -> f64 {
        match (self, bit) {
            (_, true) => 1.0,
            (Activation::Relu, false) => 0.0,
            (Activation::LeakyRelu { slope }, false) => slope,
            (Activation::Abs, false) => -1.0,
        }
    }

    pub fn apply(self, x: f64) -> f64 {
        self.slope(Self::pattern_bit(x)) * x
    }

    pub fn parse(tag: &str) -> Result<Self> {
        match tag {
            "relu" => Ok(Activation::Relu),
            "abs" => Ok(Activation::Abs),
            other => match other.strip_prefix("leaky_relu:").or_else(|| other.strip_prefix("leaky:")) {
                Some(s) => s
                    .parse::<f64>()
                    .map(|slope| Activation::LeakyRelu { slope })
                    .map_err(|_| Error::invalid(format!("bad leaky slope in {other:?}"))),
                None if other == "leaky_relu" => Ok(Activation::LeakyRelu { slope: 0.01 }),
                None => Err(Error::invalid(format!("unknown activation {other:?}"))),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    /// `out × in`
    pub weight: DMatrix<f64>,
    pub bias: DVector<f64>,
}

/// Multilayer perceptron with a CPA activation on every hidden layer and an
/// affine output layer.
#[derive(Clone, Debug, PartialEq)]
pub struct PwaNetwork {
    layers: Vec<Layer>,
    activation: Activation,
    seed: Option<u64>,
}

/// The affine map a network realizes on the region containing a probe input.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionAffine {
    pub a_matrix: DMatrix<f64>,
    pub b_offset: DVector<f64>,
    /// One bit per hidden unit, layer by layer.
    pub activation_pattern: Vec<bool>,
}

impl RegionAffine {
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a_matrix * x + &self.b_offset
    }
}

/// Parameter handles of a network recorded on a tape.
#[derive(Clone, Debug)]
pub struct NetParams {
    pub weights: Vec<Var>,
    pub biases: Vec<Var>,
}

/// Result of a batched forward pass on a tape.
#[derive(Clone, Debug)]
pub struct TapeForward {
    pub output: Var,
    /// Hidden-layer pre-activations, N×width each.
    pub pre_activations: Vec<Var>,
}

impl PwaNetwork {
    pub fn new(layers: Vec<Layer>, activation: Activation) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::invalid("network needs at least one layer"));
        }
        for l in &layers {
            ensure_dim(l.weight.nrows(), l.bias.len())?;
        }
        for pair in layers.windows(2) {
            ensure_dim(pair[0].weight.nrows(), pair[1].weight.ncols())?;
        }
        Ok(Self { layers, activation, seed: None })
    }

    /// Random network with layer widths `widths = [D, h₁, …, K]`; weights and
    /// biases uniform in `±1/√fan_in`.
    pub fn random(widths: &[usize], activation: Activation, seed: u64) -> Result<Self> {
        Self::random_with_gain(widths, activation, 1.0, seed)
    }

    /// Like [`random`](Self::random) with the bound scaled to `±gain/√fan_in`.
    pub fn random_with_gain(widths: &[usize], activation: Activation, gain: f64, seed: u64) -> Result<Self> {
        if widths.len() < 2 || widths.iter().any(|&w| w == 0) {
            return Err(Error::invalid("need at least input and output widths, all positive"));
        }
        if !(gain > 0.0 && gain.is_finite()) {
            return Err(Error::invalid("init gain must be positive"));
        }
        let mut rng = rng::from_seed(seed);
        let layers = widths
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = gain / (fan_in as f64).sqrt();
                let weight = DMatrix::from_fn(fan_out, fan_in, |_, _| rng::uniform(&mut rng, -bound, bound));
                let bias = DVector::from_fn(fan_out, |_, _| rng::uniform(&mut rng, -bound, bound));
                Layer { weight, bias }
            })
            .collect();
        let mut net = Self::new(layers, activation)?;
        net.seed = Some(seed);
        Ok(net)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weight.nrows()
    }

    pub fn hidden_units(&self) -> usize {
        self.layers[..self.layers.len() - 1].iter().map(|l| l.weight.nrows()).sum()
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_dim()];
        w.extend(self.layers.iter().map(|l| l.weight.nrows()));
        w
    }

    pub fn forward(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        ensure_dim(self.input_dim(), x.len())?;
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = &layer.weight * h + &layer.bias;
            if i < last {
                h.apply(|v| *v = self.activation.apply(*v));
            }
        }
        Ok(h)
    }

    /// Row-wise forward pass: N×D → N×K.
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        ensure_dim(self.input_dim(), x.ncols())?;
        let last = self.layers.len() - 1;
        let mut h = x.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            h = &h * layer.weight.transpose();
            for mut row in h.row_iter_mut() {
                row += layer.bias.transpose();
            }
            if i < last {
                h.apply(|v| *v = self.activation.apply(*v));
            }
        }
        Ok(h)
    }

    /// Hidden pre-activations for `x`, layer by layer.
    fn pre_activations(&self, x: &DVector<f64>) -> Result<Vec<DVector<f64>>> {
        ensure_dim(self.input_dim(), x.len())?;
        let mut out = Vec::with_capacity(self.layers.len() - 1);
        let mut h = x.clone();
        for layer in &self.layers[..self.layers.len() - 1] {
            let pre = &layer.weight * &h + &layer.bias;
            h = pre.map(|v| self.activation.apply(v));
            out.push(pre);
        }
        Ok(out)
    }

    pub fn activation_pattern(&self, x: &DVector<f64>) -> Result<Vec<bool>> {
        Ok(self
            .pre_activations(x)?
            .iter()
            .flat_map(|pre| pre.iter().map(|&v| Activation::pattern_bit(v)).collect::<Vec<_>>())
            .collect())
    }

    /// Per-region affine map at `x`; fails if `x` sits on a region boundary.
    pub fn affine_extract(&self, x: &DVector<f64>) -> Result<RegionAffine> {
        let pres = self.pre_activations(x)?;
        for (layer, pre) in pres.iter().enumerate() {
            if let Some(unit) = pre.iter().position(|v| v.abs() < BOUNDARY_TOL) {
                return Err(Error::BoundaryInput { layer, unit, value: pre[unit] });
            }
        }
        self.affine_from_pre(x, &pres)
    }

    /// Like [`affine_extract`](Self::affine_extract) but resolves boundary
    /// units to the non-negative side; also returns how many were resolved.
    pub fn affine_extract_resolving(&self, x: &DVector<f64>) -> Result<(RegionAffine, usize)> {
        let pres = self.pre_activations(x)?;
        let hits = pres.iter().flat_map(|p| p.iter()).filter(|v| v.abs() < BOUNDARY_TOL).count();
        Ok((self.affine_from_pre(x, &pres)?, hits))
    }

    fn affine_from_pre(&self, x: &DVector<f64>, pres: &[DVector<f64>]) -> Result<RegionAffine> {
        let mut a = self.layers[0].weight.clone();
        let mut pattern = Vec::with_capacity(self.hidden_units());
        for (layer, pre) in self.layers[1..].iter().zip(pres) {
            let bits: Vec<bool> = pre.iter().map(|&v| Activation::pattern_bit(v)).collect();
            for (r, bit) in bits.iter().enumerate() {
                let s = self.activation.slope(*bit);
                a.row_mut(r).scale_mut(s);
            }
            pattern.extend(bits);
            a = &layer.weight * a;
        }
        let fx = self.forward(x)?;
        let b_offset = &fx - &a * x;
        Ok(RegionAffine { a_matrix: a, b_offset, activation_pattern: pattern })
    }

    /// Records the parameters as tape leaves (weights `out×in`, biases `1×out`).
    pub fn params_on_tape(&self, tape: &mut Tape) -> NetParams {
        let mut weights = Vec::with_capacity(self.layers.len());
        let mut biases = Vec::with_capacity(self.layers.len());
        for l in &self.layers {
            weights.push(tape.leaf(l.weight.clone()));
            biases.push(tape.leaf(DMatrix::from_row_slice(1, l.bias.len(), l.bias.as_slice())));
        }
        NetParams { weights, biases }
    }

    /// Batched forward pass recorded on the tape; `x` is N×D.
    pub fn forward_on_tape(&self, tape: &mut Tape, params: &NetParams, x: Var) -> Result<TapeForward> {
        let last = self.layers.len() - 1;
        let mut h = x;
        let mut pre_activations = Vec::with_capacity(last);
        for i in 0..self.layers.len() {
            let wt = tape.transpose(params.weights[i]);
            let z = tape.matmul(h, wt)?;
            let z = tape.add_row_broadcast(z, params.biases[i])?;
            if i < last {
                pre_activations.push(z);
                h = tape.activation(z, self.activation);
            } else {
                h = z;
            }
        }
        Ok(TapeForward { output: h, pre_activations })
    }

    /// Input-output Jacobian of row `row` as a K×D tape node, built from the
    /// weights with the row's activation slopes held fixed.
    pub fn jacobian_on_tape(&self, tape: &mut Tape, params: &NetParams, fwd: &TapeForward, row: usize) -> Result<Var> {
        let mut a = params.weights[0];
        for (i, pre) in fwd.pre_activations.iter().enumerate() {
            let pre_row = tape.value(*pre).row(row).into_owned();
            let cols = tape.value(a).ncols();
            let mask = DMatrix::from_fn(pre_row.len(), cols, |r, _| self.activation.slope(Activation::pattern_bit(pre_row[r])));
            let masked = tape.mask(a, mask)?;
            a = tape.matmul(params.weights[i + 1], masked)?;
        }
        Ok(a)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weight.len() + l.bias.len()).sum()
    }

    /// Parameters flattened layer by layer: weight (column-major) then bias.
    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(l.weight.as_slice());
            out.extend_from_slice(l.bias.as_slice());
        }
        out
    }

    pub fn set_params_flat(&mut self, flat: &[f64]) -> Result<()> {
        ensure_dim(self.param_count(), flat.len())?;
        let mut off = 0;
        for l in &mut self.layers {
            let n = l.weight.len();
            l.weight.as_mut_slice().copy_from_slice(&flat[off..off + n]);
            off += n;
            let n = l.bias.len();
            l.bias.as_mut_slice().copy_from_slice(&flat[off..off + n]);
            off += n;
        }
        Ok(())
    }

    /// Gradients for the recorded parameters, flattened like [`params_flat`](Self::params_flat).
    pub fn grads_flat(&self, tape: &Tape, grads: &Gradients, params: &NetParams) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in params.weights.iter().zip(&params.biases) {
            out.extend_from_slice(grads.wrt(tape, *w).as_slice());
            // biases live on the tape as 1×out rows; same element order as a column
            out.extend_from_slice(grads.wrt(tape, *b).as_slice());
        }
        out
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        Checkpoint {
            activation: self.activation,
            seed: self.seed,
            layers: self
                .layers
                .iter()
                .map(|l| LayerDoc {
                    rows: l.weight.nrows(),
                    cols: l.weight.ncols(),
                    weights: l.weight.transpose().as_slice().to_vec(),
                    bias: l.bias.as_slice().to_vec(),
                })
                .collect(),
        }
    }

    pub fn from_checkpoint(doc: &Checkpoint) -> Result<Self> {
        let layers = doc
            .layers
            .iter()
            .map(|l| {
                ensure_dim(l.rows * l.cols, l.weights.len())?;
                ensure_dim(l.rows, l.bias.len())?;
                Ok(Layer {
                    weight: DMatrix::from_row_slice(l.rows, l.cols, &l.weights),
                    bias: DVector::from_column_slice(&l.bias),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let mut net = Self::new(layers, doc.activation)?;
        net.seed = doc.seed;
        Ok(net)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.to_checkpoint())?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Self::from_checkpoint(&serde_json::from_str(text)?)
    }
}

/// Checkpoint schema: layer shapes, row-major weights, biases, activation tag, seed.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub activation: Activation,
    pub seed: Option<u64>,
    pub layers: Vec<LayerDoc>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerDoc {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}
