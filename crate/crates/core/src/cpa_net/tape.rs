//! Matrix-valued reverse-mode automatic differentiation.
//!
//! Every node holds a dense matrix. Operations are recorded in execution
//! order, so a single reverse sweep over the node list accumulates adjoints.
//! Scalars are 1×1 matrices.

use nalgebra::DMatrix;

use super::network::Activation;
use crate::error::{Error, Result};
use crate::linalg::{cholesky_spd, inverse_from_factor, log_det_from_factor};

/// Handle to a node recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var, f64),
    MatMul(Var, Var),
    Transpose(Var),
    AddRowBroadcast(Var, Var),
    Activation(Var, Activation),
    MaxConst(Var, f64),
    Mask(Var, DMatrix<f64>),
    Square(Var),
    Sqrt(Var),
    Exp(Var),
    Log(Var),
    Sum(Var),
    Mean(Var),
    CenterColumns(Var),
    Diag(Var),
    LogDetSpd(Var),
    LogSumExpRows(Var),
    RowNormalize(Var),
    RowSqNorms(Var),
    PairwiseSqDist(Var),
}

#[derive(Clone, Debug)]
struct Node {
    value: DMatrix<f64>,
    op: Op,
}

#[derive(Clone, Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &DMatrix<f64> {
        &self.nodes[v.0].value
    }

    /// Value of a 1×1 node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[(0, 0)]
    }

    pub fn leaf(&mut self, value: DMatrix<f64>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn constant_scalar(&mut self, c: f64) -> Var {
        self.leaf(DMatrix::from_element(1, 1, c))
    }

    fn push(&mut self, value: DMatrix<f64>, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, op: Op) -> Result<Var> {
        let value = evaluate(&op, |v| &self.nodes[v.0].value)?;
        Ok(self.push(value, op))
    }

    fn record_infallible(&mut self, op: Op) -> Var {
        self.record(op).expect("infallible tape op")
    }

    fn same_shape(&self, a: Var, b: Var) -> Result<()> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa != sb {
            return Err(Error::invalid(format!("shape mismatch {sa:?} vs {sb:?}")));
        }
        Ok(())
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b)?;
        self.record(Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b)?;
        self.record(Op::Sub(a, b))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape(a, b)?;
        self.record(Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        self.record_infallible(Op::Scale(a, c))
    }

    pub fn neg(&mut self, a: Var) -> Var {
        self.scale(a, -1.0)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        self.record_infallible(Op::AddScalar(a, c))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ra, ca) = self.value(a).shape();
        let (rb, _) = self.value(b).shape();
        if ca != rb {
            return Err(Error::DimensionMismatch { expected: ca, got: rb });
        }
        let _ = ra;
        self.record(Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        self.record_infallible(Op::Transpose(a))
    }

    /// Adds the 1×K row `b` to every row of the N×K matrix `a`.
    pub fn add_row_broadcast(&mut self, a: Var, b: Var) -> Result<Var> {
        let (_, ca) = self.value(a).shape();
        let (rb, cb) = self.value(b).shape();
        if rb != 1 || cb != ca {
            return Err(Error::invalid("broadcast operand must be a 1×K row"));
        }
        self.record(Op::AddRowBroadcast(a, b))
    }

    pub fn activation(&mut self, a: Var, act: Activation) -> Var {
        self.record_infallible(Op::Activation(a, act))
    }

    /// Elementwise `max(x, c)`; the subgradient at `x == c` is zero.
    pub fn max_const(&mut self, a: Var, c: f64) -> Var {
        self.record_infallible(Op::MaxConst(a, c))
    }

    /// Elementwise product with a constant matrix.
    pub fn mask(&mut self, a: Var, mask: DMatrix<f64>) -> Result<Var> {
        if self.value(a).shape() != mask.shape() {
            return Err(Error::invalid("mask shape mismatch"));
        }
        self.record(Op::Mask(a, mask))
    }

    pub fn square(&mut self, a: Var) -> Var {
        self.record_infallible(Op::Square(a))
    }

    pub fn sqrt(&mut self, a: Var) -> Var {
        self.record_infallible(Op::Sqrt(a))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.record_infallible(Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.record_infallible(Op::Log(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        self.record_infallible(Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        self.record_infallible(Op::Mean(a))
    }

    pub fn center_columns(&mut self, a: Var) -> Var {
        self.record_infallible(Op::CenterColumns(a))
    }

    /// Diagonal of a square matrix as a K×1 column.
    pub fn diag(&mut self, a: Var) -> Result<Var> {
        let (r, c) = self.value(a).shape();
        if r != c {
            return Err(Error::invalid("diag needs a square matrix"));
        }
        self.record(Op::Diag(a))
    }

    /// `log det A` for symmetric positive-definite `A`, via Cholesky.
    pub fn log_det_spd(&mut self, a: Var) -> Result<Var> {
        self.record(Op::LogDetSpd(a))
    }

    /// Row-wise log-sum-exp: N×K → N×1.
    pub fn log_sum_exp_rows(&mut self, a: Var) -> Var {
        self.record_infallible(Op::LogSumExpRows(a))
    }

    /// Scales every row to unit Euclidean norm.
    pub fn row_normalize(&mut self, a: Var) -> Result<Var> {
        self.record(Op::RowNormalize(a))
    }

    /// Squared row norms: N×K → N×1.
    pub fn row_sq_norms(&mut self, a: Var) -> Var {
        self.record_infallible(Op::RowSqNorms(a))
    }

    /// Matrix of squared Euclidean distances between rows: N×K → N×N.
    pub fn pairwise_sq_dist(&mut self, a: Var) -> Var {
        self.record_infallible(Op::PairwiseSqDist(a))
    }

    /// Sum of several same-shaped nodes.
    pub fn add_all(&mut self, terms: &[Var]) -> Result<Var> {
        let (first, rest) = terms.split_first().ok_or_else(|| Error::invalid("empty sum"))?;
        let mut acc = *first;
        for t in rest {
            acc = self.add(acc, *t)?;
        }
        Ok(acc)
    }

    /// Recomputes every node from the leaves.
    pub fn replay(&self) -> Result<Vec<DMatrix<f64>>> {
        let mut values: Vec<DMatrix<f64>> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match node.op {
                Op::Leaf => node.value.clone(),
                ref op => evaluate(op, |v| &values[v.0])?,
            };
            values.push(v);
        }
        Ok(values)
    }

    /// Reverse sweep from a scalar root.
    pub fn grad(&self, root: Var) -> Result<Gradients> {
        let (rows, cols) = self.value(root).shape();
        if (rows, cols) != (1, 1) {
            return Err(Error::NonScalarRoot { rows, cols });
        }
        let mut adj: Vec<Option<DMatrix<f64>>> = vec![None; root.0 + 1];
        adj[root.0] = Some(DMatrix::from_element(1, 1, 1.0));
        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            self.backprop(i, &g, &mut adj)?;
            adj[i] = Some(g);
        }
        Ok(Gradients { adj })
    }

    fn backprop(&self, i: usize, g: &DMatrix<f64>, adj: &mut [Option<DMatrix<f64>>]) -> Result<()> {
        let node = &self.nodes[i];
        let y = &node.value;
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                accumulate(adj, *a, g.clone());
                accumulate(adj, *b, g.clone());
            }
            Op::Sub(a, b) => {
                accumulate(adj, *a, g.clone());
                accumulate(adj, *b, -g);
            }
            Op::Mul(a, b) => {
                accumulate(adj, *a, g.component_mul(val(*b)));
                accumulate(adj, *b, g.component_mul(val(*a)));
            }
            Op::Scale(a, c) => accumulate(adj, *a, g * *c),
            Op::AddScalar(a, _) => accumulate(adj, *a, g.clone()),
            Op::MatMul(a, b) => {
                accumulate(adj, *a, g * val(*b).transpose());
                accumulate(adj, *b, val(*a).transpose() * g);
            }
            Op::Transpose(a) => accumulate(adj, *a, g.transpose()),
            Op::AddRowBroadcast(a, b) => {
                accumulate(adj, *a, g.clone());
                accumulate(adj, *b, DMatrix::from_row_slice(1, g.ncols(), g.row_sum().as_slice()));
            }
            Op::Activation(a, act) => {
                let slopes = val(*a).map(|x| act.slope(Activation::pattern_bit(x)));
                accumulate(adj, *a, g.component_mul(&slopes));
            }
            Op::MaxConst(a, c) => {
                let mask = val(*a).map(|x| if x > *c { 1.0 } else { 0.0 });
                accumulate(adj, *a, g.component_mul(&mask));
            }
            Op::Mask(a, m) => accumulate(adj, *a, g.component_mul(m)),
            Op::Square(a) => accumulate(adj, *a, g.component_mul(val(*a)) * 2.0),
            Op::Sqrt(a) => accumulate(adj, *a, g.zip_map(y, |gi, yi| 0.5 * gi / yi)),
            Op::Exp(a) => accumulate(adj, *a, g.component_mul(y)),
            Op::Log(a) => accumulate(adj, *a, g.zip_map(val(*a), |gi, xi| gi / xi)),
            Op::Sum(a) => {
                let (r, c) = val(*a).shape();
                accumulate(adj, *a, DMatrix::from_element(r, c, g[(0, 0)]));
            }
            Op::Mean(a) => {
                let (r, c) = val(*a).shape();
                let n = (r * c).max(1) as f64;
                accumulate(adj, *a, DMatrix::from_element(r, c, g[(0, 0)] / n));
            }
            Op::CenterColumns(a) => {
                let n = g.nrows().max(1) as f64;
                let mut out = g.clone();
                for mut col in out.column_iter_mut() {
                    let m = col.sum() / n;
                    col.add_scalar_mut(-m);
                }
                accumulate(adj, *a, out);
            }
            Op::Diag(a) => {
                let k = g.nrows();
                let mut out = DMatrix::zeros(k, k);
                for j in 0..k {
                    out[(j, j)] = g[(j, 0)];
                }
                accumulate(adj, *a, out);
            }
            Op::LogDetSpd(a) => {
                let l = cholesky_spd(&crate::linalg::symmetrize(val(*a)))?;
                accumulate(adj, *a, inverse_from_factor(&l) * g[(0, 0)]);
            }
            Op::LogSumExpRows(a) => {
                let x = val(*a);
                let mut out = DMatrix::zeros(x.nrows(), x.ncols());
                for r in 0..x.nrows() {
                    for c in 0..x.ncols() {
                        out[(r, c)] = g[(r, 0)] * (x[(r, c)] - y[(r, 0)]).exp();
                    }
                }
                accumulate(adj, *a, out);
            }
            Op::RowNormalize(a) => {
                let x = val(*a);
                let mut out = DMatrix::zeros(x.nrows(), x.ncols());
                for r in 0..x.nrows() {
                    let norm = x.row(r).norm();
                    let yr = y.row(r);
                    let gr = g.row(r);
                    let proj = yr.dot(&gr);
                    for c in 0..x.ncols() {
                        out[(r, c)] = (gr[c] - yr[c] * proj) / norm;
                    }
                }
                accumulate(adj, *a, out);
            }
            Op::RowSqNorms(a) => {
                let x = val(*a);
                let mut out = x * 2.0;
                for r in 0..x.nrows() {
                    out.row_mut(r).scale_mut(g[(r, 0)]);
                }
                accumulate(adj, *a, out);
            }
            Op::PairwiseSqDist(a) => {
                let x = val(*a);
                let n = x.nrows();
                let mut out = DMatrix::zeros(n, x.ncols());
                for i in 0..n {
                    for j in 0..n {
                        let w = 2.0 * (g[(i, j)] + g[(j, i)]);
                        if w != 0.0 && i != j {
                            let diff = x.row(i) - x.row(j);
                            let mut row = out.row_mut(i);
                            row += diff * w;
                        }
                    }
                }
                accumulate(adj, *a, out);
            }
        }
        Ok(())
    }
}

fn accumulate(adj: &mut [Option<DMatrix<f64>>], v: Var, g: DMatrix<f64>) {
    match &mut adj[v.0] {
        Some(existing) => *existing += g,
        slot @ None => *slot = Some(g),
    }
}

fn evaluate<'a, F>(op: &Op, val: F) -> Result<DMatrix<f64>>
where
    F: Fn(Var) -> &'a DMatrix<f64>,
{
    Ok(match op {
        Op::Leaf => unreachable!("leaves are not re-evaluated"),
        Op::Add(a, b) => val(*a) + val(*b),
        Op::Sub(a, b) => val(*a) - val(*b),
        Op::Mul(a, b) => val(*a).component_mul(val(*b)),
        Op::Scale(a, c) => val(*a) * *c,
        Op::AddScalar(a, c) => val(*a).add_scalar(*c),
        Op::MatMul(a, b) => val(*a) * val(*b),
        Op::Transpose(a) => val(*a).transpose(),
        Op::AddRowBroadcast(a, b) => {
            let mut out = val(*a).clone();
            let row = val(*b);
            for mut r in out.row_iter_mut() {
                r += row;
            }
            out
        }
        Op::Activation(a, act) => val(*a).map(|x| act.apply(x)),
        Op::MaxConst(a, c) => val(*a).map(|x| x.max(*c)),
        Op::Mask(a, m) => val(*a).component_mul(m),
        Op::Square(a) => val(*a).map(|x| x * x),
        Op::Sqrt(a) => val(*a).map(f64::sqrt),
        Op::Exp(a) => val(*a).map(f64::exp),
        Op::Log(a) => val(*a).map(f64::ln),
        Op::Sum(a) => DMatrix::from_element(1, 1, val(*a).sum()),
        Op::Mean(a) => {
            let x = val(*a);
            DMatrix::from_element(1, 1, x.sum() / (x.len().max(1) as f64))
        }
        Op::CenterColumns(a) => crate::linalg::center_columns(val(*a)),
        Op::Diag(a) => {
            let d = val(*a).diagonal();
            DMatrix::from_column_slice(d.len(), 1, d.as_slice())
        }
        Op::LogDetSpd(a) => {
            let l = cholesky_spd(&crate::linalg::symmetrize(val(*a)))?;
            DMatrix::from_element(1, 1, log_det_from_factor(&l))
        }
        Op::LogSumExpRows(a) => {
            let x = val(*a);
            DMatrix::from_fn(x.nrows(), 1, |r, _| {
                let row: Vec<f64> = x.row(r).iter().copied().collect();
                crate::gaussian::log_sum_exp(&row)
            })
        }
        Op::RowNormalize(a) => {
            let x = val(*a);
            let mut out = x.clone();
            for r in 0..x.nrows() {
                let norm = x.row(r).norm();
                if norm == 0.0 {
                    return Err(Error::ZeroNormRow { row: r });
                }
                out.row_mut(r).unscale_mut(norm);
            }
            out
        }
        Op::RowSqNorms(a) => {
            let x = val(*a);
            DMatrix::from_fn(x.nrows(), 1, |r, _| x.row(r).norm_squared())
        }
        Op::PairwiseSqDist(a) => {
            let x = val(*a);
            let n = x.nrows();
            DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { (x.row(i) - x.row(j)).norm_squared() })
        }
    })
}

/// Adjoints produced by [`Tape::grad`].
#[derive(Clone, Debug)]
pub struct Gradients {
    adj: Vec<Option<DMatrix<f64>>>,
}

impl Gradients {
    /// Gradient of the root with respect to `v`; zeros when `v` does not influence it.
    pub fn wrt(&self, tape: &Tape, v: Var) -> DMatrix<f64> {
        match self.adj.get(v.0).and_then(|a| a.as_ref()) {
            Some(g) => g.clone(),
            None => {
                let (r, c) = tape.value(v).shape();
                DMatrix::zeros(r, c)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn fd_check<F>(x0: &DMatrix<f64>, f: F)
    where
        F: Fn(&mut Tape, Var) -> Result<Var>,
    {
        let mut tape = Tape::new();
        let x = tape.leaf(x0.clone());
        let y = f(&mut tape, x).unwrap();
        let g = tape.grad(y).unwrap().wrt(&tape, x);
        let h = 1e-6;
        for idx in 0..x0.len() {
            let eval = |delta: f64| {
                let mut t = Tape::new();
                let mut xp = x0.clone();
                xp[idx] += delta;
                let v = t.leaf(xp);
                let out = f(&mut t, v).unwrap();
                t.scalar(out)
            };
            let fd = (eval(h) - eval(-h)) / (2.0 * h);
            assert_relative_eq!(g[idx], fd, epsilon = 1e-6, max_relative = 1e-5);
        }
    }

    fn sample() -> DMatrix<f64> {
        DMatrix::from_row_slice(3, 2, &[0.3, -1.2, 0.7, 0.4, -0.5, 0.9])
    }

    #[test]
    fn squared_norm_gradient_is_two_x() {
        let x0 = DMatrix::from_row_slice(3, 1, &[1.0, -2.0, 0.5]);
        let mut tape = Tape::new();
        let x = tape.leaf(x0.clone());
        let sq = tape.square(x);
        let loss = tape.sum(sq);
        let g = tape.grad(loss).unwrap().wrt(&tape, x);
        assert_eq!(g, &x0 * 2.0);
    }

    #[test]
    fn log_det_gradient_at_identity() {
        let mut tape = Tape::new();
        let s = tape.leaf(DMatrix::identity(3, 3));
        let ld = tape.log_det_spd(s).unwrap();
        assert_eq!(tape.scalar(ld), 0.0);
        let g = tape.grad(ld).unwrap().wrt(&tape, s);
        assert_relative_eq!(g, DMatrix::identity(3, 3), epsilon = 1e-14);
    }

    #[test]
    fn non_scalar_root_is_rejected() {
        let mut tape = Tape::new();
        let x = tape.leaf(sample());
        assert!(matches!(tape.grad(x), Err(Error::NonScalarRoot { rows: 3, cols: 2 })));
    }

    #[test]
    fn primitive_gradients_match_finite_differences() {
        let x0 = sample();
        fd_check(&x0, |t, x| {
            let c = t.center_columns(x);
            let xt = t.transpose(c);
            let cov = t.matmul(xt, c)?;
            let d = t.diag(cov)?;
            let s = t.add_scalar(d, 0.1);
            let s = t.sqrt(s);
            let h = t.scale(s, -1.0);
            let h = t.add_scalar(h, 2.0);
            let h = t.max_const(h, 0.0);
            Ok(t.sum(h))
        });
        fd_check(&x0, |t, x| {
            let l = t.log_sum_exp_rows(x);
            Ok(t.mean(l))
        });
        fd_check(&x0, |t, x| {
            let n = t.row_normalize(x)?;
            let nt = t.transpose(n);
            let g = t.matmul(n, nt)?;
            let e = t.exp(g);
            Ok(t.sum(e))
        });
        fd_check(&x0, |t, x| {
            let d = t.pairwise_sq_dist(x);
            let d = t.scale(d, -0.3);
            let l = t.log_sum_exp_rows(d);
            Ok(t.sum(l))
        });
        fd_check(&x0, |t, x| {
            let xt = t.transpose(x);
            let g = t.matmul(xt, x)?;
            let eye = t.leaf(DMatrix::identity(2, 2));
            let m = t.add(g, eye)?;
            t.log_det_spd(m)
        });
        fd_check(&x0, |t, x| {
            let a = t.activation(x, Activation::LeakyRelu { slope: 0.2 });
            let b = t.activation(x, Activation::Abs);
            let p = t.mul(a, b)?;
            let r = t.row_sq_norms(p);
            let l = t.add_scalar(r, 1.0);
            let l = t.ln(l);
            Ok(t.sum(l))
        });
        fd_check(&x0, |t, x| {
            let bias = t.leaf(DMatrix::from_row_slice(1, 2, &[0.1, -0.2]));
            let y = t.add_row_broadcast(x, bias)?;
            let y = t.mask(y, DMatrix::from_element(3, 2, 0.5))?;
            let y = t.sub(y, x)?;
            let y = t.square(y);
            Ok(t.sum(y))
        });
    }

    #[test]
    fn replay_is_bitwise() {
        let mut tape = Tape::new();
        let x = tape.leaf(sample());
        let xt = tape.transpose(x);
        let g = tape.matmul(x, xt).unwrap();
        let e = tape.exp(g);
        let l = tape.log_sum_exp_rows(e);
        let _ = tape.mean(l);
        let replayed = tape.replay().unwrap();
        for (i, v) in replayed.iter().enumerate() {
            assert_eq!(v, &tape.nodes[i].value);
        }
    }

    #[test]
    fn zero_row_normalize_errors() {
        let mut tape = Tape::new();
        let x = tape.leaf(DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0]));
        assert!(matches!(tape.row_normalize(x), Err(Error::ZeroNormRow { row: 1 })));
    }
}
