//! Dense linear-algebra helpers shared by the density, entropy and bound code.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative threshold below which a Cholesky pivot counts as zero.
pub const PIVOT_TOL: f64 = 1e-12;

/// Singular values below `PINV_RTOL * sigma_max` are treated as zero.
pub const PINV_RTOL: f64 = 1e-10;

/// Cholesky factorization that tolerates positive semi-definite input.
///
/// Returns a lower-triangular `L` with non-negative diagonal and `L·Lᵀ = A`,
/// together with the numerical rank (number of strictly positive pivots).
/// Zero pivots produce a zero column, which keeps the reconstruction exact
/// for PSD matrices of deficient rank.
pub fn cholesky_psd(a: &DMatrix<f64>) -> (DMatrix<f64>, usize) {
    let n = a.nrows();
    let scale = (0..n).map(|i| a[(i, i)].abs()).fold(0.0_f64, f64::max);
    let tol = PIVOT_TOL * scale.max(f64::MIN_POSITIVE);
    let mut l = DMatrix::<f64>::zeros(n, n);
    let mut rank = 0;
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if d <= tol {
            continue;
        }
        let pivot = d.sqrt();
        l[(j, j)] = pivot;
        rank += 1;
        for i in (j + 1)..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / pivot;
        }
    }
    (l, rank)
}

/// Cholesky factorization of a symmetric positive-definite matrix.
pub fn cholesky_spd(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let (l, rank) = cholesky_psd(a);
    if rank < a.nrows() {
        let pivot = (0..a.nrows()).find(|&i| l[(i, i)] == 0.0).unwrap_or(0);
        return Err(Error::RankDeficient { pivot, dim: a.nrows() });
    }
    Ok(l)
}

/// `log det(L·Lᵀ)` for a full-rank lower-triangular factor.
pub fn log_det_from_factor(l: &DMatrix<f64>) -> f64 {
    2.0 * l.diagonal().iter().map(|v| v.ln()).sum::<f64>()
}

/// Solves `L·x = b` by forward substitution.
pub fn solve_lower(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let n = l.nrows();
    let mut x = b.clone();
    for i in 0..n {
        let mut s = x[i];
        for k in 0..i {
            s -= l[(i, k)] * x[k];
        }
        x[i] = s / l[(i, i)];
    }
    x
}

/// Solves `L·X = B` column by column.
pub fn solve_lower_matrix(l: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(b.nrows(), b.ncols());
    for c in 0..b.ncols() {
        let col = solve_lower(l, &b.column(c).into_owned());
        out.set_column(c, &col);
    }
    out
}

/// `(L·Lᵀ)⁻¹` from a full-rank factor, symmetrized.
pub fn inverse_from_factor(l: &DMatrix<f64>) -> DMatrix<f64> {
    let n = l.nrows();
    let l_inv = solve_lower_matrix(l, &DMatrix::identity(n, n));
    l_inv.transpose() * l_inv
}

/// Thin singular value decomposition `A = U·diag(s)·Vᵀ` with `min(r, c)`
/// columns in `U` and `V`. Columns with a zero singular value are zero.
#[derive(Debug, Clone)]
pub struct ThinSvd {
    pub u: DMatrix<f64>,
    pub s: DVector<f64>,
    pub v: DMatrix<f64>,
}

const JACOBI_SWEEPS: usize = 80;

/// One-sided Jacobi SVD.
///
/// nalgebra's bidiagonal SVD returns wrong factors for some exactly
/// rank-deficient inputs (a constant 3×20 matrix is one), and the bound code
/// feeds it exactly such matrices for collapsed encoders. Jacobi rotations
/// are slower but accurate to working precision on every input we produce.
pub fn svd(a: &DMatrix<f64>) -> ThinSvd {
    if a.nrows() < a.ncols() {
        let t = svd(&a.transpose());
        return ThinSvd { u: t.v, s: t.s, v: t.u };
    }
    let c = a.ncols();
    let mut w = a.clone();
    let mut v = DMatrix::identity(c, c);
    for _ in 0..JACOBI_SWEEPS {
        let mut rotated = false;
        for i in 0..c {
            for j in i + 1..c {
                let alpha = w.column(i).norm_squared();
                let beta = w.column(j).norm_squared();
                let gamma = w.column(i).dot(&w.column(j));
                if gamma == 0.0 || gamma.abs() <= f64::EPSILON * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let cs = 1.0 / (1.0 + t * t).sqrt();
                let sn = cs * t;
                for m in [&mut w, &mut v] {
                    for k in 0..m.nrows() {
                        let (x, y) = (m[(k, i)], m[(k, j)]);
                        m[(k, i)] = cs * x - sn * y;
                        m[(k, j)] = sn * x + cs * y;
                    }
                }
            }
        }
        if !rotated {
            break;
        }
    }
    let s = DVector::from_fn(c, |j, _| w.column(j).norm());
    for j in 0..c {
        if s[j] > 0.0 {
            w.column_mut(j).unscale_mut(s[j]);
        }
    }
    ThinSvd { u: w, s, v }
}

/// Moore-Penrose pseudoinverse through the singular value decomposition.
pub fn pinv(a: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = a.shape();
    if r == 0 || c == 0 {
        return DMatrix::zeros(c, r);
    }
    let svd = svd(a);
    let s_max = svd.s.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = PINV_RTOL * s_max;
    let mut out = DMatrix::zeros(c, r);
    for (k, &s) in svd.s.iter().enumerate() {
        if s > cutoff && s > 0.0 {
            out += (svd.v.column(k) * svd.u.column(k).transpose()) / s;
        }
    }
    out
}

/// Largest singular value by power iteration on `AᵀA`.
pub fn spectral_norm(a: &DMatrix<f64>, max_iter: usize, tol: f64) -> f64 {
    let c = a.ncols();
    if a.nrows() == 0 || c == 0 {
        return 0.0;
    }
    let gram = a.transpose() * a;
    // deterministic, non-degenerate start
    let mut v = DVector::from_fn(c, |i, _| 1.0 + 0.1 * (i as f64 + 1.0).sin());
    v /= v.norm();
    let mut lambda = 0.0;
    for _ in 0..max_iter {
        let w = &gram * &v;
        let norm = w.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let next = v.dot(&w);
        v = w / norm;
        if (next - lambda).abs() <= tol * next.abs().max(1.0) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    lambda.max(0.0).sqrt()
}

/// Unbiased covariance of the rows of `x` (N×K → K×K).
pub fn row_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let n = x.nrows();
    let centered = center_columns(x);
    let denom = if n > 1 { (n - 1) as f64 } else { 1.0 };
    (centered.transpose() * centered) / denom
}

/// Subtracts the column mean from every row.
pub fn center_columns(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = x.clone();
    let n = x.nrows().max(1) as f64;
    for mut col in out.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    out
}

pub fn column_means(x: &DMatrix<f64>) -> DVector<f64> {
    let n = x.nrows().max(1) as f64;
    DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n))
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn reconstruction_error(a: &DMatrix<f64>) -> f64 {
        let t = svd(a);
        let k = a.nrows().min(a.ncols());
        assert_eq!((t.u.ncols(), t.v.ncols(), t.s.len()), (k, k, k));
        (&t.u * DMatrix::from_diagonal(&t.s) * t.v.transpose() - a).norm()
    }

    #[test]
    fn jacobi_svd_handles_degenerate_shapes() {
        for (r, c) in [(3, 20), (20, 3), (5, 13), (1, 7), (4, 4)] {
            assert!(reconstruction_error(&DMatrix::from_element(r, c, 1.0)) < 1e-12);
            assert!(reconstruction_error(&DMatrix::zeros(r, c)) == 0.0);
            let a = DMatrix::from_fn(r, c, |i, j| ((i * 7 + j * 3) as f64).sin());
            assert!(reconstruction_error(&a) < 1e-12);
            let t = svd(&a);
            let kept: Vec<usize> = (0..t.s.len()).filter(|&k| t.s[k] > 0.0).collect();
            for &i in &kept {
                for &j in &kept {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((t.v.column(i).dot(&t.v.column(j)) - want).abs() < 1e-12);
                }
            }
        }
        let t = svd(&DMatrix::from_element(3, 20, 1.0));
        let mut s: Vec<f64> = t.s.iter().cloned().collect();
        s.sort_by(f64::total_cmp);
        assert_relative_eq!(s[2], 60f64.sqrt(), epsilon = 1e-12);
        assert!(s[1] < 1e-12);
    }

    #[test]
    fn psd_cholesky_reconstructs_rank_deficient() {
        let u = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, -1.0]);
        let a = &u * u.transpose();
        let (l, rank) = cholesky_psd(&a);
        assert_eq!(rank, 1);
        assert_relative_eq!(&l * l.transpose(), a, epsilon = 1e-12);
        assert!(cholesky_spd(&a).is_err());
    }

    #[test]
    fn pinv_of_invertible_is_inverse() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let p = pinv(&a);
        assert_relative_eq!(&a * p, DMatrix::identity(2, 2), epsilon = 1e-12);
    }

    #[test]
    fn pinv_drops_tiny_singular_values() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 1e-14]);
        let p = pinv(&a);
        assert_relative_eq!(p[(1, 1)], 0.0);
        assert_relative_eq!(p[(0, 0)], 1.0);
    }

    #[test]
    fn spectral_norm_of_diagonal() {
        let a = DMatrix::from_row_slice(2, 3, &[3.0, 0.0, 0.0, 0.0, -5.0, 0.0]);
        assert_relative_eq!(spectral_norm(&a, 100, 1e-12), 5.0, epsilon = 1e-9);
    }

    #[test]
    fn inverse_from_factor_matches() {
        let a = DMatrix::from_row_slice(3, 3, &[4.0, 1.0, 0.5, 1.0, 3.0, 0.2, 0.5, 0.2, 2.0]);
        let l = cholesky_spd(&a).unwrap();
        assert_relative_eq!(inverse_from_factor(&l) * &a, DMatrix::identity(3, 3), epsilon = 1e-12);
        assert_relative_eq!(log_det_from_factor(&l), a.determinant().ln(), epsilon = 1e-12);
    }
}
