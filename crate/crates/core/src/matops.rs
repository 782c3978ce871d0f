//! Dense matrix constructions and SVD-backed utilities.
//!
//! Everything here is a pure function of its inputs. Matrices are plain
//! `nalgebra` dense matrices; the problem sizes in this crate (horizons of a
//! few dozen steps, datasets of a few thousand experiments) never call for
//! anything sparser.

use nalgebra::{DMatrix, DVector, SymmetricEigen, SVD};

use crate::error::{Error, Result};

pub type Matrix = DMatrix<f64>;
pub type Vector = DVector<f64>;

/// Default relative rank tolerance for a `rows x cols` matrix.
pub fn default_rank_tol(rows: usize, cols: usize) -> f64 {
    1e-10 * rows.max(cols).max(1) as f64
}

/// Rejects matrices holding NaN or infinite entries.
pub fn ensure_finite(m: &Matrix) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if !m[(i, j)].is_finite() {
                return Err(Error::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

/// Thin SVD with singular values sorted non-increasing.
#[derive(Clone, Debug)]
pub struct SvdFactors {
    pub u: Matrix,
    pub singular_values: Vector,
    pub v_t: Matrix,
}

impl SvdFactors {
    pub fn compute(a: &Matrix) -> Self {
        let (r, c) = a.shape();
        if r == 0 || c == 0 {
            return SvdFactors {
                u: Matrix::zeros(r, 0),
                singular_values: Vector::zeros(0),
                v_t: Matrix::zeros(0, c),
            };
        }
        let fa = faer::Mat::<f64>::from_fn(r, c, |i, j| a[(i, j)]);
        match fa.thin_svd() {
            Ok(svd) => {
                let (u, s, v) = (svd.U(), svd.S().column_vector(), svd.V());
                let k = s.nrows();
                SvdFactors {
                    u: Matrix::from_fn(r, k, |i, j| u[(i, j)]),
                    singular_values: Vector::from_fn(k, |i, _| s[i]),
                    v_t: Matrix::from_fn(k, c, |i, j| v[(j, i)]),
                }
            }
            // only reachable on non-convergence; nalgebra's result is a usable fallback
            Err(_) => {
                let svd = SVD::new(a.clone(), true, true);
                SvdFactors {
                    u: svd.u.expect("left singular vectors requested"),
                    singular_values: svd.singular_values,
                    v_t: svd.v_t.expect("right singular vectors requested"),
                }
            }
        }
    }

    pub fn sigma_max(&self) -> f64 {
        self.singular_values.iter().copied().fold(0.0, f64::max)
    }

    /// Number of singular values strictly above `rank_tol * sigma_max`.
    pub fn rank(&self, rank_tol: f64) -> usize {
        let cutoff = rank_tol * self.sigma_max();
        self.singular_values.iter().filter(|&&s| s > cutoff).count()
    }

    pub fn reconstruct(&self) -> Matrix {
        let mut us = self.u.clone();
        for (j, s) in self.singular_values.iter().enumerate() {
            us.column_mut(j).scale_mut(*s);
        }
        us * &self.v_t
    }
}

/// Hankel matrix of depth `depth`: column `t` is the window `z[t..t+depth]`.
pub fn hankel(z: &[f64], depth: usize) -> Result<Matrix> {
    let len = z.len();
    if depth == 0 || depth > len {
        return Err(Error::Dimension(format!(
            "Hankel depth {depth} outside 1..={len}"
        )));
    }
    let cols = len - depth + 1;
    Ok(Matrix::from_fn(depth, cols, |i, j| z[i + j]))
}

/// Square lower-triangular Toeplitz matrix with the given first column.
pub fn lower_toeplitz(first_col: &[f64]) -> Matrix {
    let n = first_col.len();
    Matrix::from_fn(n, n, |i, j| if i >= j { first_col[i - j] } else { 0.0 })
}

/// Moore-Penrose pseudoinverse; singular values `<= rank_tol * sigma_max` count as zero.
pub fn pinv(a: &Matrix, rank_tol: f64) -> Matrix {
    let (r, c) = a.shape();
    let svd = SvdFactors::compute(a);
    let cutoff = rank_tol * svd.sigma_max();
    let mut out = Matrix::zeros(c, r);
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= cutoff || s == 0.0 {
            continue;
        }
        // out += v_k u_k^T / s
        let v = svd.v_t.row(k).transpose();
        let u = svd.u.column(k);
        out.ger(1.0 / s, &v, &u, 1.0);
    }
    out
}

pub fn min_singular_value(a: &Matrix) -> f64 {
    SvdFactors::compute(a)
        .singular_values
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
        .max(0.0)
}

/// Minimum-norm least-squares solution `pinv(a) * b`.
pub fn least_squares_min_norm(a: &Matrix, b: &Vector, rank_tol: f64) -> Result<Vector> {
    if a.nrows() != b.len() {
        return Err(Error::Dimension(format!(
            "least squares: {} rows but right-hand side of length {}",
            a.nrows(),
            b.len()
        )));
    }
    let svd = SvdFactors::compute(a);
    let cutoff = rank_tol * svd.sigma_max();
    let mut x = Vector::zeros(a.ncols());
    for (k, &s) in svd.singular_values.iter().enumerate() {
        if s <= cutoff || s == 0.0 {
            continue;
        }
        let coeff = svd.u.column(k).dot(b) / s;
        x.axpy(coeff, &svd.v_t.row(k).transpose(), 1.0);
    }
    Ok(x)
}

/// Solves `h x = b` for symmetric positive definite `h`.
///
/// Falls back to the minimum-norm solution if the Cholesky factorization
/// fails, which only happens when `h` is numerically singular.
pub fn solve_spd(h: &Matrix, b: &Vector) -> Result<Vector> {
    if h.nrows() != h.ncols() || h.nrows() != b.len() {
        return Err(Error::Dimension(format!(
            "SPD solve: {}x{} system with right-hand side of length {}",
            h.nrows(),
            h.ncols(),
            b.len()
        )));
    }
    match h.clone().cholesky() {
        Some(chol) => Ok(chol.solve(b)),
        None => least_squares_min_norm(h, b, default_rank_tol(h.nrows(), h.ncols())),
    }
}

/// Smallest and largest eigenvalue of a symmetric matrix.
pub fn symmetric_eigen_extremes(h: &Matrix) -> (f64, f64) {
    let sym = (h + h.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}
