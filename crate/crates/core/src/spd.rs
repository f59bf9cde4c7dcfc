//! Channel covariance of EMG frames and the log-Cholesky distance between
//! SPD matrices.
//!
//! For SPD matrices with Cholesky factors `L₁`, `L₂`:
//!
//! ```text
//! d = sqrt(‖⌊L₁⌋ − ⌊L₂⌋‖²_F + ‖log diag(L₁) − log diag(L₂)‖²)
//! ```
//!
//! where `⌊·⌋` is the strictly lower triangular part.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Real;

/// Default ridge, relative to the mean channel power.
pub const DEFAULT_RIDGE_REL: f64 = 1e-6;

/// Symmetric positive definite channel covariance.
#[derive(Debug, Clone, PartialEq)]
pub struct CovFrame<T> {
    mat: Matrix<T>,
    /// Scaling applied to `E Eᵀ` (`1/τ`).
    pub epsilon: T,
    /// Ridge added to the diagonal.
    pub ridge: T,
}

impl<T: Real> CovFrame<T> {
    /// Wraps an SPD matrix; fails unless symmetric and Cholesky-factorable.
    pub fn from_matrix(mat: Matrix<T>) -> Result<Self> {
        let (r, c) = mat.shape();
        if r != c || r == 0 {
            return Err(Error::Shape(format!("covariance must be square, got {r}x{c}")));
        }
        if !mat.is_finite() {
            return Err(Error::NonFinite("covariance entries".into()));
        }
        let scale = mat
            .as_slice()
            .iter()
            .fold(T::one(), |m, &x| m.max(x.abs()));
        let tol = T::of(1e-9) * scale;
        for i in 0..r {
            for j in 0..i {
                if (mat[(i, j)] - mat[(j, i)]).abs() > tol {
                    return Err(Error::InvalidArgument(format!(
                        "covariance not symmetric at ({i}, {j})"
                    )));
                }
            }
        }
        cholesky_factor(&mat)?;
        Ok(Self {
            mat,
            epsilon: T::one(),
            ridge: T::zero(),
        })
    }

    #[inline]
    pub fn matrix(&self) -> &Matrix<T> {
        &self.mat
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.mat.rows()
    }
}

/// `(1/τ) E Eᵀ + δI` with `δ = ridge_rel · trace((1/τ) E Eᵀ) / V`.
pub fn covariance<T: Real>(frame: &Matrix<T>, ridge_rel: f64) -> Result<CovFrame<T>> {
    let (v, tau) = frame.shape();
    if tau == 0 || v == 0 {
        return Err(Error::InvalidArgument("frame needs τ ≥ 1 samples and V ≥ 1 channels".into()));
    }
    if !frame.is_finite() {
        return Err(Error::NonFinite("frame samples".into()));
    }
    let epsilon = T::one() / T::of_usize(tau);
    let mut mat = frame.gram_rows();
    mat.scale(epsilon);
    let trace = (0..v).fold(T::zero(), |acc, i| acc + mat[(i, i)]);
    if trace <= T::zero() {
        return Err(Error::Degenerate("all-zero frame has no covariance".into()));
    }
    let ridge = T::of(ridge_rel) * trace / T::of_usize(v);
    for i in 0..v {
        mat[(i, i)] += ridge;
    }
    // Positive-definiteness is guaranteed by the ridge; the factorization
    // still runs so a failure surfaces with its pivot.
    cholesky_factor(&mat)?;
    Ok(CovFrame { mat, epsilon, ridge })
}

/// Per-electrode power: the covariance diagonal.
pub fn diag_power<T: Real>(c: &CovFrame<T>) -> Vec<T> {
    (0..c.dim()).map(|i| c.mat[(i, i)]).collect()
}

/// Row-major flatten of the full symmetric matrix, length `V²`.
pub fn vec_cov<T: Real>(c: &CovFrame<T>) -> Vec<T> {
    c.mat.as_slice().to_vec()
}

/// Inverse of [`vec_cov`].
pub fn unvec_cov<T: Real>(v: &[T]) -> Result<CovFrame<T>> {
    let n = (v.len() as f64).sqrt().round() as usize;
    if n * n != v.len() {
        return Err(Error::Shape(format!("{} is not a square length", v.len())));
    }
    CovFrame::from_matrix(Matrix::from_vec(n, n, v.to_vec())?)
}

/// Lower-triangular Cholesky factor with strictly positive diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct CholFrame<T> {
    lower: Matrix<T>,
}

impl<T: Real> CholFrame<T> {
    /// Accepts a lower-triangular matrix with positive diagonal.
    pub fn from_lower(lower: Matrix<T>) -> Result<Self> {
        let (r, c) = lower.shape();
        if r != c {
            return Err(Error::Shape(format!("factor must be square, got {r}x{c}")));
        }
        for i in 0..r {
            if !(lower[(i, i)] > T::zero()) {
                return Err(Error::InvalidArgument(format!(
                    "diagonal entry {i} is not positive"
                )));
            }
            for j in i + 1..r {
                if lower[(i, j)] != T::zero() {
                    return Err(Error::InvalidArgument(format!(
                        "entry ({i}, {j}) above the diagonal is nonzero"
                    )));
                }
            }
        }
        Ok(Self { lower })
    }

    #[inline]
    pub fn lower(&self) -> &Matrix<T> {
        &self.lower
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.lower.rows()
    }

    /// `L Lᵀ`.
    pub fn reconstruct(&self) -> Matrix<T> {
        self.lower.gram_rows()
    }

    /// Log-Cholesky coordinates: strictly lower entries row by row, then
    /// the log diagonal. Length `V(V+1)/2`. Euclidean distance between
    /// coordinate vectors equals [`geodesic_distance`].
    pub fn log_coords(&self) -> Vec<T> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n * (n + 1) / 2);
        for i in 0..n {
            out.extend_from_slice(&self.lower.row(i)[..i]);
        }
        out.extend((0..n).map(|i| self.lower[(i, i)].ln()));
        out
    }

    pub fn from_log_coords(n: usize, coords: &[T]) -> Result<Self> {
        let off = n * (n - 1) / 2;
        if coords.len() != off + n {
            return Err(Error::Shape(format!(
                "{} log-Cholesky coordinates for V={n}",
                coords.len()
            )));
        }
        let mut lower = Matrix::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            for j in 0..i {
                lower[(i, j)] = coords[k];
                k += 1;
            }
        }
        for i in 0..n {
            lower[(i, i)] = coords[off + i].exp();
        }
        Self::from_lower(lower)
    }
}

fn cholesky_factor<T: Real>(a: &Matrix<T>) -> Result<Matrix<T>> {
    let n = a.rows();
    let mut l = Matrix::zeros(n, n);
    for j in 0..n {
        let mut d = a[(j, j)];
        for k in 0..j {
            d -= l[(j, k)] * l[(j, k)];
        }
        if !(d > T::zero()) {
            return Err(Error::NotPositiveDefinite {
                pivot: j,
                value: d.as_f64(),
            });
        }
        let djj = d.sqrt();
        l[(j, j)] = djj;
        for i in j + 1..n {
            let mut s = a[(i, j)];
            for k in 0..j {
                s -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = s / djj;
        }
    }
    Ok(l)
}

/// Cholesky factorization of a symmetric matrix; non-SPD input fails with
/// the offending pivot.
pub fn cholesky_matrix<T: Real>(a: &Matrix<T>) -> Result<CholFrame<T>> {
    if a.rows() != a.cols() {
        return Err(Error::Shape(format!("{}x{} is not square", a.rows(), a.cols())));
    }
    Ok(CholFrame {
        lower: cholesky_factor(a)?,
    })
}

pub fn cholesky<T: Real>(c: &CovFrame<T>) -> Result<CholFrame<T>> {
    cholesky_matrix(&c.mat)
}

/// Log-Cholesky distance between two factors.
pub fn geodesic_distance<T: Real>(a: &CholFrame<T>, b: &CholFrame<T>) -> Result<T> {
    let n = a.dim();
    if b.dim() != n {
        return Err(Error::Shape(format!("V={n} vs V={}", b.dim())));
    }
    let mut sum = T::zero();
    for i in 0..n {
        for j in 0..i {
            let d = a.lower[(i, j)] - b.lower[(i, j)];
            sum += d * d;
        }
        let d = a.lower[(i, i)].ln() - b.lower[(i, i)].ln();
        sum += d * d;
    }
    Ok(sum.sqrt())
}

/// Solves `A x = b` for each column of `b` given the Cholesky factor of `A`.
pub fn cholesky_solve<T: Real>(l: &CholFrame<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    let n = l.dim();
    if b.rows() != n {
        return Err(Error::Shape(format!("rhs has {} rows, factor is {n}", b.rows())));
    }
    let lm = &l.lower;
    let mut x = b.clone();
    for col in 0..b.cols() {
        for i in 0..n {
            let mut s = x[(i, col)];
            for k in 0..i {
                s -= lm[(i, k)] * x[(k, col)];
            }
            x[(i, col)] = s / lm[(i, i)];
        }
        for i in (0..n).rev() {
            let mut s = x[(i, col)];
            for k in i + 1..n {
                s -= lm[(k, i)] * x[(k, col)];
            }
            x[(i, col)] = s / lm[(i, i)];
        }
    }
    Ok(x)
}
