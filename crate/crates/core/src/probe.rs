//! Ridge-regression probes between frame-aligned feature spaces, scored by
//! per-dimension Pearson correlation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::scalar::Real;
use crate::spd::{cholesky_matrix, cholesky_solve};

/// 1e-4, 1e-3, …, 1e2.
pub const DEFAULT_LAMBDAS: [f64; 7] = [1e-4, 1e-3, 1e-2, 1e-1, 1.0, 1e1, 1e2];

/// Share of training frames held out for λ selection in [`fit`].
pub const VALIDATION_FRACTION: f64 = 0.2;

/// Affine map `y ≈ W x + b`, always stored in f64.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearMap {
    /// d_out × d_in
    pub w: Matrix<f64>,
    pub b: Vec<f64>,
    pub lambda: f64,
    /// Training-set Pearson r per output dimension; `None` where undefined.
    pub fit_r: Vec<Option<f64>>,
}

impl LinearMap {
    pub fn d_in(&self) -> usize {
        self.w.cols()
    }

    pub fn d_out(&self) -> usize {
        self.w.rows()
    }

    pub fn predict<T: Real>(&self, x: &Matrix<T>) -> Result<Matrix<f64>> {
        if x.cols() != self.d_in() {
            return Err(Error::Shape(format!(
                "probe expects {} input dims, got {}",
                self.d_in(),
                x.cols()
            )));
        }
        let rows: Vec<Vec<f64>> = (0..x.rows())
            .into_par_iter()
            .map(|t| {
                let xt: Vec<f64> = x.row(t).iter().map(|v| v.as_f64()).collect();
                (0..self.d_out())
                    .map(|o| self.b[o] + crate::matrix::dot(self.w.row(o), &xt))
                    .collect()
            })
            .collect();
        Matrix::from_vec(x.rows(), self.d_out(), rows.concat())
    }
}

/// Sums of shifted frames and their cross products. Sets sharing a shift
/// merge by addition; the shift keeps the sums well conditioned.
struct Moments {
    n: f64,
    x_shift: Vec<f64>,
    y_shift: Vec<f64>,
    sx: Vec<f64>,
    sy: Vec<f64>,
    sxx: Matrix<f64>,
    sxy: Matrix<f64>,
}

fn to_f64<T: Real>(m: &Matrix<T>) -> Matrix<f64> {
    m.cast()
}

fn column_means(m: &Matrix<f64>) -> Vec<f64> {
    let mut mean = column_sums(m);
    let n = m.rows() as f64;
    mean.iter_mut().for_each(|v| *v /= n);
    mean
}

fn column_sums(m: &Matrix<f64>) -> Vec<f64> {
    let mut sum = vec![0.0; m.cols()];
    for row in m.iter_rows() {
        for (acc, v) in sum.iter_mut().zip(row) {
            *acc += v;
        }
    }
    sum
}

fn shifted(m: &Matrix<f64>, shift: &[f64]) -> Matrix<f64> {
    Matrix::from_fn(m.rows(), m.cols(), |i, j| m[(i, j)] - shift[j])
}

/// `Aᵀ B` for row-major frame matrices.
fn cross(a: &Matrix<f64>, b: &Matrix<f64>) -> Matrix<f64> {
    assert_eq!(a.rows(), b.rows());
    let (t, da, db) = (a.rows(), a.cols(), b.cols());
    let mut out = Matrix::zeros(da, db);
    // SAFETY: the strides describe Aᵀ (da × t), B (t × db) and the output
    // (da × db) exactly within their row-major buffers.
    unsafe {
        matrixmultiply::dgemm(
            da,
            t,
            db,
            1.0,
            a.as_slice().as_ptr(),
            1,
            da as isize,
            b.as_slice().as_ptr(),
            db as isize,
            1,
            0.0,
            out.as_mut_slice().as_mut_ptr(),
            db as isize,
            1,
        );
    }
    out
}

fn check_pair(x: &Matrix<f64>, y: &Matrix<f64>) -> Result<()> {
    if x.rows() != y.rows() {
        return Err(Error::LengthMismatch {
            what: "probe input vs target frames".into(),
            left: x.rows(),
            right: y.rows(),
        });
    }
    if x.rows() == 0 {
        return Err(Error::InvalidArgument("no training frames".into()));
    }
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::NonFinite("probe inputs".into()));
    }
    Ok(())
}

impl Moments {
    /// Shifted by the set's own means.
    fn new(x: &Matrix<f64>, y: &Matrix<f64>) -> Self {
        Self::with_shift(x, y, column_means(x), column_means(y))
    }

    fn with_shift(x: &Matrix<f64>, y: &Matrix<f64>, x_shift: Vec<f64>, y_shift: Vec<f64>) -> Self {
        let xc = shifted(x, &x_shift);
        let yc = shifted(y, &y_shift);
        Self {
            n: x.rows() as f64,
            sx: column_sums(&xc),
            sy: column_sums(&yc),
            sxx: cross(&xc, &xc),
            sxy: cross(&xc, &yc),
            x_shift,
            y_shift,
        }
    }

    /// Moments of another set under this set's shift.
    fn extend(&self, x: &Matrix<f64>, y: &Matrix<f64>) -> Self {
        let other = Self::with_shift(x, y, self.x_shift.clone(), self.y_shift.clone());
        let add = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(p, q)| p + q).collect::<Vec<_>>();
        let mut sxx = self.sxx.clone();
        sxx.as_mut_slice().iter_mut().zip(other.sxx.as_slice()).for_each(|(p, q)| *p += q);
        let mut sxy = self.sxy.clone();
        sxy.as_mut_slice().iter_mut().zip(other.sxy.as_slice()).for_each(|(p, q)| *p += q);
        Self {
            n: self.n + other.n,
            sx: add(&self.sx, &other.sx),
            sy: add(&self.sy, &other.sy),
            sxx,
            sxy,
            x_shift: other.x_shift,
            y_shift: other.y_shift,
        }
    }

    fn solve(&self, lambda: f64) -> Result<LinearMap> {
        let (dx, dy) = (self.sx.len(), self.sy.len());
        let a = Matrix::from_fn(dx, dx, |i, j| {
            self.sxx[(i, j)] - self.sx[i] * self.sx[j] / self.n + if i == j { lambda } else { 0.0 }
        });
        let xty = Matrix::from_fn(dx, dy, |i, o| self.sxy[(i, o)] - self.sx[i] * self.sy[o] / self.n);
        let l = cholesky_matrix(&a)?;
        let w = cholesky_solve(&l, &xty)?.transpose();
        let x_mean: Vec<f64> = self.x_shift.iter().zip(&self.sx).map(|(c, s)| c + s / self.n).collect();
        let b = (0..dy)
            .map(|o| self.y_shift[o] + self.sy[o] / self.n - crate::matrix::dot(w.row(o), &x_mean))
            .collect();
        Ok(LinearMap {
            w,
            b,
            lambda,
            fit_r: Vec::new(),
        })
    }
}

/// Closed-form ridge fit at one λ. The intercept is not penalized.
pub fn fit_ridge<T: Real>(x: &Matrix<T>, y: &Matrix<T>, lambda: f64) -> Result<LinearMap> {
    let (x, y) = (to_f64(x), to_f64(y));
    check_pair(&x, &y)?;
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidArgument(format!("invalid ridge λ {lambda}")));
    }
    warn_if_underdetermined(x.rows(), x.cols());
    let mut map = Moments::new(&x, &y).solve(lambda)?;
    map.fit_r = per_dim_r(&map.predict(&x)?, &y);
    Ok(map)
}

fn warn_if_underdetermined(n: usize, d_in: usize) {
    if n < 10 * d_in {
        log::warn!("probe fit on {n} frames for {d_in} input dims; expect overfitting");
    }
}

/// Fits on `x_train`, choosing λ from `grid` by validation mean r (first
/// best in grid order), then refits on train + validation at that λ.
pub fn fit_with_validation<T: Real>(
    x_train: &Matrix<T>,
    y_train: &Matrix<T>,
    x_val: &Matrix<T>,
    y_val: &Matrix<T>,
    grid: &[f64],
) -> Result<LinearMap> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("empty λ grid".into()));
    }
    let (xt, yt) = (to_f64(x_train), to_f64(y_train));
    check_pair(&xt, &yt)?;
    let moments = Moments::new(&xt, &yt);
    let mut best: Option<(f64, f64)> = None;
    for &lambda in grid {
        let map = moments.solve(lambda)?;
        // constant validation targets leave every λ equally (un)scored
        let score = match evaluate(&map, x_val, y_val) {
            Ok(r) => r.mean_r,
            Err(Error::Degenerate(_)) => f64::NEG_INFINITY,
            Err(e) => return Err(e),
        };
        log::debug!("λ={lambda:e}: validation mean r {score:.4}");
        if best.is_none_or(|(_, s)| score > s) {
            best = Some((lambda, score));
        }
    }
    let lambda = best.expect("non-empty grid").0;
    let (xv, yv) = (to_f64(x_val), to_f64(y_val));
    check_pair(&xv, &yv)?;
    let x = Matrix::vstack(&[&xt, &xv])?;
    let y = Matrix::vstack(&[&yt, &yv])?;
    warn_if_underdetermined(x.rows(), x.cols());
    let mut map = moments.extend(&xv, &yv).solve(lambda)?;
    map.fit_r = per_dim_r(&map.predict(&x)?, &y);
    Ok(map)
}

/// Ridge fit with λ from `grid`. With more than one candidate, the last
/// fifth of the frames (contiguous) serves as the validation split.
pub fn fit<T: Real>(x: &Matrix<T>, y: &Matrix<T>, grid: &[f64]) -> Result<LinearMap> {
    match grid {
        [] => Err(Error::InvalidArgument("empty λ grid".into())),
        [lambda] => fit_ridge(x, y, *lambda),
        _ => {
            let n = x.rows();
            let n_val = ((n as f64 * VALIDATION_FRACTION).round() as usize).max(2);
            if n < n_val + 2 {
                return Err(Error::InvalidArgument(format!(
                    "{n} frames are too few for λ selection"
                )));
            }
            let cut = n - n_val;
            let head: Vec<usize> = (0..cut).collect();
            let tail: Vec<usize> = (cut..n).collect();
            if y.rows() != n {
                return Err(Error::LengthMismatch {
                    what: "probe input vs target frames".into(),
                    left: n,
                    right: y.rows(),
                });
            }
            fit_with_validation(
                &x.select_rows(&head),
                &y.select_rows(&head),
                &x.select_rows(&tail),
                &y.select_rows(&tail),
                grid,
            )
        }
    }
}

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson<T: Real>(a: &[T], b: &[T]) -> Option<f64> {
    let n = a.len().min(b.len());
    if n < 2 {
        return None;
    }
    let ma = a[..n].iter().map(|v| v.as_f64()).sum::<f64>() / n as f64;
    let mb = b[..n].iter().map(|v| v.as_f64()).sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x.as_f64() - ma, y.as_f64() - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 || sbb <= 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

fn per_dim_r<T: Real>(pred: &Matrix<f64>, truth: &Matrix<T>) -> Vec<Option<f64>> {
    let pt = pred.transpose();
    let tt = truth.transpose();
    (0..pt.rows())
        .into_par_iter()
        .map(|o| {
            let t: Vec<f64> = tt.row(o).iter().map(|v| v.as_f64()).collect();
            pearson(pt.row(o), &t)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub per_dim_r: Vec<Option<f64>>,
    /// Unweighted mean over dimensions with defined r, frames pooled.
    pub mean_r: f64,
    pub n_test_frames: usize,
    /// Dimensions left out for zero variance.
    pub excluded_dims: usize,
    pub layer_id: Option<usize>,
    pub lambda: f64,
}

impl ProbeReport {
    pub fn from_r(per_dim_r: Vec<Option<f64>>, n_test_frames: usize, lambda: f64) -> Result<Self> {
        let valid: Vec<f64> = per_dim_r.iter().flatten().copied().collect();
        if valid.is_empty() {
            return Err(Error::Degenerate("every output dimension has zero variance".into()));
        }
        let excluded_dims = per_dim_r.len() - valid.len();
        if excluded_dims > 0 {
            log::warn!("{excluded_dims} zero-variance dimension(s) excluded from mean r");
        }
        Ok(Self {
            mean_r: valid.iter().sum::<f64>() / valid.len() as f64,
            per_dim_r,
            n_test_frames,
            excluded_dims,
            layer_id: None,
            lambda,
        })
    }

    /// Quantile over defined per-dimension r (nearest rank).
    pub fn r_quantile(&self, q: f64) -> f64 {
        let mut v: Vec<f64> = self.per_dim_r.iter().flatten().copied().collect();
        v.sort_by(f64::total_cmp);
        let idx = ((q.clamp(0.0, 1.0) * (v.len() - 1) as f64).round()) as usize;
        v[idx]
    }
}

pub fn evaluate<T: Real>(map: &LinearMap, x_test: &Matrix<T>, y_test: &Matrix<T>) -> Result<ProbeReport> {
    if x_test.rows() != y_test.rows() {
        return Err(Error::LengthMismatch {
            what: "test input vs target frames".into(),
            left: x_test.rows(),
            right: y_test.rows(),
        });
    }
    if x_test.rows() < 2 {
        return Err(Error::InvalidArgument("need ≥ 2 test frames".into()));
    }
    if y_test.cols() != map.d_out() {
        return Err(Error::Shape(format!(
            "probe predicts {} dims, targets have {}",
            map.d_out(),
            y_test.cols()
        )));
    }
    let pred = map.predict(x_test)?;
    ProbeReport::from_r(per_dim_r(&pred, y_test), x_test.rows(), map.lambda)
}

/// Train / validation / test frames for one layer or feature source.
#[derive(Debug, Clone)]
pub struct ProbeData<T> {
    pub train: Matrix<T>,
    pub val: Matrix<T>,
    pub test: Matrix<T>,
}

/// One report per layer, fitted independently and in parallel.
pub fn layer_sweep<T: Real>(
    layers: &[ProbeData<T>],
    target: &ProbeData<T>,
    grid: &[f64],
) -> Result<Vec<ProbeReport>> {
    layers
        .par_iter()
        .enumerate()
        .map(|(j, layer)| {
            let map = fit_with_validation(&layer.train, &target.train, &layer.val, &target.val, grid)?;
            let mut report = evaluate(&map, &layer.test, &target.test)?;
            report.layer_id = Some(j);
            Ok(report)
        })
        .collect()
}

/// `layer,mean_r,lambda,excluded_dims,r_q10,r_q50,r_q90` rows.
pub fn sweep_csv(reports: &[ProbeReport]) -> String {
    let mut out = String::from("layer,mean_r,lambda,excluded_dims,r_q10,r_q50,r_q90\n");
    for (i, r) in reports.iter().enumerate() {
        out.push_str(&format!(
            "{},{:.6},{:e},{},{:.6},{:.6},{:.6}\n",
            r.layer_id.unwrap_or(i),
            r.mean_r,
            r.lambda,
            r.excluded_dims,
            r.r_quantile(0.1),
            r.r_quantile(0.5),
            r.r_quantile(0.9)
        ));
    }
    out
}

/// Common frame count for two sequences that should be frame-aligned.
/// Differences up to `slack` frames (edge effects of separate framing) are
/// truncated; larger ones are an error.
pub fn paired_len(what: &str, left: usize, right: usize, slack: usize) -> Result<usize> {
    if left.abs_diff(right) > slack {
        return Err(Error::LengthMismatch {
            what: what.to_string(),
            left,
            right,
        });
    }
    Ok(left.min(right))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_points(n: usize, d: usize) -> Matrix<f64> {
        Matrix::from_fn(n, d, |i, j| ((i * 7 + j * 13) % 17) as f64 + (i as f64 * 0.37 + j as f64).sin())
    }

    #[test]
    fn identity_map() {
        let x = grid_points(200, 4);
        let m = fit_ridge(&x, &x, 1e-10).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((m.w[(i, j)] - want).abs() < 1e-6);
            }
            assert!(m.b[i].abs() < 1e-6);
        }
    }

    #[test]
    fn constant_target() {
        let x = grid_points(100, 3);
        let y = Matrix::from_fn(100, 2, |_, j| [4.0, -1.5][j]);
        let m = fit(&x, &y, &DEFAULT_LAMBDAS).unwrap();
        assert!(m.w.as_slice().iter().all(|w| w.abs() < 1e-12));
        assert!((m.b[0] - 4.0).abs() < 1e-12 && (m.b[1] + 1.5).abs() < 1e-12);
    }

    #[test]
    fn anti_correlation_and_zero_variance() {
        let a = [1.0, 2.0, 4.0, 3.0];
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((pearson(&a, &neg).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(pearson(&a, &[2.0; 4]), None);
        let r = ProbeReport::from_r(vec![Some(0.5), None, Some(0.7)], 10, 1.0).unwrap();
        assert_eq!(r.excluded_dims, 1);
        assert!((r.mean_r - 0.6).abs() < 1e-15);
        assert!(ProbeReport::from_r(vec![None], 10, 1.0).is_err());
    }

    #[test]
    fn argument_errors() {
        let x = grid_points(10, 2);
        assert!(fit_ridge(&x, &grid_points(9, 2), 1.0).is_err());
        assert!(fit_ridge(&Matrix::<f64>::zeros(0, 2), &Matrix::zeros(0, 1), 1.0).is_err());
        let mut bad = x.clone();
        bad[(3, 1)] = f64::NAN;
        assert!(fit_ridge(&bad, &x, 1.0).is_err());
        let m = fit_ridge(&x, &x, 1.0).unwrap();
        assert!(evaluate(&m, &grid_points(1, 2), &grid_points(1, 2)).is_err());
        assert!(layer_sweep::<f64>(&[], &ProbeData { train: x.clone(), val: x.clone(), test: x }, &[1.0]).unwrap().is_empty());
    }

    #[test]
    fn paired_len_slack() {
        assert_eq!(paired_len("x", 100, 99, 2).unwrap(), 99);
        assert!(matches!(paired_len("x", 100, 90, 2), Err(Error::LengthMismatch { .. })));
    }
}
