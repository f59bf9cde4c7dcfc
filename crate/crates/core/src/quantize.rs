//! K-means codebooks turning SS feature frames into discrete unit ids.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{read_container, write_container, ContainerKind, Header, LabelSequence, VocabKind};
use crate::matrix::{sq_dist, Matrix};
use crate::scalar::Real;

pub const DEFAULT_UNITS: usize = 100;
pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct Codebook<T> {
    /// k × d
    pub centers: Matrix<T>,
    pub seed: u64,
}

/// Codebook plus the per-iteration inertia of its fit.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit<T> {
    pub codebook: Codebook<T>,
    /// Inertia (summed squared distance) after each assignment step.
    pub inertia: Vec<f64>,
    pub iterations: usize,
}

impl<T: Real> Codebook<T> {
    pub fn new(centers: Matrix<T>, seed: u64) -> Result<Self> {
        if centers.rows() == 0 || centers.cols() == 0 {
            return Err(Error::InvalidArgument("codebook needs k ≥ 1 and d ≥ 1".into()));
        }
        if !centers.is_finite() {
            return Err(Error::NonFinite("codebook centers".into()));
        }
        for i in 0..centers.rows() {
            for j in 0..i {
                if sq_dist(centers.row(i), centers.row(j)) == T::zero() {
                    return Err(Error::Degenerate(format!("centers {j} and {i} coincide")));
                }
            }
        }
        Ok(Self { centers, seed })
    }

    pub fn k(&self) -> usize {
        self.centers.rows()
    }

    pub fn dim(&self) -> usize {
        self.centers.cols()
    }

    /// Nearest center by squared Euclidean distance, ties to the lowest id.
    pub fn nearest(&self, frame: &[T]) -> (usize, f64) {
        let x: Vec<f64> = frame.iter().map(|v| v.as_f64()).collect();
        nearest_f64(&self.centers.cast(), &x)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut header = Header::new(ContainerKind::Codebook, self.k(), self.dim());
        header.seed = self.seed;
        write_container(path, &header, &self.centers.cast())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let (header, centers) = read_container(path)?;
        if header.kind != ContainerKind::Codebook {
            return Err(Error::Format(format!("{} is not a codebook", path.display())));
        }
        Self::new(centers.cast(), header.seed)
    }
}

fn nearest_f64(centers: &Matrix<f64>, x: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centers.rows() {
        let d = sq_dist(centers.row(c), x);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_pp(x: &Matrix<f64>, k: usize, rng: &mut ChaCha8Rng) -> Result<Matrix<f64>> {
    let n = x.rows();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        if total <= 0.0 {
            return Err(Error::Degenerate(format!(
                "fewer than k={k} distinct frames"
            )));
        }
        let mut target = rng.random::<f64>() * total;
        let mut pick = n - 1;
        for (i, &d) in d2.iter().enumerate() {
            if d > 0.0 {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
        }
        while d2[pick] == 0.0 {
            pick -= 1;
        }
        chosen.push(pick);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(pick)));
        }
    }
    Ok(x.select_rows(&chosen))
}

/// Lloyd iterations from a seeded k-means++ start. Stops when the relative
/// inertia change drops below `tol` or after `max_iter` iterations. An empty
/// cluster is re-seeded to the frame farthest from its current center.
pub fn fit_codebook<T: Real>(
    frames: &Matrix<T>,
    k: usize,
    seed: u64,
    max_iter: usize,
    tol: f64,
) -> Result<KMeansFit<T>> {
    let n = frames.rows();
    if k == 0 {
        return Err(Error::InvalidArgument("k must be ≥ 1".into()));
    }
    if n < k {
        return Err(Error::InvalidArgument(format!("{n} frames are fewer than k={k}")));
    }
    if !frames.is_finite() {
        return Err(Error::NonFinite("k-means input frames".into()));
    }
    let x: Matrix<f64> = frames.cast();
    let d = x.cols();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centers = kmeans_pp(&x, k, &mut rng)?;
    let mut inertia = Vec::new();
    let mut iterations = 0;

    for _ in 0..max_iter.max(1) {
        iterations += 1;
        let assign: Vec<(usize, f64)> = (0..n)
            .into_par_iter()
            .map(|i| nearest_f64(&centers, x.row(i)))
            .collect();
        let current: f64 = assign.iter().map(|a| a.1).sum();
        let converged = inertia
            .last()
            .is_some_and(|&prev: &f64| (prev - current).abs() <= tol * prev.max(f64::MIN_POSITIVE));
        inertia.push(current);
        if converged || current == 0.0 {
            break;
        }

        let mut sums = Matrix::<f64>::zeros(k, d);
        let mut counts = vec![0usize; k];
        for (i, &(c, _)) in assign.iter().enumerate() {
            counts[c] += 1;
            for (s, v) in sums.row_mut(c).iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        let mut taken = vec![false; n];
        for (c, &count) in counts.iter().enumerate() {
            if count > 0 {
                let inv = 1.0 / count as f64;
                for (dst, s) in centers.row_mut(c).iter_mut().zip(sums.row(c)) {
                    *dst = s * inv;
                }
            } else {
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .fold((0, -1.0), |best, i| if assign[i].1 > best.1 { (i, assign[i].1) } else { best })
                    .0;
                taken[far] = true;
                log::debug!("k-means: empty cluster {c} re-seeded to frame {far}");
                centers.row_mut(c).copy_from_slice(x.row(far));
            }
        }
    }

    Ok(KMeansFit {
        codebook: Codebook::new(centers.cast(), seed)?,
        inertia,
        iterations,
    })
}

/// Unit ids per frame. Consecutive duplicates are kept unless `collapse`.
pub fn quantize<T: Real>(codebook: &Codebook<T>, frames: &Matrix<T>, collapse: bool) -> Result<LabelSequence> {
    if frames.cols() != codebook.dim() {
        return Err(Error::Shape(format!(
            "codebook has dimension {}, frames have {}",
            codebook.dim(),
            frames.cols()
        )));
    }
    let centers: Matrix<f64> = codebook.centers.cast();
    let mut ids: Vec<u32> = (0..frames.rows())
        .into_par_iter()
        .map(|t| {
            let x: Vec<f64> = frames.row(t).iter().map(|v| v.as_f64()).collect();
            nearest_f64(&centers, &x).0 as u32
        })
        .collect();
    if collapse {
        ids.dedup();
    }
    LabelSequence::with_size(VocabKind::Units, codebook.k(), ids)
}
