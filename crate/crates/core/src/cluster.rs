//! k-medoids clustering of gesture covariances and label-matched accuracy.

use nalgebra::{DMatrix, SymmetricEigen};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::spd::{cholesky, diag_power, geodesic_distance, CovFrame};

/// Distances between gesture representations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    /// Euclidean distance between covariance diagonals.
    EuclideanDiag,
    /// Log-Cholesky geodesic between full covariances.
    Geodesic,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::EuclideanDiag => "euclidean-diag",
            Metric::Geodesic => "geodesic",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GestureItem {
    pub cov: CovFrame<f64>,
    pub label: usize,
}

/// Labeled gesture repetitions sharing one electrode count.
#[derive(Debug, Clone, PartialEq)]
pub struct GestureSet {
    pub items: Vec<GestureItem>,
    pub k: usize,
}

impl GestureSet {
    pub fn new(items: Vec<GestureItem>, k: usize) -> Result<Self> {
        let v = items.first().map_or(0, |it| it.cov.dim());
        if items.iter().any(|it| it.cov.dim() != v) {
            return Err(Error::Shape("gesture items differ in electrode count".into()));
        }
        let mut counts = vec![0usize; k];
        for it in &items {
            *counts.get_mut(it.label).ok_or_else(|| {
                Error::InvalidArgument(format!("label {} out of range for k={k}", it.label))
            })? += 1;
        }
        if k > 1 {
            if let Some(c) = counts.iter().position(|&n| n < 2) {
                return Err(Error::InvalidArgument(format!(
                    "class {c} has fewer than 2 items"
                )));
            }
        }
        Ok(Self { items, k })
    }

    pub fn labels(&self) -> Vec<usize> {
        self.items.iter().map(|it| it.label).collect()
    }

    pub fn diag_features(&self) -> Vec<Vec<f64>> {
        self.items.iter().map(|it| diag_power(&it.cov)).collect()
    }

    /// Pairwise distances, rows computed in parallel.
    pub fn distance_matrix(&self, metric: Metric) -> Result<Matrix<f64>> {
        let n = self.items.len();
        let rows: Vec<Vec<f64>> = match metric {
            Metric::EuclideanDiag => {
                let feats = self.diag_features();
                feats
                    .par_iter()
                    .map(|a| {
                        feats
                            .iter()
                            .map(|b| crate::matrix::sq_dist(a, b).sqrt())
                            .collect()
                    })
                    .collect()
            }
            Metric::Geodesic => {
                let factors = self
                    .items
                    .iter()
                    .map(|it| cholesky(&it.cov))
                    .collect::<Result<Vec<_>>>()?;
                factors
                    .par_iter()
                    .map(|a| {
                        factors
                            .iter()
                            .map(|b| geodesic_distance(a, b))
                            .collect::<Result<Vec<_>>>()
                    })
                    .collect::<Result<Vec<_>>>()?
            }
        };
        Matrix::from_vec(n, n, rows.concat())
    }
}

/// PAM result. Cluster ids index `medoids`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMedoids {
    pub medoids: Vec<usize>,
    pub assignment: Vec<usize>,
    pub cost: f64,
    /// Total cost after BUILD and after each accepted swap.
    pub cost_trace: Vec<f64>,
    pub seed: u64,
}

fn nearest(dist: &Matrix<f64>, medoids: &[usize], i: usize) -> (usize, f64, f64) {
    let (mut best, mut d1, mut d2) = (0, f64::INFINITY, f64::INFINITY);
    for (c, &m) in medoids.iter().enumerate() {
        let d = dist[(i, m)];
        if d < d1 {
            d2 = d1;
            d1 = d;
            best = c;
        } else if d < d2 {
            d2 = d;
        }
    }
    (best, d1, d2)
}

/// PAM: greedy BUILD followed by best-improvement SWAP until no swap lowers
/// the total cost or `max_iter` swaps have been made. Every tie is broken by
/// lowest index, so the result is fully determined by the distances; `seed`
/// is recorded for provenance.
pub fn kmedoids(dist: &Matrix<f64>, k: usize, seed: u64, max_iter: usize) -> Result<KMedoids> {
    let n = dist.rows();
    if dist.cols() != n {
        return Err(Error::Shape("distance matrix must be square".into()));
    }
    if k == 0 || k > n {
        return Err(Error::InvalidArgument(format!("need 1 ≤ k ≤ n, got k={k}, n={n}")));
    }
    if !dist.is_finite() {
        return Err(Error::NonFinite("distance matrix".into()));
    }

    // BUILD
    let mut medoids = Vec::with_capacity(k);
    let mut is_medoid = vec![false; n];
    let first = (0..n)
        .map(|j| (j, (0..n).map(|i| dist[(i, j)]).sum::<f64>()))
        .fold((0, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best })
        .0;
    medoids.push(first);
    is_medoid[first] = true;
    let mut near: Vec<f64> = (0..n).map(|i| dist[(i, first)]).collect();
    while medoids.len() < k {
        let mut best = (usize::MAX, -1.0);
        for c in (0..n).filter(|&c| !is_medoid[c]) {
            let gain: f64 = (0..n).map(|i| (near[i] - dist[(i, c)]).max(0.0)).sum();
            if gain > best.1 {
                best = (c, gain);
            }
        }
        let c = best.0;
        medoids.push(c);
        is_medoid[c] = true;
        for (i, d) in near.iter_mut().enumerate() {
            *d = d.min(dist[(i, c)]);
        }
    }

    let total = |meds: &[usize]| (0..n).map(|i| nearest(dist, meds, i).1).sum::<f64>();
    let mut cost = total(&medoids);
    let mut cost_trace = vec![cost];

    // SWAP
    for _ in 0..max_iter {
        let info: Vec<(usize, f64, f64)> = (0..n).map(|i| nearest(dist, &medoids, i)).collect();
        let mut best = (0usize, 0usize, 0.0f64);
        for (p, _) in medoids.iter().enumerate() {
            for o in (0..n).filter(|&o| !is_medoid[o]) {
                let delta: f64 = info
                    .iter()
                    .enumerate()
                    .map(|(i, &(c, d1, d2))| {
                        let keep = if c == p { d2 } else { d1 };
                        keep.min(dist[(i, o)]) - d1
                    })
                    .sum();
                if delta < best.2 {
                    best = (p, o, delta);
                }
            }
        }
        let (p, o, delta) = best;
        if delta >= -1e-12 * cost.max(1.0) {
            break;
        }
        is_medoid[medoids[p]] = false;
        is_medoid[o] = true;
        medoids[p] = o;
        cost = total(&medoids);
        cost_trace.push(cost);
    }

    let assignment = (0..n).map(|i| nearest(dist, &medoids, i).0).collect();
    Ok(KMedoids {
        medoids,
        assignment,
        cost,
        cost_trace,
        seed,
    })
}

/// Rows: clusters, columns: labels. Square, padded with zeros to
/// `max(clusters, labels)`.
pub fn confusion_matrix(assignment: &[usize], labels: &[usize]) -> Result<Vec<Vec<usize>>> {
    if assignment.len() != labels.len() {
        return Err(Error::LengthMismatch {
            what: "assignment vs labels".into(),
            left: assignment.len(),
            right: labels.len(),
        });
    }
    let size = assignment
        .iter()
        .chain(labels)
        .max()
        .map_or(0, |&m| m + 1);
    let mut conf = vec![vec![0usize; size]; size];
    for (&a, &l) in assignment.iter().zip(labels) {
        conf[a][l] += 1;
    }
    Ok(conf)
}

/// Fraction of items matched under the best one-to-one cluster → label
/// mapping (Hungarian assignment on the confusion matrix).
pub fn cluster_accuracy(assignment: &[usize], labels: &[usize]) -> Result<f64> {
    let conf = confusion_matrix(assignment, labels)?;
    if assignment.is_empty() {
        return Err(Error::InvalidArgument("no items".into()));
    }
    let mapping = max_weight_matching(&conf);
    let matched: usize = mapping.iter().enumerate().map(|(r, &c)| conf[r][c]).sum();
    Ok(matched as f64 / assignment.len() as f64)
}

/// Kuhn–Munkres with potentials on a square count matrix; returns, for each
/// row, the column it is matched to, maximizing the total count.
pub fn max_weight_matching(weights: &[Vec<usize>]) -> Vec<usize> {
    let n = weights.len();
    if n == 0 {
        return Vec::new();
    }
    let top = weights.iter().flatten().copied().max().unwrap_or(0) as i64;
    // 1-based arrays, minimizing cost = top - weight
    let cost = |i: usize, j: usize| top - weights[i - 1][j - 1] as i64;
    let mut u = vec![0i64; n + 1];
    let mut v = vec![0i64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0;
        let mut minv = vec![i64::MAX; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = i64::MAX;
            let mut j1 = 0;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost(i0, j) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut row_to_col = vec![0; n];
    for j in 1..=n {
        row_to_col[p[j] - 1] = j - 1;
    }
    row_to_col
}

/// Accuracy, confusion and medoids for one metric on one gesture set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterReport {
    pub metric: Metric,
    pub accuracy: f64,
    pub confusion: Vec<Vec<usize>>,
    pub medoids: Vec<usize>,
    pub cost: f64,
}

pub fn cluster_gestures(set: &GestureSet, metric: Metric, seed: u64, max_iter: usize) -> Result<ClusterReport> {
    let dist = set.distance_matrix(metric)?;
    let km = kmedoids(&dist, set.k, seed, max_iter)?;
    let labels = set.labels();
    Ok(ClusterReport {
        metric,
        accuracy: cluster_accuracy(&km.assignment, &labels)?,
        confusion: confusion_matrix(&km.assignment, &labels)?,
        medoids: km.medoids,
        cost: km.cost,
    })
}

/// Two-dimensional PCA projection for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding2d {
    pub coords: Vec<(f64, f64)>,
    /// Fraction of total variance along each axis.
    pub explained: [f64; 2],
}

/// Projects mean-centered features onto the top two principal axes. Each
/// axis is signed so its largest-magnitude loading is positive. A rank-1
/// input gets a zero second coordinate.
pub fn pca_embed_2d(features: &[Vec<f64>]) -> Result<Embedding2d> {
    let n = features.len();
    if n < 3 {
        return Err(Error::InvalidArgument(format!("PCA needs ≥ 3 items, got {n}")));
    }
    let d = features[0].len();
    if d == 0 || features.iter().any(|f| f.len() != d) {
        return Err(Error::Shape("features must share a nonzero width".into()));
    }
    let mut mean = vec![0.0; d];
    for f in features {
        for (m, x) in mean.iter_mut().zip(f) {
            *m += x / n as f64;
        }
    }
    let centered = DMatrix::from_fn(n, d, |i, j| features[i][j] - mean[j]);
    let cov = centered.transpose() * &centered / (n as f64 - 1.0);
    let eig = SymmetricEigen::new(cov);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let total: f64 = eig.eigenvalues.iter().map(|l| l.max(0.0)).sum();

    let mut axes = Vec::new();
    for &idx in order.iter().take(2.min(d)) {
        let mut axis: Vec<f64> = eig.eigenvectors.column(idx).iter().copied().collect();
        let lead = axis
            .iter()
            .copied()
            .fold(0.0f64, |m, x| if x.abs() > m.abs() { x } else { m });
        if lead < 0.0 {
            axis.iter_mut().for_each(|x| *x = -*x);
        }
        axes.push((axis, eig.eigenvalues[idx].max(0.0)));
    }
    let lambda1 = axes[0].1;
    let second_ok = axes.len() > 1 && axes[1].1 > 1e-12 * lambda1.max(f64::MIN_POSITIVE);
    if !second_ok {
        log::warn!("features have rank < 2; second PCA coordinate set to zero");
    }
    let project = |row: usize, axis: &[f64]| {
        (0..d).map(|j| centered[(row, j)] * axis[j]).sum::<f64>()
    };
    let coords = (0..n)
        .map(|i| {
            let x = project(i, &axes[0].0);
            let y = if second_ok { project(i, &axes[1].0) } else { 0.0 };
            (x, y)
        })
        .collect();
    let frac = |l: f64| if total > 0.0 { l / total } else { 0.0 };
    Ok(Embedding2d {
        coords,
        explained: [frac(lambda1), if second_ok { frac(axes[1].1) } else { 0.0 }],
    })
}
