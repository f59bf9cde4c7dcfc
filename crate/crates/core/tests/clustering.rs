use emgspeech::cluster::{
    cluster_accuracy, cluster_gestures, kmedoids, max_weight_matching, pca_embed_2d, GestureItem,
    GestureSet, Metric,
};
use emgspeech::spd::{CholFrame, CovFrame};
use emgspeech::Matrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn euclid(ps: &[Vec<f64>]) -> Matrix<f64> {
    Matrix::from_fn(ps.len(), ps.len(), |i, j| {
        ps[i].iter().zip(&ps[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
    })
}

fn cost_of(d: &Matrix<f64>, medoids: &[usize]) -> f64 {
    (0..d.rows())
        .map(|i| medoids.iter().map(|&m| d[(i, m)]).fold(f64::INFINITY, f64::min))
        .sum()
}

#[test]
fn planted_eight_matches_exhaustive_medoids() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for trial in 0..50 {
        let pts: Vec<Vec<f64>> = (0..8)
            .map(|i| {
                let c = if i < 4 { 0.0 } else { 3.0 };
                vec![c + rng.random::<f64>(), rng.random::<f64>()]
            })
            .collect();
        let d = euclid(&pts);
        let mut best = (f64::INFINITY, (0, 0));
        for a in 0..8 {
            for b in a + 1..8 {
                let c = cost_of(&d, &[a, b]);
                if c < best.0 {
                    best = (c, (a, b));
                }
            }
        }
        let km = kmedoids(&d, 2, trial, 100).unwrap();
        assert!((km.cost - best.0).abs() < 1e-12, "trial {trial}: {} vs {}", km.cost, best.0);
        let mut m = km.medoids.clone();
        m.sort();
        assert_eq!((m[0], m[1]), best.1);
        assert_eq!(cluster_accuracy(&km.assignment, &[0, 0, 0, 0, 1, 1, 1, 1]).unwrap(), 1.0);
    }
}

#[test]
fn confusion_mapping_matches_all_permutations() {
    let conf = [vec![5, 0, 0], vec![0, 4, 1], vec![0, 1, 4]];
    let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
    let brute = perms
        .iter()
        .map(|p| (0..3).map(|r| conf[r][p[r]]).sum::<usize>())
        .max()
        .unwrap();
    assert_eq!(brute, 13);

    let (mut assignment, mut labels) = (Vec::new(), Vec::new());
    for (r, row) in conf.iter().enumerate() {
        for (c, &n) in row.iter().enumerate() {
            assignment.extend(std::iter::repeat_n(r, n));
            labels.extend(std::iter::repeat_n(c, n));
        }
    }
    let acc = cluster_accuracy(&assignment, &labels).unwrap();
    assert!((acc - brute as f64 / 15.0).abs() < 1e-15);
}

#[test]
fn isotropic_cloud_splits_variance_evenly() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let pts: Vec<Vec<f64>> = (0..2000)
        .map(|_| vec![StandardNormal.sample(&mut rng), StandardNormal.sample(&mut rng)])
        .collect();
    let e = pca_embed_2d(&pts).unwrap();
    let share = e.explained[0] / (e.explained[0] + e.explained[1]);
    assert!((share - 0.5).abs() <= 0.1, "first axis share {share}");
}

#[test]
fn pca_sign_convention_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pts: Vec<Vec<f64>> = (0..50)
        .map(|_| vec![3.0 * rng.random::<f64>(), rng.random::<f64>(), 0.2 * rng.random::<f64>()])
        .collect();
    let a = pca_embed_2d(&pts).unwrap();
    let flipped: Vec<Vec<f64>> = pts.iter().map(|p| p.iter().map(|x| -x).collect()).collect();
    let b = pca_embed_2d(&flipped).unwrap();
    // negating the data negates scores, since loadings keep their sign
    for (p, q) in a.coords.iter().zip(&b.coords) {
        assert!((p.0 + q.0).abs() < 1e-9 && (p.1 + q.1).abs() < 1e-9);
    }
}

fn planted_spd_set(rng: &mut impl Rng, v: usize, k: usize, reps: usize, sep: f64, noise: f64) -> GestureSet {
    let dim = v * (v + 1) / 2;
    let centers: Vec<Vec<f64>> = (0..k)
        .map(|_| {
            let dir: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut *rng)).collect();
            let norm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
            dir.iter().map(|x| sep * x / norm).collect()
        })
        .collect();
    let mut items = Vec::new();
    for (label, c) in centers.iter().enumerate() {
        for _ in 0..reps {
            let coords: Vec<f64> = c
                .iter()
                .map(|x| {
                    let z: f64 = StandardNormal.sample(&mut *rng);
                    x + noise / (dim as f64).sqrt() * z
                })
                .collect();
            let l = CholFrame::from_log_coords(v, &coords).unwrap();
            items.push(GestureItem {
                cov: CovFrame::from_matrix(l.reconstruct()).unwrap(),
                label,
            });
        }
    }
    GestureSet::new(items, k).unwrap()
}

#[test]
fn geodesic_recovers_planted_spd_clusters() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for v in [4, 8] {
        // random directions of norm 10 are pairwise ≈ 14 apart, well above 10× noise
        let set = planted_spd_set(&mut rng, v, 5, 10, 10.0, 1.0);
        let report = cluster_gestures(&set, Metric::Geodesic, 0, 100).unwrap();
        assert!(report.accuracy >= 0.95, "V={v}: {}", report.accuracy);
    }
}

#[test]
fn gesture_set_rejects_singletons_and_mixed_dims() {
    let eye = |v| CovFrame::from_matrix(Matrix::<f64>::identity(v)).unwrap();
    let items = vec![
        GestureItem { cov: eye(3), label: 0 },
        GestureItem { cov: eye(3), label: 0 },
        GestureItem { cov: eye(3), label: 1 },
    ];
    assert!(GestureSet::new(items.clone(), 2).is_err());
    let mut mixed = items;
    mixed.push(GestureItem { cov: eye(4), label: 1 });
    assert!(GestureSet::new(mixed, 2).is_err());
}

proptest! {
    #[test]
    fn swap_cost_never_increases(
        pts in prop::collection::vec(prop::collection::vec(-5.0f64..5.0, 2), 6..25),
        k in 1usize..5,
    ) {
        let d = euclid(&pts);
        let km = kmedoids(&d, k.min(pts.len()), 0, 100).unwrap();
        for w in km.cost_trace.windows(2) {
            prop_assert!(w[1] <= w[0]);
        }
        prop_assert!((cost_of(&d, &km.medoids) - km.cost).abs() < 1e-9);
    }

    #[test]
    fn accuracy_is_invariant_to_cluster_relabeling(
        pairs in prop::collection::vec((0usize..4, 0usize..4), 1..40),
        perm_seed in any::<u64>(),
    ) {
        let (assignment, labels): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let mut perm: Vec<usize> = (0..4).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(perm_seed);
        for i in (1..4).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let relabeled: Vec<usize> = assignment.iter().map(|&a| perm[a]).collect();
        prop_assert_eq!(
            cluster_accuracy(&assignment, &labels).unwrap(),
            cluster_accuracy(&relabeled, &labels).unwrap()
        );
    }

    #[test]
    fn hungarian_matches_brute_force(w in prop::collection::vec(prop::collection::vec(0usize..20, 4), 4)) {
        let m = max_weight_matching(&w);
        let got: usize = m.iter().enumerate().map(|(r, &c)| w[r][c]).sum();
        let mut best = 0;
        let mut p = [0, 1, 2, 3];
        heap_permute(&mut p, 4, &mut |p| {
            best = best.max((0..4).map(|r| w[r][p[r]]).sum::<usize>());
        });
        prop_assert_eq!(got, best);
    }
}

fn heap_permute(p: &mut [usize; 4], k: usize, f: &mut impl FnMut(&[usize; 4])) {
    if k == 1 {
        f(p);
        return;
    }
    for i in 0..k {
        heap_permute(p, k - 1, f);
        if k.is_multiple_of(2) {
            p.swap(i, k - 1);
        } else {
            p.swap(0, k - 1);
        }
    }
}
