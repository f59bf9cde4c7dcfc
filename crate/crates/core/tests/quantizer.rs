use emgspeech::quantize::{fit_codebook, quantize, Codebook};
use emgspeech::Matrix;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

#[test]
fn two_blobs_get_one_center_each() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let radius = 0.5;
    let noise = Normal::new(0.0, radius / 3.0).unwrap();
    let blob: [[f64; 3]; 2] = [[-5.0, 2.0, 0.0], [5.0, -1.0, 3.0]];
    let x = Matrix::from_fn(400, 3, |i, j| blob[i % 2][j] + noise.sample(&mut rng));
    for seed in 0..10 {
        let fit = fit_codebook(&x, 2, seed, 100, 1e-6).unwrap();
        for b in blob {
            let near = (0..2)
                .map(|c| {
                    fit.codebook.centers.row(c).iter().zip(&b).map(|(p, q)| (p - q).powi(2)).sum::<f64>().sqrt()
                })
                .fold(f64::INFINITY, f64::min);
            assert!(near < radius, "seed {seed}: center {near} from blob");
        }
    }
}

#[test]
fn codebook_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let centers: Matrix<f32> = Matrix::from_fn(5, 3, |i, j| (i * 3 + j) as f32 * 0.25);
    let cb = Codebook::new(centers, 77).unwrap();
    let path = dir.path().join("units.codebook");
    cb.save(&path).unwrap();
    assert_eq!(Codebook::<f32>::load(&path).unwrap(), cb);
}

#[test]
fn f32_and_f64_agree() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let x64: Matrix<f64> = Matrix::from_fn(300, 4, |_, _| (normal.sample(&mut rng) as f32) as f64);
    let x32: Matrix<f32> = x64.cast();
    let a = fit_codebook(&x64, 6, 1, 100, 1e-6).unwrap();
    let b = fit_codebook(&x32, 6, 1, 100, 1e-6).unwrap();
    assert_eq!(a.inertia, b.inertia);
    assert_eq!(
        quantize(&a.codebook, &x64, false).unwrap().symbols(),
        quantize(&b.codebook, &x32, false).unwrap().symbols()
    );
}

fn frames() -> impl Strategy<Value = Matrix<f64>> {
    (6usize..60).prop_flat_map(|n| {
        prop::collection::vec(-10.0f64..10.0, n * 2).prop_map(move |v| Matrix::from_vec(n, 2, v).unwrap())
    })
}

proptest! {
    #[test]
    fn lloyd_inertia_never_increases(x in frames(), k in 1usize..6, seed in any::<u64>()) {
        if let Ok(fit) = fit_codebook(&x, k, seed, 100, 1e-6) {
            for w in fit.inertia.windows(2) {
                prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn quantize_is_permutation_equivariant(x in frames(), seed in any::<u64>()) {
        let Ok(fit) = fit_codebook(&x, 4, seed, 100, 1e-6) else { return Ok(()) };
        let ids = quantize(&fit.codebook, &x, false).unwrap();
        let perm = [2usize, 0, 3, 1];
        let permuted = Codebook::new(fit.codebook.centers.select_rows(&perm), 0).unwrap();
        let pids = quantize(&permuted, &x, false).unwrap();
        for (t, (&a, &b)) in ids.symbols().iter().zip(pids.symbols()).enumerate() {
            // equal distances break ties by id, which the permutation reorders
            let tied = {
                let row = x.row(t);
                let d = |c: usize| fit.codebook.centers.row(c).iter().zip(row).map(|(p, q)| (p - q).powi(2)).sum::<f64>();
                (0..4).filter(|&c| d(c) == d(a as usize)).count() > 1
            };
            if !tied {
                prop_assert_eq!(perm[b as usize], a as usize);
            }
        }
    }
}
