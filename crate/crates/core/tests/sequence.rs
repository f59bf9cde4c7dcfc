use emgspeech::io::{LabelSequence, Vocab, VocabKind};
use emgspeech::nn::greedy_decode;
use proptest::prelude::*;
use emgspeech::nn::{
    ctc_loss, decode_checkpoint, encode_checkpoint, train, ChannelLayout, CheckpointHeader,
    Example, TdsConfig, TdsModel, TrainConfig, SHIFTS,
};
use emgspeech::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn random_log_probs(rng: &mut impl Rng, t: usize, s: usize) -> Matrix<f64> {
    let mut m = Matrix::from_fn(t, s, |_, _| rng.random::<f64>() + 1e-3);
    for r in 0..t {
        let sum: f64 = m.row(r).iter().sum();
        m.row_mut(r).iter_mut().for_each(|v| *v = (*v / sum).ln());
    }
    m
}

fn collapse(path: &[usize]) -> Vec<usize> {
    let mut out = Vec::new();
    let mut prev = None;
    for &c in path {
        if Some(c) != prev && c != 0 {
            out.push(c);
        }
        prev = Some(c);
    }
    out
}

/// Sum of path probabilities over every alignment that collapses to `target`.
fn brute_force_prob(lp: &Matrix<f64>, target: &[usize]) -> f64 {
    let (t, s) = lp.shape();
    let mut total = 0.0;
    let mut path = vec![0usize; t];
    for code in 0..s.pow(t as u32) {
        let mut c = code;
        for p in path.iter_mut() {
            *p = c % s;
            c /= s;
        }
        if collapse(&path) == target {
            total += (0..t).map(|i| lp[(i, path[i])]).sum::<f64>().exp();
        }
    }
    total
}

#[test]
fn ctc_matches_exhaustive_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let mut feasible = 0;
    for _ in 0..500 {
        let t = rng.random_range(1..=6);
        let vocab = rng.random_range(1..=3);
        let u = rng.random_range(0..=3);
        let target: Vec<usize> = (0..u).map(|_| rng.random_range(1..=vocab)).collect();
        let lp = random_log_probs(&mut rng, t, vocab + 1);
        let p = brute_force_prob(&lp, &target);
        let out = ctc_loss(&lp, &target);
        if p == 0.0 {
            assert!(!out.feasible && out.loss.is_infinite(), "T={t} target={target:?}");
        } else {
            feasible += 1;
            assert!((out.loss - -p.ln()).abs() < 1e-9, "{} vs {}", out.loss, -p.ln());
        }
    }
    assert!(feasible > 300);
}

#[test]
fn ctc_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let h = 1e-5;
    for _ in 0..100 {
        let t = rng.random_range(2..=8);
        let s = rng.random_range(2..=4);
        let u = rng.random_range(1..=3.min(t / 2));
        let target: Vec<usize> = (0..u).map(|_| rng.random_range(1..s)).collect();
        let lp = random_log_probs(&mut rng, t, s);
        let out = ctc_loss(&lp, &target);
        if !out.feasible {
            continue;
        }
        for i in 0..t {
            for k in 0..s {
                let mut plus = lp.clone();
                plus[(i, k)] += h;
                let mut minus = lp.clone();
                minus[(i, k)] -= h;
                let num = (ctc_loss(&plus, &target).loss - ctc_loss(&minus, &target).loss) / (2.0 * h);
                let ana = out.grad[(i, k)];
                assert!((ana - num).abs() <= 1e-4 * num.abs() + 1e-9, "({i},{k}): {ana} vs {num}");
            }
        }
    }
}

fn tiny_config() -> TdsConfig {
    TdsConfig {
        hidden: 8,
        blocks: 1,
        kernel: 13,
        classes: 4,
        layout: ChannelLayout::Diag { electrodes: 5 },
    }
}

fn gaussian(rng: &mut impl Rng, rows: usize, cols: usize) -> Matrix<f64> {
    Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

#[test]
fn model_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let mut model = TdsModel::<f64>::new(tiny_config(), 3).unwrap();
    // nonzero biases and gains so every parameter has a generic gradient
    for p in model.params.iter_mut() {
        *p += 0.1 * rng.random::<f64>();
    }
    let x = gaussian(&mut rng, 12, 5);
    let target = [1, 3, 2, 2];
    let (out, grad) = model.loss_and_grad(&x, &target).unwrap();
    assert!(out.feasible);
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (i, &g) in grad.iter().enumerate() {
        let mut m = model.clone();
        m.params[i] += h;
        let lp = m.loss_and_grad(&x, &target).unwrap().0.loss;
        m.params[i] -= 2.0 * h;
        let lm = m.loss_and_grad(&x, &target).unwrap().0.loss;
        let num = (lp - lm) / (2.0 * h);
        let rel = (g - num).abs() / g.abs().max(num.abs()).max(1e-4);
        worst = worst.max(rel);
        assert!(rel <= 1e-3, "param {i}: {g} vs {num}");
    }
    assert!(worst < 1e-3);
}

fn default_model(seed: u64) -> TdsModel<f32> {
    let cfg = TdsConfig {
        hidden: 32,
        ..TdsConfig::new(ChannelLayout::Diag { electrodes: 6 }, 7)
    };
    TdsModel::new(cfg, seed).unwrap()
}

#[test]
fn outputs_are_causal() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = default_model(1);
    let x: Matrix<f32> = gaussian(&mut rng, 30, 6).cast();
    let base = model.forward(&x).unwrap();
    let mut y = x.clone();
    y.row_mut(29).iter_mut().for_each(|v| *v += 3.0);
    let out = model.forward(&y).unwrap();
    for t in 0..29 {
        assert_eq!(base.row(t), out.row(t), "frame {t}");
    }
    assert_ne!(base.row(29), out.row(29));
}

#[test]
fn receptive_field_by_perturbation() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let model = default_model(2);
    let x: Matrix<f32> = gaussian(&mut rng, 120, 6).cast();
    let base = model.forward(&x).unwrap();
    let t0 = 20;
    let mut y = x.clone();
    y.row_mut(t0).iter_mut().for_each(|v| *v += 2.0);
    let out = model.forward(&y).unwrap();
    let changed: Vec<usize> = (0..120).filter(|&t| base.row(t) != out.row(t)).collect();
    assert_eq!(changed.first(), Some(&t0));
    let rf = changed.last().unwrap() - t0 + 1;
    assert_eq!(rf, model.config.receptive_field());
    assert!(rf <= 50);
}

#[test]
fn log_softmax_rows_normalize() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let model = default_model(3);
    let x: Matrix<f32> = Matrix::from_fn(40, 6, |_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        10.0 * z as f32
    });
    let lp = model.forward(&x).unwrap();
    for row in lp.iter_rows() {
        let lse = row.iter().map(|&v| (v as f64).exp()).sum::<f64>().ln();
        assert!(lse.abs() <= 1e-5, "{lse}");
    }
}

fn front_only(v: usize) -> TdsModel<f64> {
    let cfg = TdsConfig {
        hidden: v,
        blocks: 0,
        kernel: 13,
        classes: 2,
        layout: ChannelLayout::Diag { electrodes: v },
    };
    TdsModel::new(cfg, 5).unwrap()
}

#[test]
fn rotation_identity_on_constant_input() {
    let v = 4;
    let mut m = front_only(v);
    let o = m.offsets().clone();
    m.params[o.rot_w.clone()].iter_mut().for_each(|w| *w = 0.0);
    for i in 0..v {
        m.params[o.rot_w.start + i * v + i] = 1.0;
    }
    m.params[o.rot_b.clone()].iter_mut().for_each(|b| *b = 0.0);
    let x = Matrix::from_fn(3, v, |t, _| [-1.0, 0.5, 2.0][t]);
    let z = m.rotation_encode(&x).unwrap();
    for t in 0..3 {
        for k in 0..v {
            assert!((z[(t, k)] - x[(t, k)].max(0.0)).abs() < 1e-15);
        }
    }
}

#[test]
fn rotation_is_the_mean_of_three_branches() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let v = 5;
    let m = front_only(v);
    let o = m.offsets().clone();
    let w = &m.params[o.rot_w.clone()];
    let b = &m.params[o.rot_b.clone()];
    let x = gaussian(&mut rng, 4, v);
    let z = m.rotation_encode(&x).unwrap();
    for t in 0..4 {
        for j in 0..v {
            let mut acc = 0.0;
            for s in SHIFTS {
                // shifted[e] = x[e - s mod V]
                let shifted: Vec<f64> = (0..v).map(|e| x[(t, (e as isize - s).rem_euclid(v as isize) as usize)]).collect();
                let a: f64 = b[j] + (0..v).map(|i| w[j * v + i] * shifted[i]).sum::<f64>();
                acc += a.max(0.0);
            }
            assert!((z[(t, j)] - acc / 3.0).abs() < 1e-12);
        }
    }
}

#[test]
fn rotation_invariance_is_only_approximate() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let v = 6;
    let m = front_only(v);
    let mut found = false;
    for _ in 0..20 {
        let x = gaussian(&mut rng, 1, v);
        let shifted = Matrix::from_fn(1, v, |_, e| x[(0, (e + v - 1) % v)]);
        let a = m.rotation_encode(&x).unwrap();
        let b = m.rotation_encode(&shifted).unwrap();
        if a.as_slice().iter().zip(b.as_slice()).any(|(p, q)| (p - q).abs() > 1e-6) {
            found = true;
            break;
        }
    }
    assert!(found, "a +1 shift left every output unchanged");
}

#[test]
fn full_cov_rotation_shifts_rows_and_columns() {
    let v = 3;
    let cfg = TdsConfig {
        hidden: 4,
        blocks: 0,
        kernel: 13,
        classes: 2,
        layout: ChannelLayout::FullCov { electrodes: v },
    };
    let m = TdsModel::<f64>::new(cfg, 1).unwrap();
    // Shifting the electrodes of a covariance by all V positions is the
    // identity, and the shift set {−1,0,1} at V = 3 is a full orbit, so the
    // encoding is exactly invariant here.
    let x = Matrix::from_fn(1, 9, |_, k| (k as f64 * 0.37).sin());
    let shifted = Matrix::from_fn(1, 9, |_, k| {
        let (i, j) = (k / 3, k % 3);
        x[(0, ((i + 2) % 3) * 3 + (j + 2) % 3)]
    });
    let a = m.rotation_encode(&x).unwrap();
    let b = m.rotation_encode(&shifted).unwrap();
    for (p, q) in a.as_slice().iter().zip(b.as_slice()) {
        assert!((p - q).abs() < 1e-12);
    }
}

fn toy_examples(rng: &mut impl Rng, n: usize, vocab: usize) -> Vec<Example<f32>> {
    let templates = gaussian(rng, vocab, 6);
    (0..n)
        .map(|i| {
            let labels: Vec<u32> = (0..4).map(|_| rng.random_range(0..vocab as u32)).collect();
            let mut rows = Vec::new();
            for &l in &labels {
                for _ in 0..4 {
                    rows.push(templates.row(l as usize).iter().map(|&v| v as f32).collect::<Vec<_>>());
                }
            }
            Example {
                id: format!("u{i}"),
                features: Matrix::from_rows(&rows).unwrap(),
                target: LabelSequence::with_size(VocabKind::Units, vocab, labels).unwrap(),
            }
        })
        .collect()
}

#[test]
fn zero_learning_rate_keeps_parameters() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let data = toy_examples(&mut rng, 6, 7);
    let model = default_model(4);
    let cfg = TrainConfig {
        lr: 0.0,
        max_epochs: 3,
        batch_size: 2,
        ..Default::default()
    };
    let out = train(model.clone(), &data[..4], &data[4..], &cfg).unwrap();
    let bits = |m: &TdsModel<f32>| m.params.iter().map(|p| p.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&out.best), bits(&model));
}

#[test]
fn training_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let data = toy_examples(&mut rng, 8, 7);
    let cfg = TrainConfig {
        max_epochs: 4,
        batch_size: 3,
        seed: 9,
        ..Default::default()
    };
    let a = train(default_model(5), &data[..6], &data[6..], &cfg).unwrap();
    let b = train(default_model(5), &data[..6], &data[6..], &cfg).unwrap();
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.best.params, b.best.params);
}

#[test]
fn checkpoint_round_trip() {
    let model = default_model(6);
    let vocab = Vocab::units(7);
    let header = CheckpointHeader::new(&model, &vocab, 6, 12);
    let bytes = encode_checkpoint(&model, &header).unwrap();
    let (back, h2) = decode_checkpoint::<f32>(&bytes).unwrap();
    assert_eq!(back, model);
    assert_eq!(h2, header);
    h2.check_vocab(&vocab).unwrap();
    assert!(h2.check_vocab(&Vocab::units(8)).is_err());
    assert!(decode_checkpoint::<f32>(&bytes[..bytes.len() - 4]).is_err());
}

#[test]
fn zero_weights_give_uniform_rows() {
    let mut model = default_model(4);
    model.params.iter_mut().for_each(|p| *p = 0.0);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x: Matrix<f32> = gaussian(&mut rng, 25, 6).cast();
    let lp = model.forward(&x).unwrap();
    let uniform = -(model.config.classes as f32).ln();
    for v in lp.as_slice() {
        assert!((v - uniform).abs() < 1e-6, "{v}");
    }
}

/// Log-probabilities whose argmax follows `path`.
fn peaked(path: &[usize], classes: usize) -> Matrix<f64> {
    Matrix::from_fn(path.len(), classes, |t, k| if k == path[t] { -0.1 } else { -3.0 })
}

proptest! {
    #[test]
    fn greedy_decode_reconstructs_any_spelled_sequence(
        labels in prop::collection::vec(0u32..5, 0..8),
        runs in prop::collection::vec(1usize..4, 8),
        blanks in prop::collection::vec(0usize..3, 9),
    ) {
        let mut path = vec![0; blanks[0]];
        for (i, &l) in labels.iter().enumerate() {
            // a blank must separate a repeated label from its predecessor
            if i > 0 && labels[i - 1] == l && blanks[i] == 0 {
                path.push(0);
            }
            path.extend(std::iter::repeat_n(l as usize + 1, runs[i]));
            path.extend(std::iter::repeat_n(0, blanks[i + 1]));
        }
        prop_assume!(!path.is_empty());
        let decoded = greedy_decode(&peaked(&path, 6), VocabKind::Units).unwrap();
        prop_assert_eq!(decoded.symbols(), &labels[..]);
    }
}
