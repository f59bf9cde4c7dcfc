//! Seeded synthetic data with known ground truth: SPD gesture clusters,
//! planted linear feature maps, and label→frame sequence tasks.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::{GestureItem, GestureSet};
use crate::error::{Error, Result};
use crate::io::{
    save_feature_sequence, save_recording, FeatureKind, FeatureSequence, GestureManifest,
    GestureSubject, LabelSequence, Manifest, Recording, Split, Utterance, VocabKind,
};
use crate::matrix::Matrix;
use crate::spd::{CholFrame, CovFrame};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSpec {
    pub seed: u64,
    pub electrodes: usize,
    /// Gesture classes.
    pub classes: usize,
    pub n_per_class: usize,
    /// Expected geodesic distance between gesture centers.
    pub sep: f64,
    /// Expected log-Cholesky norm of a per-item perturbation, or per-frame
    /// feature noise standard deviation for sequence tasks.
    pub noise: f64,
    /// Frames emitted per label, inclusive range.
    pub frames_per_label: (usize, usize),
    /// Labels per utterance, inclusive range.
    pub labels_per_utterance: (usize, usize),
    pub vocab: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
    /// Replace each target with an independent sequence of equal length.
    pub shuffled: bool,
    /// Allow a label to follow itself. Without noise, a repeated label is
    /// indistinguishable from one long segment, so this defaults to off.
    pub repeats: bool,
    /// Frames for linear-pair generation.
    pub frames: usize,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            electrodes: 8,
            classes: 13,
            n_per_class: 10,
            sep: 10.0,
            noise: 1.0,
            frames_per_label: (3, 6),
            labels_per_utterance: (4, 8),
            vocab: 10,
            train: 20,
            val: 5,
            test: 5,
            shuffled: false,
            repeats: false,
            frames: 50_000,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(format!("synth spec: {m}")));
        if !(self.sep > 0.0 && self.sep.is_finite()) {
            return bad("sep must be > 0");
        }
        if !(self.noise >= 0.0 && self.noise.is_finite()) {
            return bad("noise must be ≥ 0");
        }
        if self.electrodes == 0 || self.classes == 0 || self.vocab == 0 {
            return bad("electrodes, classes and vocab must be ≥ 1");
        }
        let (f0, f1) = self.frames_per_label;
        let (l0, l1) = self.labels_per_utterance;
        if f0 == 0 || f0 > f1 || l0 == 0 || l0 > l1 {
            return bad("ranges must be non-empty and start at ≥ 1");
        }
        Ok(())
    }
}

const STREAM_GESTURE: u64 = 1;
const STREAM_LINEAR: u64 = 2;
const STREAM_SEQ: u64 = 3;

/// Independent generator for item `index` of `stream` under `seed`.
pub fn derived_rng(seed: u64, stream: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let base: u64 = rng.random();
    ChaCha8Rng::seed_from_u64(splitmix(base ^ splitmix(index)))
}

fn splitmix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn normal(rng: &mut impl Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Log-Cholesky coordinates of a random center: diagonal in [0.5, 2]
/// (log-uniform), off-diagonals Gaussian with a variance chosen so that two
/// independent centers are `sep` apart in expectation.
fn random_center(rng: &mut impl Rng, v: usize, sep: f64) -> Vec<f64> {
    let d_off = v * (v - 1) / 2;
    let width = 2.0 * std::f64::consts::LN_2;
    let diag_part = v as f64 * width * width / 6.0;
    let off_sd = if d_off > 0 {
        ((sep * sep - diag_part).max(0.0) / (2.0 * d_off as f64)).sqrt()
    } else {
        0.0
    };
    let log_diag = Uniform::new_inclusive(-std::f64::consts::LN_2, std::f64::consts::LN_2)
        .expect("valid range");
    let mut coords: Vec<f64> = (0..d_off).map(|_| off_sd * normal(rng)).collect();
    coords.extend((0..v).map(|_| log_diag.sample(rng)));
    coords
}

/// Planted SPD gesture classes perturbed in log-Cholesky coordinates, so
/// every item is SPD by construction.
pub fn gen_gesture_set(spec: &SynthSpec) -> Result<GestureSet> {
    spec.validate()?;
    let v = spec.electrodes;
    let dim = v * (v + 1) / 2;
    let mut rng = derived_rng(spec.seed, STREAM_GESTURE, 0);
    let centers: Vec<Vec<f64>> = (0..spec.classes).map(|_| random_center(&mut rng, v, spec.sep)).collect();
    let per_coord = spec.noise / (dim as f64).sqrt();
    let items = (0..spec.classes * spec.n_per_class)
        .into_par_iter()
        .map(|i| {
            let label = i / spec.n_per_class;
            let mut rng = derived_rng(spec.seed, STREAM_GESTURE, 1 + i as u64);
            let coords: Vec<f64> = centers[label]
                .iter()
                .map(|c| c + per_coord * normal(&mut rng))
                .collect();
            let l = CholFrame::from_log_coords(v, &coords)?;
            Ok(GestureItem {
                cov: CovFrame::from_matrix(l.reconstruct())?,
                label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    GestureSet::new(items, spec.classes)
}

/// A `V × τ` signal whose sample covariance `(1/τ) E Eᵀ` equals `cov`:
/// the Cholesky factor applied to rows orthonormalized to norm √τ.
pub fn signal_with_covariance(cov: &CovFrame<f64>, tau: usize, rng: &mut impl Rng) -> Result<Matrix<f64>> {
    let v = cov.dim();
    if tau < v {
        return Err(Error::InvalidArgument(format!("need τ ≥ V, got τ={tau}, V={v}")));
    }
    let mut z = Matrix::from_fn(v, tau, |_, _| normal(rng));
    for i in 0..v {
        for j in 0..i {
            let proj = crate::matrix::dot(z.row(i), z.row(j));
            let rj = z.row(j).to_vec();
            for (a, b) in z.row_mut(i).iter_mut().zip(&rj) {
                *a -= proj * b;
            }
        }
        let norm = crate::matrix::dot(z.row(i), z.row(i)).sqrt();
        if norm < 1e-12 {
            return Err(Error::Degenerate("orthonormalization collapsed".into()));
        }
        z.row_mut(i).iter_mut().for_each(|a| *a /= norm);
    }
    z.scale((tau as f64).sqrt());
    crate::spd::cholesky(cov)?.lower().matmul(&z)
}

/// Samples of one gesture repetition (1.5 s at 5 kHz).
pub const GESTURE_SAMPLES: usize = 7500;

/// Writes each gesture item as a reference-free recording whose covariance
/// is the item's, plus a gesture manifest with one subject.
pub fn write_gesture_set(set: &GestureSet, spec: &SynthSpec, dir: &Path) -> Result<GestureManifest> {
    std::fs::create_dir_all(dir.join("gestures"))?;
    let items = set
        .items
        .par_iter()
        .enumerate()
        .map(|(i, it)| {
            let mut rng = derived_rng(spec.seed, STREAM_GESTURE, (1 << 40) | i as u64);
            let e = signal_with_covariance(&it.cov, GESTURE_SAMPLES, &mut rng)?;
            let mut rec = Recording::with_reference_last(e.cast(), crate::io::DEFAULT_FS)?;
            rec.reference_channel = None;
            let rel = format!("gestures/g{:04}.emg", i);
            save_recording(&rec, &dir.join(&rel))?;
            Ok(crate::io::GestureItem { path: rel, label: it.label })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = GestureManifest {
        version: crate::io::MANIFEST_VERSION,
        classes: set.k,
        subjects: vec![GestureSubject {
            id: format!("synth-{}", spec.seed),
            items,
        }],
        root: dir.to_path_buf(),
    };
    manifest.save(&dir.join("gestures.json"))?;
    Ok(manifest)
}

/// `Y = W* X + b* + noise` with known ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearPair {
    pub x: Matrix<f64>,
    pub y: Matrix<f64>,
    pub w: Matrix<f64>,
    pub b: Vec<f64>,
}

/// Correlation between a signal and signal + independent noise at `snr`.
pub fn r_for_snr(snr: f64) -> f64 {
    if snr.is_infinite() {
        1.0
    } else {
        (snr / (1.0 + snr)).sqrt()
    }
}

/// Inverse of [`r_for_snr`].
pub fn snr_for_r(r: f64) -> f64 {
    r * r / (1.0 - r * r)
}

/// Standard-normal inputs; per output dimension, noise variance is the
/// dimension's signal variance over `snr`, so each dimension's correlation
/// with its noiseless signal is exactly [`r_for_snr`] in expectation.
/// A zero map gets unit-variance noise.
pub fn gen_linear_pair(spec: &SynthSpec, d_in: usize, d_out: usize, snr: f64) -> Result<LinearPair> {
    spec.validate()?;
    if !(snr > 0.0) {
        return Err(Error::InvalidArgument(format!("snr must be > 0, got {snr}")));
    }
    let mut rng = derived_rng(spec.seed, STREAM_LINEAR, 0);
    let scale = 1.0 / (d_in as f64).sqrt();
    let w = Matrix::from_fn(d_out, d_in, |_, _| scale * normal(&mut rng));
    let b: Vec<f64> = (0..d_out).map(|_| normal(&mut rng)).collect();
    Ok(linear_pair_with(spec, w, b, snr))
}

/// As [`gen_linear_pair`] with a given map.
pub fn linear_pair_with(spec: &SynthSpec, w: Matrix<f64>, b: Vec<f64>, snr: f64) -> LinearPair {
    let (d_out, d_in) = w.shape();
    let noise_sd: Vec<f64> = (0..d_out)
        .map(|o| {
            let signal_var: f64 = w.row(o).iter().map(|x| x * x).sum();
            if signal_var == 0.0 {
                1.0
            } else if snr.is_infinite() {
                0.0
            } else {
                (signal_var / snr).sqrt()
            }
        })
        .collect();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..spec.frames)
        .into_par_iter()
        .map(|t| {
            let mut rng = derived_rng(spec.seed, STREAM_LINEAR, 1 + t as u64);
            let x: Vec<f64> = (0..d_in).map(|_| normal(&mut rng)).collect();
            let y = (0..d_out)
                .map(|o| b[o] + crate::matrix::dot(w.row(o), &x) + noise_sd[o] * normal(&mut rng))
                .collect();
            (x, y)
        })
        .collect();
    let (xs, ys): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
    LinearPair {
        x: Matrix::from_vec(spec.frames, d_in, xs.concat()).expect("shape"),
        y: Matrix::from_vec(spec.frames, d_out, ys.concat()).expect("shape"),
        w,
        b,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeqUtterance {
    pub id: String,
    pub split: Split,
    pub features: FeatureSequence,
    pub labels: LabelSequence,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeqTask {
    pub spec: SynthSpec,
    /// One feature template per label, `vocab × V`.
    pub templates: Matrix<f64>,
    pub utterances: Vec<SeqUtterance>,
}

impl SeqTask {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &SeqUtterance> {
        self.utterances.iter().filter(move |u| u.split == split)
    }
}

/// Without repeats a one-symbol vocabulary only admits length-1 sequences.
fn random_labels(rng: &mut impl Rng, spec: &SynthSpec, len: usize) -> Vec<u32> {
    let k = spec.vocab as u32;
    if spec.repeats {
        return (0..len).map(|_| rng.random_range(0..k)).collect();
    }
    let len = if k == 1 { 1 } else { len };
    let mut out: Vec<u32> = Vec::with_capacity(len);
    for _ in 0..len {
        let l = match out.last() {
            None => rng.random_range(0..k),
            Some(&prev) => {
                let l = rng.random_range(0..k - 1);
                if l >= prev { l + 1 } else { l }
            }
        };
        out.push(l);
    }
    out
}

/// Each label emits 3–6 (configurable) frames of its template plus Gaussian
/// noise, as diagonal-power features over `electrodes`. Alignments are not
/// kept. With `shuffled`, targets are fresh sequences of the same length,
/// independent of the features.
pub fn gen_seq_task(spec: &SynthSpec) -> Result<SeqTask> {
    spec.validate()?;
    let v = spec.electrodes;
    let mut rng = derived_rng(spec.seed, STREAM_SEQ, 0);
    // positive, power-like templates
    let templates = Matrix::from_fn(spec.vocab, v, |_, _| normal(&mut rng).exp());
    let splits: Vec<Split> = [(Split::Train, spec.train), (Split::Val, spec.val), (Split::Test, spec.test)]
        .iter()
        .flat_map(|&(s, n)| std::iter::repeat_n(s, n))
        .collect();
    let utterances = splits
        .par_iter()
        .enumerate()
        .map(|(i, &split)| {
            let mut rng = derived_rng(spec.seed, STREAM_SEQ, 1 + i as u64);
            let (l0, l1) = spec.labels_per_utterance;
            let len = rng.random_range(l0..=l1);
            let source = random_labels(&mut rng, spec, len);
            let len = source.len();
            let mut frames = Vec::new();
            let (f0, f1) = spec.frames_per_label;
            for &s in &source {
                for _ in 0..rng.random_range(f0..=f1) {
                    frames.extend(
                        templates
                            .row(s as usize)
                            .iter()
                            .map(|&m| (m + spec.noise * normal(&mut rng)) as f32),
                    );
                }
            }
            let t = frames.len() / v;
            let target = if spec.shuffled {
                random_labels(&mut rng, spec, len)
            } else {
                source
            };
            Ok(SeqUtterance {
                id: format!("synth{i:04}"),
                split,
                features: FeatureSequence::new(FeatureKind::DiagE, Matrix::from_vec(t, v, frames)?, v, 0)?,
                labels: LabelSequence::with_size(VocabKind::Units, spec.vocab, target)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SeqTask {
        spec: spec.clone(),
        templates,
        utterances,
    })
}

/// Writes feature containers and a manifest (`manifest.json`) under `dir`.
pub fn write_seq_task(task: &SeqTask, dir: &Path) -> Result<Manifest> {
    std::fs::create_dir_all(dir.join("features"))?;
    let mut manifest = Manifest::new(task.spec.electrodes);
    manifest.unit_count = task.spec.vocab;
    manifest.root = dir.to_path_buf();
    for u in &task.utterances {
        let rel = format!("features/{}.diag-e", u.id);
        save_feature_sequence(&u.features, &dir.join(&rel))?;
        let mut entry = Utterance::new(u.id.clone(), u.split);
        entry.features.insert(FeatureKind::DiagE.name().to_string(), rel);
        entry.units = Some(u.labels.symbols().to_vec());
        manifest.utterances.push(entry);
    }
    manifest.save(&dir.join("manifest.json"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spd::covariance;

    #[test]
    fn derived_streams_differ() {
        let a: u64 = derived_rng(1, 1, 0).random();
        let b: u64 = derived_rng(1, 1, 1).random();
        let c: u64 = derived_rng(1, 2, 0).random();
        assert!(a != b && a != c && b != c);
        assert_eq!(a, derived_rng(1, 1, 0).random::<u64>());
    }

    #[test]
    fn spec_validation() {
        assert!(SynthSpec { sep: 0.0, ..Default::default() }.validate().is_err());
        assert!(SynthSpec { noise: -1.0, ..Default::default() }.validate().is_err());
        assert!(SynthSpec::default().validate().is_ok());
    }

    #[test]
    fn planted_signal_covariance_is_exact() {
        let spec = SynthSpec { electrodes: 5, classes: 2, n_per_class: 2, ..Default::default() };
        let set = gen_gesture_set(&spec).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let target = &set.items[0].cov;
        let e = signal_with_covariance(target, 300, &mut rng).unwrap();
        let got = covariance(&e, 0.0).unwrap();
        for (a, b) in got.matrix().as_slice().iter().zip(target.matrix().as_slice()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn r_snr_round_trip() {
        assert!((r_for_snr(snr_for_r(0.85)) - 0.85).abs() < 1e-12);
        assert!((snr_for_r(0.85) - 0.7225 / 0.2775).abs() < 1e-12);
        assert_eq!(r_for_snr(f64::INFINITY), 1.0);
    }

    #[test]
    fn seq_task_shapes() {
        let spec = SynthSpec { train: 3, val: 1, test: 1, ..Default::default() };
        let task = gen_seq_task(&spec).unwrap();
        assert_eq!(task.utterances.len(), 5);
        for u in &task.utterances {
            let n = u.labels.len();
            assert!((4..=8).contains(&n));
            assert!(u.features.len() >= 3 * n && u.features.len() <= 6 * n);
            assert_eq!(u.features.dim(), 8);
        }
    }
}
