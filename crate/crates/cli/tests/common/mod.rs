#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use emgspeech::io::{save_recording, save_waveform, Manifest, Recording, Split, Utterance, DEFAULT_FS};
use emgspeech::Matrix;
use emgspeech_cli::context::sha256_file;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::Value;

pub const ELECTRODES: usize = 6;

/// Runs the binary inside `dir`.
pub fn emgspeech(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emgspeech"))
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .args(args)
        .output()
        .expect("spawn emgspeech")
}

/// Runs the binary and returns its stdout summary, panicking on failure.
pub fn ok(dir: &Path, args: &[&str]) -> Value {
    let out = emgspeech(dir, args);
    assert!(
        out.status.success(),
        "emgspeech {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

/// The structured error printed on stderr.
pub fn error_of(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().rev().find(|l| l.starts_with('{')).expect("JSON error line");
    serde_json::from_str::<Value>(line).expect("error JSON")["error"].clone()
}

/// sha256 of every file under `dir`, keyed by relative path.
pub fn tree_hashes(dir: &Path) -> BTreeMap<PathBuf, String> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, String>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), sha256_file(&p).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// Four raw recordings (six electrodes plus a trailing reference), 16 kHz
/// audio and unit labels; splits train, train, val, test.
pub fn emg_corpus(dir: &Path) -> PathBuf {
    let raw = dir.join("raw");
    std::fs::create_dir_all(&raw).unwrap();
    let mut m = Manifest::new(ELECTRODES);
    let splits = [Split::Train, Split::Train, Split::Val, Split::Test];
    for (i, split) in splits.into_iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(i as u64);
        let n = DEFAULT_FS as usize;
        let samples = Matrix::from_fn(ELECTRODES + 1, n, |c, t| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let tone = (2.0 * std::f64::consts::PI * 150.0 * (c + 1) as f64 * t as f64 / DEFAULT_FS).sin();
            (z + tone) as f32
        });
        let rec = Recording::with_reference_last(samples, DEFAULT_FS).unwrap();
        let id = format!("u{i}");
        save_recording(&rec, &raw.join(format!("{id}.emg"))).unwrap();
        let audio: Vec<f32> = (0..16000)
            .map(|t| (0.3 * (2.0 * std::f64::consts::PI * 220.0 * t as f64 / 16000.0).sin()) as f32)
            .collect();
        save_waveform(&audio, 16000.0, &raw.join(format!("{id}.wav"))).unwrap();
        let mut u = Utterance::new(id.clone(), split);
        u.emg = Some(format!("raw/{id}.emg"));
        u.audio = Some(format!("raw/{id}.wav"));
        u.units = Some(vec![i as u32, 7, 42]);
        m.utterances.push(u);
    }
    let path = dir.join("manifest.json");
    m.save(&path).unwrap();
    path
}

pub fn write(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}
