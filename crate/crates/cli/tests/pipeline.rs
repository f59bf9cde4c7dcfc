mod common;

use common::*;
use emgspeech::io::{
    load_feature_sequence, save_feature_sequence, FeatureKind, FeatureSequence, Manifest, Split, Utterance,
};
use emgspeech::Matrix;

#[test]
fn planted_sequence_task_trains_through_the_cli() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "cfg.toml", "seed = 4\n[synth.spec]\nnoise = 0.0\n");
    ok(d, &["--config", "cfg.toml", "--out", "data", "synth"]);
    let train = ok(d, &["--config", "cfg.toml", "--manifest", "data/manifest.json", "--out", "run", "train"]);
    assert!(train["best_epoch"].as_u64().unwrap() >= 1);
    ok(d, &["--config", "cfg.toml", "--manifest", "data/manifest.json", "--out", "run", "--checkpoint", "run/model.ckpt", "decode"]);
    let eval = ok(
        d,
        &["--config", "cfg.toml", "--manifest", "data/manifest.json", "--out", "run", "eval", "--predictions", "run/predictions.json"],
    );
    let uer = eval["aggregate"][0].as_f64().unwrap();
    assert!(uer < 0.10, "UER {uer}");
    assert_eq!(eval["metric"], "uer");
    for f in ["train.provenance.json", "train.config.toml", "metrics.csv", "eval.json"] {
        assert!(d.join("run").join(f).is_file(), "{f}");
    }
    let units = std::fs::read_to_string(d.join("run/units/synth0025.txt")).unwrap();
    assert!(units.ends_with('\n') && units.split_whitespace().all(|s| s.parse::<u32>().unwrap() < 10));
}

#[test]
fn preprocess_is_bit_identical_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    emg_corpus(d);
    ok(d, &["--manifest", "manifest.json", "--out", "pre", "preprocess"]);
    let first = tree_hashes(&d.join("pre"));
    std::fs::remove_dir_all(d.join("pre")).unwrap();
    ok(d, &["--manifest", "manifest.json", "--out", "pre", "--workers", "3", "preprocess"]);
    assert_eq!(first, tree_hashes(&d.join("pre")));
    assert!(first.keys().any(|k| k.ends_with("u0.emg")));
}

#[test]
fn every_feature_kind_has_its_width() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    emg_corpus(d);
    ok(d, &["--manifest", "manifest.json", "--out", "pre", "preprocess"]);
    for (kind, width) in [("diag-e", ELECTRODES), ("vec-e", ELECTRODES * ELECTRODES), ("vec-b", ELECTRODES * 5), ("mel-a", 80)] {
        let out = format!("feat-{kind}");
        let summary = ok(d, &["--manifest", "pre/manifest.json", "--out", &out, "--feature", kind, "features"]);
        assert_eq!(summary["utterances"], 4);
        let m = Manifest::load(&d.join(&out).join("manifest.json")).unwrap();
        let k: FeatureKind = kind.parse().unwrap();
        let seq = load_feature_sequence(&m.resolve(m.utterances[0].feature(k).unwrap()), None).unwrap();
        assert_eq!(seq.dim(), width, "{kind}");
        // one second at a 20 ms hop and 25 ms window
        assert_eq!(seq.len(), 49, "{kind}");
    }
}

#[test]
fn linear_bands_need_a_longer_window() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    emg_corpus(d);
    ok(d, &["--manifest", "manifest.json", "--out", "pre", "preprocess"]);
    write(d, "lin31.toml", "[features]\nkind = \"vec-b\"\nbands = \"lin31\"\n");
    let out = emgspeech(d, &["--config", "lin31.toml", "--manifest", "pre/manifest.json", "--out", "a", "features"]);
    assert_eq!(out.status.code(), Some(1));
    let err = error_of(&out);
    assert!(err["message"].as_str().unwrap().contains("resolution"), "{err}");
    write(d, "lin31w.toml", "[features]\nkind = \"vec-b\"\nbands = \"lin31\"\nband_window_ms = 40.0\n");
    let summary = ok(d, &["--config", "lin31w.toml", "--manifest", "pre/manifest.json", "--out", "b", "features"]);
    assert_eq!(summary["utterances"], 4);
    let m = Manifest::load(&d.join("b/manifest.json")).unwrap();
    let seq = load_feature_sequence(&m.resolve(m.utterances[0].feature(FeatureKind::VecB).unwrap()), None).unwrap();
    assert_eq!(seq.dim(), ELECTRODES * 31);
}

#[test]
fn probe_length_mismatch_is_a_structured_error() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    std::fs::create_dir_all(d.join("f")).unwrap();
    let mut m = Manifest::new(4);
    for (i, split) in [Split::Train, Split::Val, Split::Test].into_iter().enumerate() {
        let id = format!("u{i}");
        let ss = FeatureSequence::new(FeatureKind::SsH, Matrix::from_fn(30, 768, |r, c| ((r * 7 + c) % 11) as f32), 0, 0).unwrap();
        let emg = FeatureSequence::new(FeatureKind::DiagE, Matrix::from_fn(40, 4, |r, c| (r + c) as f32), 4, 0).unwrap();
        save_feature_sequence(&ss, &d.join(format!("f/{id}.ss-h"))).unwrap();
        save_feature_sequence(&emg, &d.join(format!("f/{id}.diag-e"))).unwrap();
        let mut u = Utterance::new(id.clone(), split);
        u.features.insert("ss-h".into(), format!("f/{id}.ss-h"));
        u.features.insert("diag-e".into(), format!("f/{id}.diag-e"));
        m.utterances.push(u);
    }
    m.save(&d.join("manifest.json")).unwrap();
    let out = emgspeech(d, &["--manifest", "manifest.json", "--out", "p", "probe"]);
    assert_eq!(out.status.code(), Some(1));
    let err = error_of(&out);
    assert_eq!(err["kind"], "length_mismatch");
    assert_eq!(err["details"]["left"], 30);
    assert_eq!(err["details"]["right"], 40);
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "bad.toml", "[train]\nlearning_rate = 0.1\n");
    let out = emgspeech(d, &["--config", "bad.toml", "--out", "s", "synth"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_of(&out)["kind"], "config");
    assert!(!d.join("s").exists());
}

#[test]
fn conflicting_nested_seed_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "seed.toml", "seed = 1\n[train]\nseed = 2\n");
    let out = emgspeech(d, &["--config", "seed.toml", "--out", "s", "synth"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_of(&out)["kind"], "config");
}

#[test]
fn missing_manifest_exits_with_usage_code() {
    let dir = tempfile::tempdir().unwrap();
    let out = emgspeech(dir.path(), &["--manifest", "nope.json", "--out", "o", "features"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_of(&out)["kind"], "missing_input");
}

#[test]
fn provenance_records_inputs_and_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    emg_corpus(d);
    ok(d, &["--manifest", "manifest.json", "--out", "pre", "--seed", "9", "preprocess"]);
    let prov: serde_json::Value =
        serde_json::from_slice(&std::fs::read(d.join("pre/preprocess.provenance.json")).unwrap()).unwrap();
    assert_eq!(prov["command"], "preprocess");
    assert_eq!(prov["seed"], 9);
    // manifest, four recordings and their sidecars
    assert_eq!(prov["inputs"].as_object().unwrap().len(), 9);
    assert!(prov["outputs"].as_object().unwrap().keys().any(|k| k.ends_with("u3.emg")));
    let cfg = std::fs::read_to_string(d.join("pre/preprocess.config.toml")).unwrap();
    assert!(cfg.contains("seed = 9"));
}

#[test]
fn gestures_cluster_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "g.toml", "[synth]\ntask = \"gestures\"\n[synth.spec]\nclasses = 4\nn_per_class = 4\n");
    ok(d, &["--config", "g.toml", "--out", "g", "synth"]);
    let cl = ok(d, &["--config", "g.toml", "--manifest", "g/gestures.json", "--out", "c", "cluster-eval"]);
    assert!(cl["mean_accuracy"]["geodesic"].as_f64().unwrap() >= 0.95);
    let rep = ok(d, &["--out", "r", "report", "--input", "c"]);
    assert_eq!(rep["embedding_files"], 1);
    let csv = std::fs::read_to_string(d.join("r/report_cluster.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
}

#[test]
fn linear_task_probes_and_quantizes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    write(d, "l.toml", "[synth]\ntask = \"linear\"\n[synth.spec]\nframes = 6000\n[quantize]\nunits = 8\n");
    ok(d, &["--config", "l.toml", "--out", "l", "synth"]);
    let probe = ok(d, &["--config", "l.toml", "--manifest", "l/manifest.json", "--out", "p", "probe"]);
    let r = probe["best"]["mean_r"].as_f64().unwrap();
    assert!(r > 0.75 && r < 0.9, "{r}");
    let q = ok(d, &["--config", "l.toml", "--manifest", "l/manifest.json", "--out", "q", "quantize"]);
    assert_eq!(q["units"], 8);
    let m = Manifest::load(&d.join("q/manifest.json")).unwrap();
    assert_eq!(m.unit_count, 8);
    assert!(m.utterances.iter().all(|u| u.units.as_ref().is_some_and(|s| s.len() == 500)));
}
