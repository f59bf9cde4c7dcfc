use emgspeech::io::{save_feature_sequence, FeatureKind, FeatureSequence, Manifest, Split, Utterance, SS_DIMS};
use emgspeech::synth::{
    gen_gesture_set, gen_linear_pair, gen_seq_task, r_for_snr, snr_for_r, write_gesture_set, write_seq_task,
};
use emgspeech::Matrix;
use serde_json::{json, Value};

use crate::config::SynthTask;
use crate::context::Context;
use crate::error::{CliError, CliResult};

pub fn run(ctx: &mut Context) -> CliResult<Value> {
    std::fs::create_dir_all(&ctx.out)?;
    match ctx.cfg.synth.task {
        SynthTask::Sequence => sequence(ctx),
        SynthTask::Gestures => gestures(ctx),
        SynthTask::Linear => linear(ctx),
    }
}

fn sequence(ctx: &mut Context) -> CliResult<Value> {
    let spec = &ctx.cfg.synth.spec;
    let task = gen_seq_task(spec)?;
    let m = write_seq_task(&task, &ctx.out)?;
    for u in &m.utterances {
        for rel in u.features.values() {
            ctx.output(rel);
        }
    }
    ctx.output("manifest.json");
    Ok(json!({
        "task": "sequence",
        "utterances": m.utterances.len(),
        "vocab": spec.vocab,
        "manifest": ctx.out_path("manifest.json"),
    }))
}

fn gestures(ctx: &mut Context) -> CliResult<Value> {
    let spec = &ctx.cfg.synth.spec;
    let set = gen_gesture_set(spec)?;
    let m = write_gesture_set(&set, spec, &ctx.out)?;
    for it in m.subjects.iter().flat_map(|s| &s.items) {
        ctx.output(&it.path);
    }
    ctx.output("gestures.json");
    Ok(json!({
        "task": "gestures",
        "items": set.items.len(),
        "classes": set.k,
        "manifest": ctx.out_path("gestures.json"),
    }))
}

/// Planted linear map from `ss-h` frames to `diag-e` frames, cut into
/// utterances and split by the spec's train:val:test ratio.
fn linear(ctx: &mut Context) -> CliResult<Value> {
    let cfg = &ctx.cfg.synth;
    let spec = &cfg.spec;
    if !SS_DIMS.contains(&cfg.d_in) {
        return Err(CliError::new(
            "config",
            format!("synth.d_in must be one of {SS_DIMS:?} to form ss-h features, got {}", cfg.d_in),
        ));
    }
    let snr = snr_for_r(cfg.r);
    let pair = gen_linear_pair(spec, cfg.d_in, spec.electrodes, snr)?;
    let n_utt = spec.frames / cfg.utterance_frames;
    if n_utt < 3 {
        return Err(CliError::new(
            "config",
            format!("{} frames make fewer than 3 utterances of {}", spec.frames, cfg.utterance_frames),
        ));
    }
    let total = (spec.train + spec.val + spec.test).max(1) as f64;
    let n_train = ((n_utt as f64 * spec.train as f64 / total).round() as usize).max(1);
    let n_val = (n_utt as f64 * spec.val as f64 / total).round() as usize;
    let n_val = n_val.min(n_utt - n_train - 1);

    std::fs::create_dir_all(ctx.out_path("features"))?;
    let mut m = Manifest::new(spec.electrodes);
    m.root = ctx.out.clone();
    for i in 0..n_utt {
        let split = if i < n_train {
            Split::Train
        } else if i < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
        let rows: Vec<usize> = (i * cfg.utterance_frames..(i + 1) * cfg.utterance_frames).collect();
        let id = format!("lin{i:04}");
        let mut u = Utterance::new(id.clone(), split);
        for (kind, src, electrodes) in [
            (FeatureKind::SsH, &pair.x, 0),
            (FeatureKind::DiagE, &pair.y, spec.electrodes),
        ] {
            let frames: Matrix<f32> = src.select_rows(&rows).cast();
            let seq = FeatureSequence::new(kind, frames, electrodes, 0)?;
            let rel = format!("features/{id}.{kind}");
            save_feature_sequence(&seq, &ctx.out_path(&rel))?;
            ctx.output(&rel);
            u.features.insert(kind.name().to_string(), rel);
        }
        m.utterances.push(u);
    }
    m.save(&ctx.out_path("manifest.json"))?;
    ctx.output("manifest.json");
    let truth = json!({
        "d_in": cfg.d_in,
        "d_out": spec.electrodes,
        "snr": snr,
        "r": r_for_snr(snr),
        "w": (0..pair.w.rows()).map(|o| pair.w.row(o).to_vec()).collect::<Vec<_>>(),
        "b": pair.b,
    });
    ctx.write_json("truth.json", &truth)?;
    Ok(json!({
        "task": "linear",
        "utterances": n_utt,
        "r": cfg.r,
        "manifest": ctx.out_path("manifest.json"),
    }))
}
