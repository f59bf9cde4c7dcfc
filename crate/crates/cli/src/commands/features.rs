use emgspeech::dsp::{emg_band_power, frame, mel_power_frames, BandLayout};
use emgspeech::io::{load_recording, load_waveform, meta_path, save_feature_sequence, FeatureKind, FeatureSequence, Recording};
use emgspeech::spd::{covariance, diag_power, vec_cov};
use emgspeech::Matrix;
use rayon::prelude::*;
use serde_json::{json, Value};

use super::{rebased, save_manifest};
use crate::config::Features;
use crate::context::Context;
use crate::error::{CliError, CliResult};

/// Covariance-derived frames (`vec-e` or `diag-e`) of a recording.
pub(crate) fn covariance_features(rec: &Recording, kind: FeatureKind, cfg: &Features) -> CliResult<FeatureSequence> {
    let frames = frame(rec, cfg.hop_ms, cfg.window_ms)?;
    let v = rec.channels();
    let rows = frames
        .iter()
        .map(|f| {
            let c = covariance(&f.cast::<f64>(), cfg.ridge_rel)?;
            let row = if kind == FeatureKind::DiagE { diag_power(&c) } else { vec_cov(&c) };
            Ok(row.into_iter().map(|x| x as f32).collect::<Vec<_>>())
        })
        .collect::<CliResult<Vec<_>>>()?;
    let mut seq = FeatureSequence::new(kind, Matrix::from_rows(&rows)?, v, 0)?;
    seq.hop_ms = cfg.hop_ms;
    seq.window_ms = cfg.window_ms;
    Ok(seq)
}

pub fn run(ctx: &mut Context) -> CliResult<Value> {
    let m = ctx.manifest()?;
    let mut out = rebased(&m, &ctx.out);
    let cfg = &ctx.cfg.features;
    let kind = cfg.kind;
    let electrodes = m.electrodes;
    let written = out
        .utterances
        .par_iter_mut()
        .map(|u| {
            let seq = match kind {
                FeatureKind::MelA => {
                    let Some(rel) = &u.audio else { return Ok(false) };
                    let path = m.resolve(rel);
                    ctx.input(&path)?;
                    let (audio, fs) = load_waveform(&path)?;
                    let f_max = cfg.mel_f_max.unwrap_or(fs / 2.0);
                    let frames = mel_power_frames(&audio, fs, 80, cfg.mel_f_min, f_max, cfg.hop_ms, cfg.window_ms)?;
                    let mut seq = FeatureSequence::new(FeatureKind::MelA, frames, 0, 0)?;
                    seq.hop_ms = cfg.hop_ms;
                    seq.window_ms = cfg.window_ms;
                    seq
                }
                _ => {
                    let Some(rel) = &u.emg else { return Ok(false) };
                    let path = m.resolve(rel);
                    ctx.input(&path)?;
                    ctx.input_if_exists(&meta_path(&path))?;
                    let mut rec = load_recording(&path)?;
                    if rec.reference_index().is_some() {
                        log::warn!("{}: reference channel still present; run preprocess first", u.id);
                    }
                    if let Some(i) = u.segment {
                        let &(s, e) = rec.segments.get(i).ok_or_else(|| {
                            CliError::new("format", format!("{}: segment {i} out of range", u.id))
                        })?;
                        rec = rec.crop(s, e)?;
                    }
                    if rec.channels() != electrodes {
                        return Err(CliError::new(
                            "format",
                            format!("{}: {} channels but the manifest declares {electrodes}", u.id, rec.channels()),
                        ));
                    }
                    match kind {
                        FeatureKind::VecB => {
                            let window = cfg.band_window_ms.unwrap_or(cfg.window_ms);
                            emg_band_power(&rec, &BandLayout::from_mode(cfg.bands), cfg.hop_ms, window)?
                        }
                        _ => covariance_features(&rec, kind, cfg)?,
                    }
                }
            };
            let rel = format!("features/{}.{kind}", u.id);
            save_feature_sequence(&seq, &ctx.out_path(&rel))?;
            ctx.output(&rel);
            u.features.insert(kind.name().to_string(), rel);
            Ok(true)
        })
        .collect::<CliResult<Vec<bool>>>()?;
    let count = written.iter().filter(|&&w| w).count();
    if count == 0 {
        return Err(CliError::new(
            "missing_input",
            format!("no utterance has the {} needed for {kind} features", if kind == FeatureKind::MelA { "audio" } else { "EMG" }),
        ));
    }
    save_manifest(ctx, &out)?;
    Ok(json!({ "kind": kind, "utterances": count, "manifest": ctx.out_path("manifest.json") }))
}
