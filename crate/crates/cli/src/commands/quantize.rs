use emgspeech::io::{emit_unit_transcript, FeatureKind, FeatureSequence, Manifest, Split, Utterance};
use emgspeech::quantize::{fit_codebook, quantize, Codebook};
use emgspeech::Matrix;
use rayon::prelude::*;
use serde_json::{json, Value};

use super::{load_container, load_features, rebased, save_manifest};
use crate::context::Context;
use crate::error::{CliError, CliResult};

/// The SS frames to quantize: the configured layer when layers are listed,
/// otherwise the `ss-h` feature.
fn ss_frames(ctx: &Context, m: &Manifest, u: &Utterance) -> CliResult<FeatureSequence> {
    if u.layers.is_empty() {
        return load_features(ctx, m, u, FeatureKind::SsH);
    }
    let layer = ctx.cfg.quantize.layer;
    let rel = u.layers.get(layer).ok_or_else(|| {
        CliError::new(
            "missing_input",
            format!("utterance {} lists {} layers, layer {layer} requested", u.id, u.layers.len()),
        )
    })?;
    load_container(ctx, m, rel, FeatureKind::SsH)
}

pub fn run(ctx: &mut Context) -> CliResult<Value> {
    let m = ctx.manifest()?;
    let cfg = &ctx.cfg.quantize;
    let frames = m
        .utterances
        .par_iter()
        .map(|u| Ok(ss_frames(ctx, &m, u)?.frames))
        .collect::<CliResult<Vec<Matrix<f32>>>>()?;

    let (codebook, fit_log) = match &cfg.codebook {
        Some(path) => {
            ctx.input(path)?;
            (Codebook::<f32>::load(path)?, Value::Null)
        }
        None => {
            let train: Vec<&Matrix<f32>> = m
                .utterances
                .iter()
                .zip(&frames)
                .filter(|(u, _)| u.split == Split::Train)
                .map(|(_, f)| f)
                .collect();
            if train.is_empty() {
                return Err(CliError::new("missing_input", "no train utterances to fit the codebook on"));
            }
            let fit = fit_codebook(&Matrix::vstack(&train)?, cfg.units, ctx.cfg.seed, cfg.max_iter, cfg.tol)?;
            let log = json!({ "iterations": fit.iterations, "inertia": fit.inertia });
            (fit.codebook, log)
        }
    };
    codebook.save(&ctx.out_path("codebook.bin"))?;
    ctx.output("codebook.bin");

    let mut out = rebased(&m, &ctx.out);
    out.unit_count = codebook.k();
    std::fs::create_dir_all(ctx.out_path("units"))?;
    out.utterances
        .par_iter_mut()
        .zip(&frames)
        .map(|(u, f)| {
            let units = quantize(&codebook, f, cfg.collapse)?;
            let rel = format!("units/{}.txt", u.id);
            emit_unit_transcript(&units, &ctx.out_path(&rel))?;
            ctx.output(&rel);
            u.units = Some(units.symbols().to_vec());
            Ok(())
        })
        .collect::<CliResult<Vec<()>>>()?;
    save_manifest(ctx, &out)?;
    ctx.write_json("kmeans.json", &json!({ "k": codebook.k(), "dim": codebook.dim(), "fit": fit_log }))?;
    Ok(json!({ "units": codebook.k(), "utterances": out.utterances.len(), "fit": fit_log }))
}
