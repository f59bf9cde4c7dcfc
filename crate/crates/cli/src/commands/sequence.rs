use std::collections::BTreeMap;
use std::path::PathBuf;

use emgspeech::io::{emit_unit_transcript, FeatureKind, LabelSequence, Manifest, Split, Vocab, VocabKind};
use emgspeech::metrics::{error_rate, summarize_runs, ErrorReport};
use emgspeech::nn::{
    decode as greedy, load_checkpoint, metrics_csv, save_checkpoint, train as fit, ChannelLayout,
    CheckpointHeader, Example, TdsConfig, TdsModel,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::load_features;
use crate::context::Context;
use crate::error::{CliError, CliResult};

/// Decoded symbol ids per utterance, as written by `decode`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Predictions {
    pub vocab_kind: VocabKind,
    pub vocab_size: usize,
    pub split: Split,
    pub utterances: BTreeMap<String, Vec<u32>>,
    pub text: BTreeMap<String, String>,
}

fn examples(ctx: &Context, m: &Manifest, split: Split, kind: FeatureKind, vocab: &Vocab) -> CliResult<Vec<Example<f32>>> {
    m.split(split)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|u| {
            let target = m.labels(u, vocab.kind)?.ok_or_else(|| {
                CliError::new(
                    "missing_input",
                    format!("utterance {} has no {:?} labels", u.id, vocab.kind),
                )
            })?;
            Ok(Example {
                id: u.id.clone(),
                features: load_features(ctx, m, u, kind)?.frames,
                target,
            })
        })
        .collect()
}

pub fn train(ctx: &mut Context) -> CliResult<Value> {
    let kind = ctx.cfg.features.kind;
    if !kind.is_emg() {
        return Err(CliError::new("config", format!("the sequence model reads EMG features, not {kind}")));
    }
    let m = ctx.manifest()?;
    let vocab = m.vocab(ctx.cfg.model.target)?;
    let train_set = examples(ctx, &m, Split::Train, kind, &vocab)?;
    let val_set = examples(ctx, &m, Split::Val, kind, &vocab)?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(CliError::new("missing_input", "training needs train and val utterances"));
    }
    let first = load_features(ctx, &m, m.split(Split::Train).next().expect("non-empty"), kind)?;
    let layout = ChannelLayout::for_kind(kind, first.electrodes, first.bands)?;
    let mc = &ctx.cfg.model;
    let config = TdsConfig {
        hidden: mc.hidden,
        blocks: mc.blocks,
        kernel: mc.kernel,
        ..TdsConfig::new(layout, vocab.len())
    };
    let model = TdsModel::<f32>::new(config, ctx.cfg.seed)?;
    let outcome = fit(model, &train_set, &val_set, &ctx.cfg.train)?;

    let header = CheckpointHeader::new(&outcome.best, &vocab, ctx.cfg.seed, outcome.best_epoch);
    save_checkpoint(&outcome.best, &header, &ctx.out_path("model.ckpt"))?;
    ctx.output("model.ckpt");
    ctx.write_text("metrics.csv", &metrics_csv(&outcome.metrics))?;
    let best_val = outcome
        .metrics
        .iter()
        .find(|e| e.epoch == outcome.best_epoch)
        .map(|e| e.val_error);
    let summary = json!({
        "best_epoch": outcome.best_epoch,
        "best_val_error": best_val,
        "epochs": outcome.metrics.len(),
        "parameters": outcome.best.params.len(),
        "diverged": outcome.diverged.map(|(epoch, loss)| json!({ "epoch": epoch, "loss": loss })),
        "checkpoint": ctx.out_path("model.ckpt"),
    });
    ctx.write_json("train.json", &summary)?;
    if let Some((epoch, loss)) = outcome.diverged {
        // the last good checkpoint is already on disk
        return Err(emgspeech::Error::Diverged { epoch, loss }.into());
    }
    Ok(summary)
}

fn decode_split(ctx: &Context, m: &Manifest) -> CliResult<(Predictions, Vocab)> {
    let path = ctx.checkpoint_path()?;
    let (model, header) = load_checkpoint::<f32>(&path)?;
    let vocab = m.vocab(header.vocab_kind)?;
    header.check_vocab(&vocab)?;
    let kind = model.config.layout.feature_kind();
    let split = ctx.cfg.decode.split;
    let decoded = m
        .split(split)
        .collect::<Vec<_>>()
        .par_iter()
        .map(|u| {
            let seq = load_features(ctx, m, u, kind)?;
            Ok((u.id.clone(), greedy(&model, &seq.frames, vocab.kind)?))
        })
        .collect::<CliResult<Vec<(String, LabelSequence)>>>()?;
    let predictions = Predictions {
        vocab_kind: vocab.kind,
        vocab_size: vocab.len(),
        split,
        text: decoded.iter().map(|(id, s)| (id.clone(), vocab.decode(s))).collect(),
        utterances: decoded.into_iter().map(|(id, s)| (id, s.symbols().to_vec())).collect(),
    };
    Ok((predictions, vocab))
}

pub fn decode(ctx: &mut Context) -> CliResult<Value> {
    let m = ctx.manifest()?;
    let (predictions, vocab) = decode_split(ctx, &m)?;
    ctx.write_json("predictions.json", &predictions)?;
    let mut vocoder = Vec::new();
    if vocab.kind == VocabKind::Units {
        std::fs::create_dir_all(ctx.out_path("units"))?;
        for (id, ids) in &predictions.utterances {
            let rel = format!("units/{id}.txt");
            let units = LabelSequence::new(&vocab, ids.clone())?;
            emit_unit_transcript(&units, &ctx.out_path(&rel))?;
            ctx.output(&rel);
            vocoder.push(
                ctx.cfg
                    .decode
                    .vocoder_command
                    .replace("{units}", &ctx.out_path(&rel).display().to_string())
                    .replace("{wav}", &ctx.out_path(&format!("wav/{id}.wav")).display().to_string()),
            );
        }
        // No vocoder is bundled: print what a user would run.
        for line in &vocoder {
            eprintln!("{line}");
        }
    }
    Ok(json!({
        "split": predictions.split,
        "utterances": predictions.utterances.len(),
        "predictions": ctx.out_path("predictions.json"),
        "vocoder_commands": vocoder,
    }))
}

fn score(m: &Manifest, p: &Predictions) -> CliResult<ErrorReport> {
    let vocab = m.vocab(p.vocab_kind)?;
    if vocab.len() != p.vocab_size {
        return Err(CliError::new(
            "format",
            format!("predictions use {} symbols, the manifest vocabulary has {}", p.vocab_size, vocab.len()),
        ));
    }
    let mut targets = Vec::new();
    let mut hyps = Vec::new();
    for (id, ids) in &p.utterances {
        let u = m
            .utterances
            .iter()
            .find(|u| &u.id == id)
            .ok_or_else(|| CliError::new("format", format!("utterance {id} is not in the manifest")))?;
        let t = m
            .labels(u, p.vocab_kind)?
            .ok_or_else(|| CliError::new("missing_input", format!("utterance {id} has no labels")))?;
        targets.push(t);
        hyps.push(LabelSequence::new(&vocab, ids.clone())?);
    }
    if targets.iter().all(|t| t.is_empty()) {
        return Err(CliError::new("missing_input", "every target sequence is empty"));
    }
    Ok(error_rate(&targets, &hyps)?)
}

pub fn eval(ctx: &mut Context, files: &[PathBuf]) -> CliResult<Value> {
    let m = ctx.manifest()?;
    let runs = if files.is_empty() {
        vec![decode_split(ctx, &m)?.0]
    } else {
        files
            .iter()
            .map(|f| {
                ctx.input(f)?;
                Ok(serde_json::from_slice::<Predictions>(&std::fs::read(f)?)?)
            })
            .collect::<CliResult<Vec<_>>>()?
    };
    let reports = runs.iter().map(|p| score(&m, p)).collect::<CliResult<Vec<_>>>()?;
    let label = match runs[0].vocab_kind {
        VocabKind::Units => "uer",
        VocabKind::Phonemes => "per",
    };
    let spread = if reports.len() > 1 { summarize_runs(&reports) } else { None };
    ctx.write_json(
        "eval.json",
        &json!({ "metric": label, "split": runs[0].split, "runs": reports, "over_runs": spread }),
    )?;
    Ok(json!({
        "metric": label,
        "aggregate": reports.iter().map(|r| r.aggregate).collect::<Vec<_>>(),
        "mean_of_rates": reports.iter().map(|r| r.mean_of_rates).collect::<Vec<_>>(),
        "over_runs": spread,
    }))
}
