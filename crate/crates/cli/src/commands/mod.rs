mod cluster;
mod features;
mod preprocess;
mod probe;
mod quantize;
mod report;
mod sequence;
mod synth;

use std::path::Path;

use emgspeech::io::{load_feature_sequence, FeatureKind, FeatureSequence, Manifest, Utterance};
use serde_json::Value;

use crate::context::Context;
use crate::error::{CliError, CliResult};
use crate::Command;

pub fn dispatch(command: &Command, ctx: &mut Context) -> CliResult<Value> {
    match command {
        Command::Preprocess => preprocess::run(ctx),
        Command::Features => features::run(ctx),
        Command::ClusterEval => cluster::run(ctx),
        Command::Probe => probe::run(ctx),
        Command::Quantize => quantize::run(ctx),
        Command::Train => sequence::train(ctx),
        Command::Decode => sequence::decode(ctx),
        Command::Eval { predictions } => sequence::eval(ctx, predictions),
        Command::Synth => synth::run(ctx),
        Command::Report { input } => report::run(ctx, input),
    }
}

/// Loads one utterance's features of `kind`, recording the input hash.
pub(crate) fn load_features(
    ctx: &Context,
    m: &Manifest,
    u: &Utterance,
    kind: FeatureKind,
) -> CliResult<FeatureSequence> {
    let rel = u.feature(kind).ok_or_else(|| {
        CliError::new(
            "missing_input",
            format!("utterance {} has no {kind} features", u.id),
        )
    })?;
    load_container(ctx, m, rel, kind)
}

pub(crate) fn load_container(ctx: &Context, m: &Manifest, rel: &str, kind: FeatureKind) -> CliResult<FeatureSequence> {
    let path = m.resolve(rel);
    ctx.input(&path)?;
    let electrodes = kind.is_emg().then_some(m.electrodes);
    let seq = load_feature_sequence(&path, electrodes)?;
    if seq.kind != kind {
        return Err(CliError::new(
            "format",
            format!("{} holds {} features, expected {kind}", path.display(), seq.kind),
        ));
    }
    Ok(seq)
}

fn absolute(m: &Manifest, rel: &str) -> String {
    m.resolve(rel).display().to_string()
}

/// Copy of `m` whose artifact paths are absolute, for writing elsewhere.
pub(crate) fn rebased(m: &Manifest, root: &Path) -> Manifest {
    let mut out = m.clone();
    for u in &mut out.utterances {
        u.emg = u.emg.as_deref().map(|p| absolute(m, p));
        u.audio = u.audio.as_deref().map(|p| absolute(m, p));
        for p in u.features.values_mut() {
            *p = absolute(m, p);
        }
        for p in &mut u.layers {
            *p = absolute(m, p);
        }
    }
    out.root = root.to_path_buf();
    out
}

pub(crate) fn save_manifest(ctx: &Context, m: &Manifest) -> CliResult<()> {
    m.save(&ctx.out_path("manifest.json"))?;
    ctx.output("manifest.json");
    Ok(())
}
