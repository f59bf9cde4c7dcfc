use emgspeech::dsp::{bandpass, subtract_reference};
use emgspeech::io::{load_recording, meta_path, save_recording, Recording};
use rayon::prelude::*;
use serde_json::{json, Value};

use super::{rebased, save_manifest};
use crate::config::Preprocess;
use crate::context::Context;
use crate::error::{CliError, CliResult};

/// Reference subtraction and bandpass as configured, then the segment crop.
pub(crate) fn clean(rec: &Recording, cfg: &Preprocess, segment: Option<usize>) -> CliResult<Recording> {
    let mut rec = if cfg.subtract_reference && rec.reference_index().is_some() {
        subtract_reference(rec)?
    } else {
        rec.clone()
    };
    if cfg.bandpass {
        rec = bandpass(&rec, &cfg.filter(rec.fs))?;
    }
    if let Some(i) = segment {
        let &(s, e) = rec.segments.get(i).ok_or_else(|| {
            CliError::new("format", format!("segment {i} out of range ({} segments)", rec.segments.len()))
        })?;
        rec = rec.crop(s, e)?;
    }
    Ok(rec)
}

pub fn run(ctx: &mut Context) -> CliResult<Value> {
    let m = ctx.manifest()?;
    let mut out = rebased(&m, &ctx.out);
    let cfg = &ctx.cfg.preprocess;
    let written = out
        .utterances
        .par_iter_mut()
        .filter(|u| u.emg.is_some())
        .map(|u| {
            let path = m.resolve(u.emg.as_deref().expect("filtered"));
            ctx.input(&path)?;
            ctx.input_if_exists(&meta_path(&path))?;
            let rec = clean(&load_recording(&path)?, cfg, u.segment)?;
            let rel = format!("emg/{}.emg", u.id);
            save_recording(&rec, &ctx.out_path(&rel))?;
            ctx.output(&rel);
            ctx.output(&meta_path(std::path::Path::new(&rel)).display().to_string());
            u.emg = Some(rel);
            u.segment = None;
            Ok(())
        })
        .collect::<CliResult<Vec<()>>>()?
        .len();
    save_manifest(ctx, &out)?;
    Ok(json!({ "recordings": written, "manifest": ctx.out_path("manifest.json") }))
}
