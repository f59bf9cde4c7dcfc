use emgspeech::io::{FeatureKind, Split};
use emgspeech::probe::{layer_sweep, paired_len, sweep_csv, ProbeData, VALIDATION_FRACTION};
use emgspeech::Matrix;
use rayon::prelude::*;
use serde_json::{json, Value};

use super::{load_container, load_features};
use crate::context::Context;
use crate::error::{CliError, CliResult};

struct Pair {
    split: Split,
    layers: Vec<Matrix<f32>>,
    target: Matrix<f32>,
}

fn stack(parts: Vec<&Matrix<f32>>, cols: usize) -> CliResult<Matrix<f32>> {
    if parts.is_empty() {
        return Ok(Matrix::zeros(0, cols));
    }
    Ok(Matrix::vstack(&parts)?)
}

fn split_rows(m: &Matrix<f32>, at: usize) -> (Matrix<f32>, Matrix<f32>) {
    let head: Vec<usize> = (0..at).collect();
    let tail: Vec<usize> = (at..m.rows()).collect();
    (m.select_rows(&head), m.select_rows(&tail))
}

pub fn run(ctx: &mut Context) -> CliResult<Value> {
    let cfg = &ctx.cfg.probe;
    let (source, target) = (cfg.source, cfg.target);
    if target == FeatureKind::VecE && !cfg.allow_vec_e {
        return Err(CliError::new(
            "config",
            "vec-e targets are ill-posed and dominated by noise; set probe.allow_vec_e = true to probe them anyway",
        ));
    }
    let m = ctx.manifest()?;
    let pairs = m
        .utterances
        .par_iter()
        .map(|u| {
            let tgt = load_features(ctx, &m, u, target)?;
            let sources = if source == FeatureKind::SsH && !u.layers.is_empty() {
                u.layers
                    .iter()
                    .map(|rel| load_container(ctx, &m, rel, FeatureKind::SsH))
                    .collect::<CliResult<Vec<_>>>()?
            } else {
                vec![load_features(ctx, &m, u, source)?]
            };
            let mut n = tgt.len();
            for s in &sources {
                n = n.min(paired_len(
                    &format!("utterance {}: {source} vs {target}", u.id),
                    s.len(),
                    tgt.len(),
                    cfg.frame_slack,
                )?);
            }
            let mut frames = tgt.frames;
            frames.truncate_rows(n);
            let layers = sources
                .into_iter()
                .map(|mut s| {
                    s.truncate(n);
                    s.frames
                })
                .collect();
            Ok(Pair { split: u.split, layers, target: frames })
        })
        .collect::<CliResult<Vec<_>>>()?;

    let n_layers = pairs.first().map_or(0, |p| p.layers.len());
    if let Some(p) = pairs.iter().find(|p| p.layers.len() != n_layers) {
        return Err(CliError::new(
            "format",
            format!("utterances list {} and {n_layers} source layers", p.layers.len()),
        ));
    }
    let gather = |split: Split, layer: Option<usize>| -> CliResult<Matrix<f32>> {
        let parts: Vec<&Matrix<f32>> = pairs
            .iter()
            .filter(|p| p.split == split)
            .map(|p| layer.map_or(&p.target, |j| &p.layers[j]))
            .collect();
        let cols = pairs.first().map_or(0, |p| layer.map_or(p.target.cols(), |j| p.layers[j].cols()));
        stack(parts, cols)
    };
    let has_val = pairs.iter().any(|p| p.split == Split::Val);
    let data = |layer: Option<usize>| -> CliResult<ProbeData<f32>> {
        let (train, val) = if has_val {
            (gather(Split::Train, layer)?, gather(Split::Val, layer)?)
        } else {
            // no validation utterances: hold out the tail of the training frames
            let all = gather(Split::Train, layer)?;
            let at = all.rows() - (all.rows() as f64 * VALIDATION_FRACTION).round() as usize;
            split_rows(&all, at)
        };
        Ok(ProbeData { train, val, test: gather(Split::Test, layer)? })
    };
    let target_data = data(None)?;
    if target_data.train.rows() == 0 || target_data.test.rows() < 2 {
        return Err(CliError::new("missing_input", "probe needs train frames and ≥ 2 test frames"));
    }
    let layers = (0..n_layers).map(|j| data(Some(j))).collect::<CliResult<Vec<_>>>()?;
    let reports = layer_sweep(&layers, &target_data, &cfg.lambdas)?;
    ctx.write_text("probe.csv", &sweep_csv(&reports))?;
    ctx.write_json(
        "probe.json",
        &json!({ "source": source, "target": target, "reports": reports }),
    )?;
    let best = reports
        .iter()
        .max_by(|a, b| a.mean_r.total_cmp(&b.mean_r))
        .map(|r| json!({ "layer": r.layer_id, "mean_r": r.mean_r }));
    Ok(json!({
        "source": source,
        "target": target,
        "mean_r": reports.iter().map(|r| r.mean_r).collect::<Vec<_>>(),
        "best": best,
    }))
}
