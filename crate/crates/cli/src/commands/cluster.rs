use std::collections::BTreeMap;
use std::io::Read;

use emgspeech::cluster::{cluster_gestures, pca_embed_2d, ClusterReport, GestureItem, GestureSet, Metric};
use emgspeech::io::{load_feature_sequence, load_recording, meta_path, ContainerKind, Header, HEADER_LEN};
use emgspeech::spd::{cholesky, covariance, unvec_cov, CovFrame};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use super::preprocess::clean;
use crate::context::Context;
use crate::error::CliResult;

#[derive(Debug, Serialize)]
struct SubjectResult {
    id: String,
    items: usize,
    reports: Vec<ClusterReport>,
}

fn container_kind(path: &std::path::Path) -> CliResult<ContainerKind> {
    let mut buf = [0u8; HEADER_LEN];
    std::fs::File::open(path)?.read_exact(&mut buf)?;
    Ok(Header::decode(&buf)?.kind)
}

/// Covariance of a whole gesture recording, or the single frame of a
/// `vec-e` container.
fn item_covariance(ctx: &Context, path: &std::path::Path) -> CliResult<CovFrame<f64>> {
    ctx.input(path)?;
    if container_kind(path)? == ContainerKind::VecE {
        let seq = load_feature_sequence(path, None)?;
        let row: Vec<f64> = seq.frames.row(0).iter().map(|&x| x as f64).collect();
        return Ok(unvec_cov(&row)?);
    }
    ctx.input_if_exists(&meta_path(path))?;
    let mut rec = load_recording(path)?;
    if ctx.cfg.cluster.preprocess {
        rec = clean(&rec, &ctx.cfg.preprocess, None)?;
    }
    Ok(covariance(&rec.samples.cast::<f64>(), ctx.cfg.features.ridge_rel)?)
}

fn embedding_csv(set: &GestureSet) -> CliResult<String> {
    let mut out = String::from("metric,item,label,x,y\n");
    let log_coords = set
        .items
        .iter()
        .map(|it| Ok(cholesky(&it.cov)?.log_coords()))
        .collect::<CliResult<Vec<_>>>()?;
    for (metric, feats) in [(Metric::Geodesic, log_coords), (Metric::EuclideanDiag, set.diag_features())] {
        let emb = pca_embed_2d(&feats)?;
        for (i, ((x, y), it)) in emb.coords.iter().zip(&set.items).enumerate() {
            out.push_str(&format!("{},{i},{},{x:.9e},{y:.9e}\n", metric.name(), it.label));
        }
    }
    Ok(out)
}

pub fn run(ctx: &mut Context) -> CliResult<Value> {
    let m = ctx.gesture_manifest()?;
    let mut results = Vec::new();
    for subject in &m.subjects {
        let items = subject
            .items
            .par_iter()
            .map(|it| {
                Ok(GestureItem {
                    cov: item_covariance(ctx, &m.resolve(&it.path))?,
                    label: it.label,
                })
            })
            .collect::<CliResult<Vec<_>>>()?;
        let set = GestureSet::new(items, m.classes)?;
        let reports = ctx
            .cfg
            .cluster
            .metrics
            .iter()
            .map(|&metric| Ok(cluster_gestures(&set, metric, ctx.cfg.seed, ctx.cfg.cluster.max_iter)?))
            .collect::<CliResult<Vec<_>>>()?;
        if set.items.len() >= 3 {
            ctx.write_text(&format!("embedding/{}.csv", subject.id), &embedding_csv(&set)?)?;
        }
        results.push(SubjectResult {
            id: subject.id.clone(),
            items: set.items.len(),
            reports,
        });
    }
    let mut mean: BTreeMap<&str, f64> = BTreeMap::new();
    for r in results.iter().flat_map(|s| &s.reports) {
        *mean.entry(r.metric.name()).or_default() += r.accuracy / results.len() as f64;
    }
    let mut csv = String::from("subject,metric,accuracy,cost\n");
    for s in &results {
        for r in &s.reports {
            csv.push_str(&format!("{},{},{:.6},{:.9e}\n", s.id, r.metric.name(), r.accuracy, r.cost));
        }
    }
    ctx.write_text("cluster.csv", &csv)?;
    let summary = json!({ "mean_accuracy": mean, "subjects": results });
    ctx.write_json("cluster.json", &summary)?;
    Ok(json!({ "mean_accuracy": mean }))
}
