use std::path::{Path, PathBuf};

use serde_json::{json, Map, Value};

use crate::context::Context;
use crate::error::{CliError, CliResult};

fn read_json(ctx: &Context, path: &Path) -> CliResult<Option<Value>> {
    if !path.is_file() {
        return Ok(None);
    }
    ctx.input(path)?;
    Ok(Some(serde_json::from_slice(&std::fs::read(path)?)?))
}

fn num(v: &Value) -> String {
    v.as_f64().map_or_else(String::new, |x| format!("{x:.6}"))
}

/// Gathers the summaries found in each run directory into `summary.json`
/// and one flat CSV per stage, ready for plotting.
pub fn run(ctx: &mut Context, inputs: &[PathBuf]) -> CliResult<Value> {
    if inputs.is_empty() {
        return Err(CliError::new("usage", "report needs at least one --input directory"));
    }
    let mut runs = Vec::new();
    let mut cluster_csv = String::from("run,subject,metric,accuracy\n");
    let mut probe_csv = String::from("run,layer,mean_r,lambda\n");
    let mut train_csv = String::new();
    let mut eval_csv = String::from("run,metric,aggregate,mean_of_rates\n");
    let mut embeddings = 0;

    for dir in inputs {
        if !dir.is_dir() {
            return Err(CliError::missing(&dir.display().to_string()));
        }
        let name = dir.display().to_string();
        let mut entry = Map::new();
        entry.insert("run".into(), json!(name));

        if let Some(c) = read_json(ctx, &dir.join("cluster.json"))? {
            for s in c["subjects"].as_array().into_iter().flatten() {
                for r in s["reports"].as_array().into_iter().flatten() {
                    cluster_csv.push_str(&format!(
                        "{name},{},{},{}\n",
                        s["id"].as_str().unwrap_or(""),
                        r["metric"].as_str().unwrap_or(""),
                        num(&r["accuracy"])
                    ));
                }
            }
            entry.insert("cluster_mean_accuracy".into(), c["mean_accuracy"].clone());
        }
        let emb_dir = dir.join("embedding");
        if emb_dir.is_dir() {
            let mut files: Vec<_> = std::fs::read_dir(&emb_dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|x| x == "csv"))
                .collect();
            files.sort();
            for f in &files {
                ctx.input(f)?;
            }
            embeddings += files.len();
        }
        if let Some(p) = read_json(ctx, &dir.join("probe.json"))? {
            let reports = p["reports"].as_array().cloned().unwrap_or_default();
            for r in &reports {
                probe_csv.push_str(&format!(
                    "{name},{},{},{}\n",
                    r["layer_id"],
                    num(&r["mean_r"]),
                    num(&r["lambda"])
                ));
            }
            let best = reports
                .iter()
                .filter(|r| r["mean_r"].is_number())
                .max_by(|a, b| num_cmp(&a["mean_r"], &b["mean_r"]));
            entry.insert("probe_best".into(), best.cloned().unwrap_or(Value::Null));
        }
        let metrics = dir.join("metrics.csv");
        if metrics.is_file() {
            ctx.input(&metrics)?;
            let text = std::fs::read_to_string(&metrics)?;
            let mut lines = text.lines();
            if let Some(head) = lines.next() {
                if train_csv.is_empty() {
                    train_csv = format!("run,{head}\n");
                }
                for l in lines.filter(|l| !l.is_empty()) {
                    train_csv.push_str(&format!("{name},{l}\n"));
                }
            }
        }
        if let Some(t) = read_json(ctx, &dir.join("train.json"))? {
            entry.insert("train".into(), t);
        }
        if let Some(e) = read_json(ctx, &dir.join("eval.json"))? {
            let metric = e["metric"].as_str().unwrap_or("");
            for r in e["runs"].as_array().into_iter().flatten() {
                eval_csv.push_str(&format!("{name},{metric},{},{}\n", num(&r["aggregate"]), num(&r["mean_of_rates"])));
            }
            entry.insert("eval".into(), json!({ "metric": metric, "over_runs": e["over_runs"] }));
        }
        runs.push(Value::Object(entry));
    }

    ctx.write_text("report_cluster.csv", &cluster_csv)?;
    ctx.write_text("report_probe.csv", &probe_csv)?;
    ctx.write_text("report_train.csv", if train_csv.is_empty() { "run\n" } else { &train_csv })?;
    ctx.write_text("report_eval.csv", &eval_csv)?;
    let summary = json!({ "runs": runs, "embedding_files": embeddings });
    ctx.write_json("summary.json", &summary)?;
    Ok(summary)
}

fn num_cmp(a: &Value, b: &Value) -> std::cmp::Ordering {
    a.as_f64().unwrap_or(f64::NAN).total_cmp(&b.as_f64().unwrap_or(f64::NAN))
}
