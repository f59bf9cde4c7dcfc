//! Command-line pipeline: preprocessing, features, clustering, probes,
//! quantization, CTC training, decoding, evaluation, synthetic data and
//! reports.

// `!(x > 0.0)` style checks also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod context;
pub mod error;

use std::path::PathBuf;

use clap::{Parser, Subcommand};
use emgspeech::io::{FeatureKind, VocabKind};
use serde_json::Value;

pub use config::PipelineConfig;
pub use context::Context;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "emgspeech", version, about = "EMG-to-speech-unit pipeline")]
pub struct Cli {
    /// TOML pipeline config; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the number of physical cores.
    #[arg(long, global = true, env = "EMGSPEECH_WORKERS")]
    pub workers: Option<usize>,
    /// EMG feature kind (vec-e, diag-e, vec-b; mel-a for `features`).
    #[arg(long, global = true)]
    pub feature: Option<FeatureKind>,
    /// `units` or `phonemes`; for `probe`, the target feature kind.
    #[arg(long, global = true)]
    pub target: Option<String>,
    #[arg(long, global = true)]
    pub checkpoint: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Reference subtraction, bandpass and segment cropping of recordings.
    Preprocess,
    /// Frame features (vec-e, diag-e, vec-b, mel-a) for every utterance.
    Features,
    /// k-medoids clustering of gesture covariances under each metric.
    ClusterEval,
    /// Ridge probes from SS or mel features to EMG features.
    Probe,
    /// k-means codebook over SS frames and unit transcripts.
    Quantize,
    /// CTC training of the TDS model.
    Train,
    /// Greedy decoding with a trained checkpoint.
    Decode,
    /// Unit or phoneme error rates.
    Eval {
        /// Predictions files from `decode`, one per run; decodes with
        /// `--checkpoint` when omitted.
        #[arg(long)]
        predictions: Vec<PathBuf>,
    },
    /// Synthetic data with known ground truth.
    Synth,
    /// CSV/JSON tables for plotting, gathered from output directories.
    Report {
        /// Output directories of earlier runs.
        #[arg(long)]
        input: Vec<PathBuf>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Preprocess => "preprocess",
            Command::Features => "features",
            Command::ClusterEval => "cluster-eval",
            Command::Probe => "probe",
            Command::Quantize => "quantize",
            Command::Train => "train",
            Command::Decode => "decode",
            Command::Eval { .. } => "eval",
            Command::Synth => "synth",
            Command::Report { .. } => "report",
        }
    }
}

/// Config file plus flag overrides.
pub fn effective_config(cli: &Cli) -> CliResult<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    if let Some(m) = &cli.manifest {
        cfg.paths.manifest = Some(m.clone());
    }
    if let Some(o) = &cli.out {
        cfg.paths.out = o.clone();
    }
    if let Some(c) = &cli.checkpoint {
        cfg.paths.checkpoint = Some(c.clone());
    }
    // Nested seeds exist only so the echoed config is self-contained; they
    // must agree with the top-level seed, which drives every random choice.
    for (name, nested) in [("train.seed", cfg.train.seed), ("synth.spec.seed", cfg.synth.spec.seed)] {
        if nested != 0 && nested != cfg.seed {
            return Err(CliError::new(
                "config",
                format!("{name} = {nested} disagrees with seed = {}", cfg.seed),
            ));
        }
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.train.seed = cfg.seed;
    cfg.synth.spec.seed = cfg.seed;
    if let Some(f) = cli.feature {
        cfg.features.kind = f;
    }
    if let Some(t) = &cli.target {
        if matches!(cli.command, Command::Probe) {
            cfg.probe.target = t.parse().map_err(|e: emgspeech::Error| CliError::new("usage", e.to_string()))?;
        } else {
            cfg.model.target = match t.as_str() {
                "units" => VocabKind::Units,
                "phonemes" => VocabKind::Phonemes,
                other => {
                    return Err(CliError::new(
                        "usage",
                        format!("--target must be units or phonemes, got {other:?}"),
                    ))
                }
            };
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn default_workers() -> usize {
    num_cpus::get_physical().max(1)
}

/// Runs one subcommand and returns its JSON summary.
pub fn run(cli: &Cli) -> CliResult<Value> {
    let cfg = effective_config(cli)?;
    let workers = cli.workers.unwrap_or_else(default_workers).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::new("usage", e.to_string()))?;
    let mut ctx = Context::new(cli.command.name(), cfg)?;
    let summary = pool.install(|| commands::dispatch(&cli.command, &mut ctx))?;
    ctx.finish()?;
    Ok(summary)
}
