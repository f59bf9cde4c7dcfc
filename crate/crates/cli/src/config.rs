//! Pipeline configuration: one TOML file, every key optional, unknown keys
//! rejected.

use std::path::{Path, PathBuf};

use emgspeech::cluster::Metric;
use emgspeech::dsp::{BandMode, FilterSpec};
use emgspeech::io::{FeatureKind, Split, VocabKind};
use emgspeech::nn::{TrainConfig, DEFAULT_BLOCKS, DEFAULT_HIDDEN, DEFAULT_KERNEL};
use emgspeech::probe::DEFAULT_LAMBDAS;
use emgspeech::quantize::{DEFAULT_MAX_ITER, DEFAULT_TOL, DEFAULT_UNITS};
use emgspeech::synth::SynthSpec;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub paths: Paths,
    pub preprocess: Preprocess,
    pub features: Features,
    pub cluster: Cluster,
    pub probe: Probe,
    pub quantize: Quantize,
    pub model: Model,
    pub train: TrainConfig,
    pub decode: Decode,
    pub synth: Synth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    /// Input manifest (`manifest.json`, or `gestures.json` for cluster-eval).
    pub manifest: Option<PathBuf>,
    pub out: PathBuf,
    /// Model checkpoint read by decode and eval.
    pub checkpoint: Option<PathBuf>,
}

impl Default for Paths {
    fn default() -> Self {
        Self {
            manifest: None,
            out: PathBuf::from("out"),
            checkpoint: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Preprocess {
    pub subtract_reference: bool,
    pub bandpass: bool,
    pub order: usize,
    pub f_lo: f64,
    pub f_hi: f64,
}

impl Default for Preprocess {
    fn default() -> Self {
        let f = FilterSpec::emg(5000.0);
        Self {
            subtract_reference: true,
            bandpass: true,
            order: f.order,
            f_lo: f.f_lo,
            f_hi: f.f_hi,
        }
    }
}

impl Preprocess {
    pub fn filter(&self, fs: f64) -> FilterSpec {
        FilterSpec {
            order: self.order,
            f_lo: self.f_lo,
            f_hi: self.f_hi,
            fs,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Features {
    /// Feature `features` computes and the sequence model consumes (EMG
    /// kinds only for the model).
    pub kind: FeatureKind,
    pub hop_ms: f64,
    pub window_ms: f64,
    /// Covariance ridge, relative to the mean channel power.
    pub ridge_rel: f64,
    pub bands: BandMode,
    /// Band-power window; defaults to `window_ms`. The 31 linear bands are
    /// narrower than the 40 Hz bins of a 25 ms window and need ≥ 40 ms.
    pub band_window_ms: Option<f64>,
    pub mel_f_min: f64,
    /// Defaults to half the audio rate.
    pub mel_f_max: Option<f64>,
}

impl Default for Features {
    fn default() -> Self {
        Self {
            kind: FeatureKind::DiagE,
            hop_ms: 20.0,
            window_ms: 25.0,
            ridge_rel: 1e-6,
            bands: BandMode::Log5,
            band_window_ms: None,
            mel_f_min: 20.0,
            mel_f_max: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Cluster {
    pub metrics: Vec<Metric>,
    pub max_iter: usize,
    /// Reference subtraction and bandpass (per `[preprocess]`) before the
    /// per-item covariance.
    pub preprocess: bool,
}

impl Default for Cluster {
    fn default() -> Self {
        Self {
            metrics: vec![Metric::Geodesic, Metric::EuclideanDiag],
            max_iter: 100,
            preprocess: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Probe {
    /// Predictor: `ss-h` (per-layer containers when listed) or `mel-a`.
    pub source: FeatureKind,
    pub target: FeatureKind,
    pub lambdas: Vec<f64>,
    /// Largest tolerated frame-count difference per utterance pair; the
    /// longer sequence is truncated.
    pub frame_slack: usize,
    /// Full-covariance targets are ill-posed; opt in explicitly.
    pub allow_vec_e: bool,
}

impl Default for Probe {
    fn default() -> Self {
        Self {
            source: FeatureKind::SsH,
            target: FeatureKind::DiagE,
            lambdas: DEFAULT_LAMBDAS.to_vec(),
            frame_slack: 2,
            allow_vec_e: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Quantize {
    pub units: usize,
    /// Index into each utterance's `layers`; ignored when it has none and
    /// the `ss-h` feature is used instead.
    pub layer: usize,
    pub max_iter: usize,
    pub tol: f64,
    pub collapse: bool,
    /// Existing codebook to apply instead of fitting one.
    pub codebook: Option<PathBuf>,
}

impl Default for Quantize {
    fn default() -> Self {
        Self {
            units: DEFAULT_UNITS,
            layer: 6,
            max_iter: DEFAULT_MAX_ITER,
            tol: DEFAULT_TOL,
            collapse: false,
            codebook: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Model {
    pub hidden: usize,
    pub blocks: usize,
    pub kernel: usize,
    pub target: VocabKind,
}

impl Default for Model {
    fn default() -> Self {
        Self {
            hidden: DEFAULT_HIDDEN,
            blocks: DEFAULT_BLOCKS,
            kernel: DEFAULT_KERNEL,
            target: VocabKind::Units,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Decode {
    pub split: Split,
    /// Printed per unit transcript; `{units}` and `{wav}` are substituted.
    pub vocoder_command: String,
}

impl Default for Decode {
    fn default() -> Self {
        Self {
            split: Split::Test,
            vocoder_command: "unit-vocoder --units {units} --output {wav}".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SynthTask {
    /// Label sequences with per-label feature templates.
    Sequence,
    /// Planted SPD gesture clusters as recordings.
    Gestures,
    /// Planted linear map from `ss-h` frames to `diag-e` frames.
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Synth {
    pub task: SynthTask,
    pub spec: SynthSpec,
    /// Predictor width for the linear task.
    pub d_in: usize,
    /// Target correlation for the linear task.
    pub r: f64,
    /// Frames per utterance for the linear task.
    pub utterance_frames: usize,
}

impl Default for Synth {
    fn default() -> Self {
        Self {
            task: SynthTask::Sequence,
            spec: SynthSpec::default(),
            d_in: 768,
            r: 0.85,
            utterance_frames: 500,
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::new("missing_input", format!("config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::new("config", e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::new("config", m));
        if self.features.kind == FeatureKind::SsH {
            return bad("features.kind: ss-h features are ingested, not computed".into());
        }
        if !(self.features.hop_ms > 0.0 && self.features.window_ms > 0.0) {
            return bad("features.hop_ms and window_ms must be positive".into());
        }
        if self.features.band_window_ms.is_some_and(|w| !(w > 0.0)) {
            return bad("features.band_window_ms must be positive".into());
        }
        if !(self.features.ridge_rel >= 0.0) {
            return bad("features.ridge_rel must be ≥ 0".into());
        }
        if self.probe.lambdas.is_empty() || self.probe.lambdas.iter().any(|l| !(*l > 0.0)) {
            return bad("probe.lambdas must be a non-empty list of positive values".into());
        }
        if !matches!(self.probe.source, FeatureKind::SsH | FeatureKind::MelA) {
            return bad("probe.source must be ss-h or mel-a".into());
        }
        if !self.probe.target.is_emg() {
            return bad("probe.target must be diag-e, vec-b or vec-e".into());
        }
        if self.quantize.units == 0 {
            return bad("quantize.units must be ≥ 1".into());
        }
        if self.cluster.metrics.is_empty() {
            return bad("cluster.metrics must not be empty".into());
        }
        if !(self.synth.r > 0.0 && self.synth.r <= 1.0) || self.synth.d_in == 0 || self.synth.utterance_frames < 2 {
            return bad("synth.r must be in (0, 1], d_in ≥ 1 and utterance_frames ≥ 2".into());
        }
        self.train.validate()?;
        self.synth.spec.validate()?;
        Ok(())
    }
}
