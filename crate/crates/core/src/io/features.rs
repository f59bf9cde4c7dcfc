//! Time-major feature sequences.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::container::{read_container, write_container, ContainerKind, Header};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

pub const DEFAULT_HOP_MS: f64 = 20.0;
pub const DEFAULT_WINDOW_MS: f64 = 25.0;
pub const MEL_BANDS: usize = 80;
pub const SS_DIMS: [usize; 2] = [768, 1024];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureKind {
    /// Flattened covariance, `V²`.
    #[serde(rename = "vec-e")]
    VecE,
    /// Covariance diagonal, `V`.
    #[serde(rename = "diag-e")]
    DiagE,
    /// Band power, channel-major, `V·B`.
    #[serde(rename = "vec-b")]
    VecB,
    /// 80-band mel spectrogram.
    #[serde(rename = "mel-a")]
    MelA,
    /// Self-supervised speech model hidden states, ingested from files.
    #[serde(rename = "ss-h")]
    SsH,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 5] = [Self::VecE, Self::DiagE, Self::VecB, Self::MelA, Self::SsH];

    pub fn name(self) -> &'static str {
        match self {
            Self::VecE => "vec-e",
            Self::DiagE => "diag-e",
            Self::VecB => "vec-b",
            Self::MelA => "mel-a",
            Self::SsH => "ss-h",
        }
    }

    fn container(self) -> ContainerKind {
        match self {
            Self::VecE => ContainerKind::VecE,
            Self::DiagE => ContainerKind::DiagE,
            Self::VecB => ContainerKind::VecB,
            Self::MelA => ContainerKind::MelA,
            Self::SsH => ContainerKind::SsH,
        }
    }

    fn from_container(k: ContainerKind) -> Result<Self> {
        Ok(match k {
            ContainerKind::VecE => Self::VecE,
            ContainerKind::DiagE => Self::DiagE,
            ContainerKind::VecB => Self::VecB,
            ContainerKind::MelA => Self::MelA,
            ContainerKind::SsH => Self::SsH,
            other => return Err(Error::Format(format!("{other:?} is not a feature kind"))),
        })
    }

    /// Whether features carry a per-electrode structure.
    pub fn is_emg(self) -> bool {
        matches!(self, Self::VecE | Self::DiagE | Self::VecB)
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown feature kind {s:?}")))
    }
}

/// `T × d` frames emitted every `hop_ms` with `window_ms` context.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSequence {
    pub frames: Matrix<f32>,
    pub kind: FeatureKind,
    pub hop_ms: f64,
    pub window_ms: f64,
    /// Electrode count for EMG kinds.
    pub electrodes: usize,
    /// Bands per electrode for `VecB`.
    pub bands: usize,
}

impl FeatureSequence {
    pub fn new(kind: FeatureKind, frames: Matrix<f32>, electrodes: usize, bands: usize) -> Result<Self> {
        let seq = Self {
            frames,
            kind,
            hop_ms: DEFAULT_HOP_MS,
            window_ms: DEFAULT_WINDOW_MS,
            electrodes,
            bands,
        };
        seq.validate()?;
        Ok(seq)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.frames.rows()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.frames.rows() == 0
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.frames.cols()
    }

    /// Feature width implied by kind and electrode layout.
    pub fn expected_dim(kind: FeatureKind, electrodes: usize, bands: usize) -> Option<usize> {
        match kind {
            FeatureKind::DiagE => Some(electrodes),
            FeatureKind::VecE => Some(electrodes * electrodes),
            FeatureKind::VecB => Some(electrodes * bands),
            FeatureKind::MelA => Some(MEL_BANDS),
            FeatureKind::SsH => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.frames.rows() == 0 {
            return Err(Error::Format("T must be ≥ 1".into()));
        }
        if !(self.hop_ms > 0.0 && self.window_ms > 0.0) {
            return Err(Error::Format("hop and window must be positive".into()));
        }
        let d = self.dim();
        let ok = match self.kind {
            FeatureKind::SsH => SS_DIMS.contains(&d),
            FeatureKind::VecB if self.bands == 0 => false,
            k => {
                (!k.is_emg() || self.electrodes > 0)
                    && Self::expected_dim(k, self.electrodes, self.bands) == Some(d)
            }
        };
        if !ok {
            return Err(Error::Format(format!(
                "{} features with d={d} do not match V={} B={}",
                self.kind, self.electrodes, self.bands
            )));
        }
        Ok(())
    }

    /// Drops frames past `n`.
    pub fn truncate(&mut self, n: usize) {
        self.frames.truncate_rows(n);
    }
}

pub fn save_feature_sequence(seq: &FeatureSequence, path: &Path) -> Result<()> {
    seq.validate()?;
    let mut h = Header::new(seq.kind.container(), seq.len(), seq.dim());
    h.rate = seq.hop_ms;
    h.window = seq.window_ms;
    h.aux0 = seq.electrodes as u32;
    h.aux1 = seq.bands as u32;
    write_container(path, &h, &seq.frames)
}

/// Loads a feature container. When `electrodes` is given, the file must
/// agree with it (manifest-declared `V`).
pub fn load_feature_sequence(path: &Path, electrodes: Option<usize>) -> Result<FeatureSequence> {
    let (h, frames) = read_container(path)?;
    let kind = FeatureKind::from_container(h.kind)?;
    let seq = FeatureSequence {
        frames,
        kind,
        hop_ms: h.rate,
        window_ms: h.window,
        electrodes: h.aux0 as usize,
        bands: h.aux1 as usize,
    };
    seq.validate()?;
    if let Some(v) = electrodes {
        if kind.is_emg() && seq.electrodes != v {
            return Err(Error::Format(format!(
                "{}: {kind} file has V={} (d={}) but manifest declares V={v}",
                path.display(),
                seq.electrodes,
                seq.dim()
            )));
        }
    }
    Ok(seq)
}
