//! How flat feature vectors map onto electrodes, for circular electrode
//! shifts.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::FeatureKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "layout")]
pub enum ChannelLayout {
    /// One value per electrode.
    Diag { electrodes: usize },
    /// Channel-major band powers, `bands` values per electrode.
    BandPower { electrodes: usize, bands: usize },
    /// Row-major `V × V` covariance; a shift permutes rows and columns.
    FullCov { electrodes: usize },
}

impl ChannelLayout {
    pub fn for_kind(kind: FeatureKind, electrodes: usize, bands: usize) -> Result<Self> {
        if electrodes == 0 {
            return Err(Error::InvalidArgument("channel layout needs ≥ 1 electrode".into()));
        }
        match kind {
            FeatureKind::DiagE => Ok(Self::Diag { electrodes }),
            FeatureKind::VecB => Ok(Self::BandPower { electrodes, bands }),
            FeatureKind::VecE => Ok(Self::FullCov { electrodes }),
            other => Err(Error::InvalidArgument(format!(
                "no electrode layout for {other} features"
            ))),
        }
    }

    /// The EMG feature kind this layout describes.
    pub fn feature_kind(&self) -> FeatureKind {
        match self {
            Self::Diag { .. } => FeatureKind::DiagE,
            Self::BandPower { .. } => FeatureKind::VecB,
            Self::FullCov { .. } => FeatureKind::VecE,
        }
    }

    pub fn electrodes(&self) -> usize {
        match *self {
            Self::Diag { electrodes } | Self::BandPower { electrodes, .. } | Self::FullCov { electrodes } => {
                electrodes
            }
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            Self::Diag { electrodes } => electrodes,
            Self::BandPower { electrodes, bands } => electrodes * bands,
            Self::FullCov { electrodes } => electrodes * electrodes,
        }
    }

    /// Gather indices for a circular shift by `s` electrodes:
    /// `shifted[k] = x[perm[k]]`, where electrode `e` of the output reads
    /// electrode `e − s (mod V)` of the input.
    pub fn shift_permutation(&self, s: isize) -> Vec<usize> {
        let v = self.electrodes() as isize;
        let src = |e: usize| (e as isize - s).rem_euclid(v) as usize;
        match *self {
            Self::Diag { electrodes } => (0..electrodes).map(src).collect(),
            Self::BandPower { electrodes, bands } => (0..electrodes)
                .flat_map(|e| (0..bands).map(move |b| src(e) * bands + b))
                .collect(),
            Self::FullCov { electrodes } => (0..electrodes)
                .flat_map(|i| (0..electrodes).map(move |j| src(i) * electrodes + src(j)))
                .collect(),
        }
    }
}
