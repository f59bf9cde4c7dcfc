//! Multichannel EMG recordings.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::container::{read_container, write_container, ContainerKind, Header};
use super::labels::LabelSequence;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Default acquisition rate in Hz.
pub const DEFAULT_FS: f64 = 5000.0;

/// Timestamp-segmented multichannel signal. `samples` is channels × time.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub samples: Matrix<f32>,
    pub fs: f64,
    pub channel_ids: Vec<String>,
    /// `None` once the reference has been subtracted and dropped.
    pub reference_channel: Option<String>,
    /// Half-open `[start, end)` sample ranges.
    pub segments: Vec<(usize, usize)>,
    pub transcript: String,
    pub phonemes: Option<LabelSequence>,
    pub units: Option<LabelSequence>,
}

/// Non-numeric recording fields, stored next to the container as
/// `<file>.json`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordingMeta {
    pub channel_ids: Vec<String>,
    #[serde(default)]
    pub reference_channel: Option<String>,
    #[serde(default)]
    pub segments: Vec<(usize, usize)>,
    #[serde(default)]
    pub transcript: String,
    #[serde(default)]
    pub phonemes: Option<LabelSequence>,
    #[serde(default)]
    pub units: Option<LabelSequence>,
}

impl Recording {
    /// Builds a recording whose last channel is the reference electrode.
    pub fn with_reference_last(samples: Matrix<f32>, fs: f64) -> Result<Self> {
        let v = samples.rows();
        let channel_ids: Vec<String> = (1..=v).map(|i| format!("E{i}")).collect();
        let reference = channel_ids.last().cloned();
        let rec = Self {
            samples,
            fs,
            channel_ids,
            reference_channel: reference,
            segments: Vec::new(),
            transcript: String::new(),
            phonemes: None,
            units: None,
        };
        rec.validate()?;
        Ok(rec)
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.samples.rows()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.samples.cols()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.samples.cols() == 0
    }

    pub fn reference_index(&self) -> Option<usize> {
        let r = self.reference_channel.as_ref()?;
        self.channel_ids.iter().position(|c| c == r)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fs > 0.0 && self.fs.is_finite()) {
            return Err(Error::InvalidArgument(format!("fs must be > 0, got {}", self.fs)));
        }
        if self.channel_ids.len() != self.channels() {
            return Err(Error::Format(format!(
                "{} channel ids for {} channels",
                self.channel_ids.len(),
                self.channels()
            )));
        }
        let min_channels = if self.reference_channel.is_some() { 2 } else { 1 };
        if self.channels() < min_channels {
            return Err(Error::Format(format!(
                "need at least {min_channels} channels, got {}",
                self.channels()
            )));
        }
        if let Some(r) = &self.reference_channel {
            if self.reference_index().is_none() {
                return Err(Error::Format(format!("reference channel {r:?} not present")));
            }
        }
        for &(s, e) in &self.segments {
            if !(s < e && e <= self.len()) {
                return Err(Error::Format(format!(
                    "segment [{s}, {e}) outside recording of {} samples",
                    self.len()
                )));
            }
        }
        Ok(())
    }

    /// Copies samples `[start, end)`; segments are dropped.
    pub fn crop(&self, start: usize, end: usize) -> Result<Self> {
        if !(start < end && end <= self.len()) {
            return Err(Error::InvalidArgument(format!(
                "crop [{start}, {end}) outside recording of {} samples",
                self.len()
            )));
        }
        let samples = Matrix::from_fn(self.channels(), end - start, |c, t| {
            self.samples[(c, start + t)]
        });
        Ok(Self {
            samples,
            segments: Vec::new(),
            ..self.clone()
        })
    }

    fn meta(&self) -> RecordingMeta {
        RecordingMeta {
            channel_ids: self.channel_ids.clone(),
            reference_channel: self.reference_channel.clone(),
            segments: self.segments.clone(),
            transcript: self.transcript.clone(),
            phonemes: self.phonemes.clone(),
            units: self.units.clone(),
        }
    }
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Writes the container and its metadata sidecar.
pub fn save_recording(rec: &Recording, path: &Path) -> Result<()> {
    rec.validate()?;
    let mut h = Header::new(ContainerKind::Recording, rec.channels(), rec.len());
    h.rate = rec.fs;
    h.aux0 = rec.reference_index().map_or(0, |i| i as u32 + 1);
    write_container(path, &h, &rec.samples)?;
    fs::write(meta_path(path), serde_json::to_vec_pretty(&rec.meta())?)?;
    Ok(())
}

/// Reads a recording container. Channels are rows (channel-major). Without a
/// sidecar, channels are named `E1..EV` and the header's reference index is
/// used.
pub fn load_recording(path: &Path) -> Result<Recording> {
    let (h, samples) = read_container(path)?;
    if h.kind != ContainerKind::Recording {
        return Err(Error::Format(format!(
            "{} holds {:?}, not a recording",
            path.display(),
            h.kind
        )));
    }
    let mp = meta_path(path);
    let meta = if mp.exists() {
        serde_json::from_slice::<RecordingMeta>(&fs::read(&mp)?)?
    } else {
        let ids: Vec<String> = (1..=samples.rows()).map(|i| format!("E{i}")).collect();
        let reference = match h.aux0 {
            0 => None,
            i => ids.get(i as usize - 1).cloned(),
        };
        RecordingMeta {
            channel_ids: ids,
            reference_channel: reference,
            ..Default::default()
        }
    };
    let rec = Recording {
        samples,
        fs: h.rate,
        channel_ids: meta.channel_ids,
        reference_channel: meta.reference_channel,
        segments: meta.segments,
        transcript: meta.transcript,
        phonemes: meta.phonemes,
        units: meta.units,
    };
    rec.validate()?;
    Ok(rec)
}

/// Single-channel audio waveform container.
pub fn save_waveform(samples: &[f32], fs: f64, path: &Path) -> Result<()> {
    let mut h = Header::new(ContainerKind::Audio, 1, samples.len());
    h.rate = fs;
    write_container(path, &h, &Matrix::from_vec(1, samples.len(), samples.to_vec())?)
}

pub fn load_waveform(path: &Path) -> Result<(Vec<f32>, f64)> {
    let (h, m) = read_container(path)?;
    if h.kind != ContainerKind::Audio || h.rows != 1 {
        return Err(Error::Format(format!(
            "{} is not a single-channel audio container",
            path.display()
        )));
    }
    Ok((m.into_vec(), h.rate))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_second() -> Recording {
        let m = Matrix::from_fn(32, 5000, |c, t| ((c * 7919 + t) % 113) as f32 * 1e-3 - 0.05);
        Recording::with_reference_last(m, DEFAULT_FS).unwrap()
    }

    #[test]
    fn load_echoes_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.bin");
        let rec = one_second();
        save_recording(&rec, &p).unwrap();
        std::fs::remove_file(meta_path(&p)).unwrap();
        let back = load_recording(&p).unwrap();
        assert_eq!(back.channels(), 32);
        assert_eq!(back.len(), 5000);
        assert_eq!(back.fs, 5000.0);
        assert_eq!(back.reference_channel.as_deref(), Some("E32"));
        assert_eq!(back.samples, rec.samples);
    }

    #[test]
    fn truncated_file_is_a_sample_count_mismatch() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.bin");
        save_recording(&one_second(), &p).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 2]).unwrap();
        let err = load_recording(&p).unwrap_err();
        assert!(err.to_string().contains("sample count mismatch"), "{err}");
    }

    #[test]
    fn segments_are_validated() {
        let mut rec = one_second();
        rec.segments = vec![(0, 100), (4000, 5001)];
        assert!(rec.validate().is_err());
        rec.segments = vec![(10, 10)];
        assert!(rec.validate().is_err());
    }

    #[test]
    fn single_channel_with_reference_rejected() {
        let m = Matrix::zeros(1, 10);
        assert!(Recording::with_reference_last(m, 5000.0).is_err());
    }
}
