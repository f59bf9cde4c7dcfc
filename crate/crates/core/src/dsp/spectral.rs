//! Short-time spectra: EMG band power and audio mel spectrograms.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::framing::{frame_bounds, ms_to_samples};
use crate::error::{Error, Result};
use crate::io::{FeatureKind, FeatureSequence, Recording, MEL_BANDS};
use crate::matrix::Matrix;

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Hann-windowed power spectra of fixed-length frames, zero-padded to the
/// next power of two. Power is `|X_k|² / n_fft` for bins `0..=n_fft/2`, so
/// the bins of one frame sum to at most the frame's energy.
pub struct Stft {
    window: Vec<f64>,
    n_fft: usize,
    fft: Arc<dyn Fft<f64>>,
    buf: Vec<Complex64>,
}

impl Stft {
    pub fn new(window_len: usize) -> Self {
        let n_fft = window_len.next_power_of_two();
        let fft = FftPlanner::new().plan_fft_forward(n_fft);
        Self {
            window: hann(window_len),
            n_fft,
            fft,
            buf: vec![Complex64::default(); n_fft],
        }
    }

    #[inline]
    pub fn n_fft(&self) -> usize {
        self.n_fft
    }

    #[inline]
    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn bin_hz(&self, k: usize, fs: f64) -> f64 {
        k as f64 * fs / self.n_fft as f64
    }

    pub fn power(&mut self, frame: &[f32], out: &mut [f64]) {
        debug_assert_eq!(frame.len(), self.window.len());
        for (b, (&x, &w)) in self.buf.iter_mut().zip(frame.iter().zip(&self.window)) {
            *b = Complex64::new(x as f64 * w, 0.0);
        }
        for b in &mut self.buf[self.window.len()..] {
            *b = Complex64::default();
        }
        self.fft.process(&mut self.buf);
        let scale = 1.0 / self.n_fft as f64;
        for (o, x) in out.iter_mut().zip(&self.buf) {
            *o = x.norm_sqr() * scale;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandMode {
    Log5,
    Lin31,
}

/// Frequency bands for EMG band power, within 80–1000 Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct BandLayout {
    pub edges: Vec<(f64, f64)>,
    pub mode: BandMode,
}

impl BandLayout {
    pub fn log5() -> Self {
        Self {
            edges: vec![
                (80.0, 125.0),
                (125.0, 250.0),
                (250.0, 375.0),
                (375.0, 687.5),
                (687.5, 1000.0),
            ],
            mode: BandMode::Log5,
        }
    }

    pub fn lin31() -> Self {
        let step = (1000.0 - 80.0) / 31.0;
        let edges = (0..31)
            .map(|i| {
                let lo = 80.0 + step * i as f64;
                let hi = if i == 30 { 1000.0 } else { 80.0 + step * (i + 1) as f64 };
                (lo, hi)
            })
            .collect();
        Self {
            edges,
            mode: BandMode::Lin31,
        }
    }

    pub fn from_mode(mode: BandMode) -> Self {
        match mode {
            BandMode::Log5 => Self::log5(),
            BandMode::Lin31 => Self::lin31(),
        }
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let mut prev_hi = 80.0;
        for &(lo, hi) in &self.edges {
            if !(lo < hi && lo >= prev_hi - 1e-9 && lo >= 80.0 && hi <= 1000.0) {
                return Err(Error::InvalidArgument(format!(
                    "bands must be ascending, non-overlapping and within [80, 1000] Hz; got [{lo}, {hi}]"
                )));
            }
            prev_hi = hi;
        }
        if self.edges.is_empty() {
            return Err(Error::InvalidArgument("empty band layout".into()));
        }
        Ok(())
    }

    /// FFT bins per band, by bin center frequency. A bin on a shared edge
    /// belongs to the lower band; the first band also owns its lower edge.
    pub fn assign_bins(&self, n_fft: usize, fs: f64) -> Result<Vec<Vec<usize>>> {
        self.validate()?;
        let resolution = fs / n_fft as f64;
        let narrowest = self
            .edges
            .iter()
            .map(|(lo, hi)| hi - lo)
            .fold(f64::INFINITY, f64::min);
        if resolution > narrowest {
            return Err(Error::InvalidArgument(format!(
                "FFT resolution {resolution:.2} Hz exceeds the narrowest band width {narrowest:.2} Hz; use a longer window"
            )));
        }
        let mut bins = vec![Vec::new(); self.edges.len()];
        for k in 0..=n_fft / 2 {
            let f = k as f64 * resolution;
            let band = self
                .edges
                .iter()
                .enumerate()
                .position(|(b, &(lo, hi))| (lo < f && f <= hi) || (b == 0 && f == lo));
            if let Some(b) = band {
                bins[b].push(k);
            }
        }
        if let Some(b) = bins.iter().position(Vec::is_empty) {
            return Err(Error::InvalidArgument(format!("band {b} contains no FFT bin")));
        }
        Ok(bins)
    }
}

/// Per frame and electrode, the Hann-windowed power spectrum averaged over
/// the bins of each band. Output is channel-major: `index = v·B + b`.
pub fn emg_band_power(
    rec: &Recording,
    layout: &BandLayout,
    hop_ms: f64,
    window_ms: f64,
) -> Result<FeatureSequence> {
    let hop = ms_to_samples(hop_ms, rec.fs);
    let window = ms_to_samples(window_ms, rec.fs);
    let bounds = frame_bounds(rec.len(), hop, window)?;
    let mut stft = Stft::new(window);
    let band_bins = layout.assign_bins(stft.n_fft(), rec.fs)?;
    let n_bands = layout.len();
    let v = rec.channels();
    let mut out = Matrix::zeros(bounds.len(), v * n_bands);
    let mut spec = vec![0.0; stft.n_bins()];
    for (t, &(s, e)) in bounds.iter().enumerate() {
        let row = out.row_mut(t);
        for c in 0..v {
            stft.power(&rec.samples.row(c)[s..e], &mut spec);
            for (b, bins) in band_bins.iter().enumerate() {
                let mean = bins.iter().map(|&k| spec[k]).sum::<f64>() / bins.len() as f64;
                row[c * n_bands + b] = mean as f32;
            }
        }
    }
    let mut seq = FeatureSequence::new(FeatureKind::VecB, out, v, n_bands)?;
    seq.hop_ms = hop_ms;
    seq.window_ms = window_ms;
    Ok(seq)
}

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular HTK-scale filterbank with rows normalized to unit sum.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    pub weights: Matrix<f64>,
    /// Band center frequencies in Hz.
    pub centers: Vec<f64>,
}

impl MelFilterbank {
    pub fn new(fs: f64, n_fft: usize, n_mels: usize, f_min: f64, f_max: f64) -> Result<Self> {
        if f_max > fs / 2.0 + 1e-9 {
            return Err(Error::InvalidArgument(format!(
                "f_max {f_max} Hz exceeds the Nyquist frequency {} Hz",
                fs / 2.0
            )));
        }
        if !(0.0 <= f_min && f_min < f_max) || n_mels == 0 {
            return Err(Error::InvalidArgument(format!(
                "need 0 ≤ f_min < f_max and n_mels ≥ 1 (f_min={f_min}, f_max={f_max})"
            )));
        }
        let (m_lo, m_hi) = (hz_to_mel(f_min), hz_to_mel(f_max));
        let points: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(m_lo + (m_hi - m_lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let n_bins = n_fft / 2 + 1;
        let bin_hz = |k: usize| k as f64 * fs / n_fft as f64;
        let mut weights = Matrix::zeros(n_mels, n_bins);
        for m in 0..n_mels {
            let (lo, c, hi) = (points[m], points[m + 1], points[m + 2]);
            let row = weights.row_mut(m);
            for (k, w) in row.iter_mut().enumerate() {
                let f = bin_hz(k);
                let rise = (f - lo) / (c - lo);
                let fall = (hi - f) / (hi - c);
                *w = rise.min(fall).max(0.0);
            }
            let sum: f64 = row.iter().sum();
            if sum > 0.0 {
                row.iter_mut().for_each(|w| *w /= sum);
            } else {
                // Narrow low-frequency triangles can fall between bins.
                let nearest = ((c * n_fft as f64 / fs).round() as usize).min(n_bins - 1);
                row[nearest] = 1.0;
            }
        }
        Ok(Self {
            weights,
            centers: points[1..=n_mels].to_vec(),
        })
    }

    #[inline]
    pub fn n_mels(&self) -> usize {
        self.weights.rows()
    }
}

/// Mel band power frames for any band count.
pub fn mel_power_frames(
    audio: &[f32],
    fs: f64,
    n_mels: usize,
    f_min: f64,
    f_max: f64,
    hop_ms: f64,
    window_ms: f64,
) -> Result<Matrix<f32>> {
    if audio.is_empty() {
        return Err(Error::InvalidArgument("empty audio".into()));
    }
    let hop = ms_to_samples(hop_ms, fs);
    let window = ms_to_samples(window_ms, fs);
    let bounds = frame_bounds(audio.len(), hop, window)?;
    let mut stft = Stft::new(window);
    let bank = MelFilterbank::new(fs, stft.n_fft(), n_mels, f_min, f_max)?;
    let mut spec = vec![0.0; stft.n_bins()];
    let mut out = Matrix::zeros(bounds.len(), n_mels);
    for (t, &(s, e)) in bounds.iter().enumerate() {
        stft.power(&audio[s..e], &mut spec);
        for (m, o) in out.row_mut(t).iter_mut().enumerate() {
            let w = bank.weights.row(m);
            *o = w.iter().zip(&spec).map(|(a, b)| a * b).sum::<f64>() as f32;
        }
    }
    Ok(out)
}

/// 80-band mel spectrogram at 20 ms hop and 25 ms window. `f_max` defaults
/// to `fs / 2`.
pub fn mel_spectrogram(audio: &[f32], fs: f64, f_min: f64, f_max: Option<f64>) -> Result<FeatureSequence> {
    let f_max = f_max.unwrap_or(fs / 2.0);
    let frames = mel_power_frames(audio, fs, MEL_BANDS, f_min, f_max, 20.0, 25.0)?;
    FeatureSequence::new(FeatureKind::MelA, frames, 0, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log5_edges() {
        let l = BandLayout::log5();
        assert_eq!(l.edges[3], (375.0, 687.5));
        l.validate().unwrap();
        let l31 = BandLayout::lin31();
        assert_eq!(l31.len(), 31);
        l31.validate().unwrap();
    }

    #[test]
    fn tie_goes_to_lower_band() {
        let layout = BandLayout {
            edges: vec![(80.0, 125.0), (125.0, 250.0)],
            mode: BandMode::Log5,
        };
        // n_fft = 200 at fs = 5000 puts bin 5 exactly on 125 Hz
        let bins = layout.assign_bins(200, 5000.0).unwrap();
        assert!(bins[0].contains(&5));
        assert!(!bins[1].contains(&5));
    }

    #[test]
    fn lin31_unresolvable_at_25ms() {
        // 128-point FFT at 5 kHz: 39 Hz bins vs 29.7 Hz bands
        let err = BandLayout::lin31().assign_bins(128, 5000.0).unwrap_err();
        assert!(err.to_string().contains("resolution"));
        assert!(BandLayout::lin31().assign_bins(512, 5000.0).is_ok());
    }

    #[test]
    fn filterbank_rows_sum_to_one() {
        let bank = MelFilterbank::new(16000.0, 512, 80, 20.0, 8000.0).unwrap();
        for m in 0..80 {
            let s: f64 = bank.weights.row(m).iter().sum();
            assert!((s - 1.0).abs() < 1e-6, "row {m} sums to {s}");
        }
        assert!(MelFilterbank::new(16000.0, 512, 80, 20.0, 8001.0).is_err());
    }

    #[test]
    fn htk_scale_round_trip() {
        assert!((hz_to_mel(700.0) - 2595.0 * 2f64.log10()).abs() < 1e-9);
        for f in [20.0, 440.0, 8000.0] {
            assert!((mel_to_hz(hz_to_mel(f)) - f).abs() < 1e-9);
        }
    }
}
