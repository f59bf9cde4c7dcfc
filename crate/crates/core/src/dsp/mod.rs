//! Signal preprocessing and spectral featurization.

mod butterworth;
mod framing;
mod spectral;

pub use butterworth::{Biquad, FilterSpec, Sos};
pub use framing::{frame, frame_bounds, frame_count, ms_to_samples};
pub use spectral::{
    emg_band_power, hann, hz_to_mel, mel_power_frames, mel_spectrogram, mel_to_hz, BandLayout,
    BandMode, MelFilterbank, Stft,
};

use crate::error::{Error, Result};
use crate::io::Recording;
use crate::matrix::Matrix;

/// Subtracts the reference electrode from every data channel and drops it.
pub fn subtract_reference(rec: &Recording) -> Result<Recording> {
    let r = rec
        .reference_index()
        .ok_or_else(|| Error::InvalidArgument("recording has no reference channel".into()))?;
    let reference = rec.samples.row(r);
    let keep: Vec<usize> = (0..rec.channels()).filter(|&c| c != r).collect();
    let mut samples = Matrix::zeros(keep.len(), rec.len());
    for (o, &c) in keep.iter().enumerate() {
        for ((y, &x), &x_ref) in samples.row_mut(o).iter_mut().zip(rec.samples.row(c)).zip(reference) {
            *y = x - x_ref;
        }
    }
    Ok(Recording {
        samples,
        channel_ids: keep.iter().map(|&c| rec.channel_ids[c].clone()).collect(),
        reference_channel: None,
        ..rec.clone()
    })
}

/// Zero-phase Butterworth bandpass of every channel.
pub fn bandpass(rec: &Recording, spec: &FilterSpec) -> Result<Recording> {
    if (spec.fs - rec.fs).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "filter designed for {} Hz applied to a {} Hz recording",
            spec.fs, rec.fs
        )));
    }
    let sos = Sos::butterworth_bandpass(spec)?;
    let mut samples = Matrix::zeros(rec.channels(), rec.len());
    for c in 0..rec.channels() {
        let y = sos.filtfilt(rec.samples.row(c))?;
        samples.row_mut(c).copy_from_slice(&y);
    }
    Ok(Recording {
        samples,
        ..rec.clone()
    })
}
