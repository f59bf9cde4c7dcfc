use crate::error::{Error, Result};
use crate::io::Recording;
use crate::matrix::Matrix;

/// Converts a duration in milliseconds to whole samples.
pub fn ms_to_samples(ms: f64, fs: f64) -> usize {
    (ms * fs / 1000.0).round() as usize
}

/// `floor((n - window) / hop) + 1`, without padding.
pub fn frame_count(n: usize, hop: usize, window: usize) -> Result<usize> {
    if hop == 0 || window == 0 {
        return Err(Error::InvalidArgument("hop and window must be ≥ 1 sample".into()));
    }
    if n < window {
        return Err(Error::InvalidArgument(format!(
            "signal of {n} samples is shorter than one window of {window}"
        )));
    }
    Ok((n - window) / hop + 1)
}

/// Frame `t` covers samples `[t·hop, t·hop + window)`.
pub fn frame_bounds(n: usize, hop: usize, window: usize) -> Result<Vec<(usize, usize)>> {
    let count = frame_count(n, hop, window)?;
    Ok((0..count).map(|t| (t * hop, t * hop + window)).collect())
}

/// Slices a recording into `V × window` frames.
pub fn frame(rec: &Recording, hop_ms: f64, window_ms: f64) -> Result<Vec<Matrix<f32>>> {
    let hop = ms_to_samples(hop_ms, rec.fs);
    let window = ms_to_samples(window_ms, rec.fs);
    let bounds = frame_bounds(rec.len(), hop, window)?;
    Ok(bounds
        .into_iter()
        .map(|(s, e)| Matrix::from_fn(rec.channels(), e - s, |c, t| rec.samples[(c, s + t)]))
        .collect())
}
