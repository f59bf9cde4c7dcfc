//! Butterworth bandpass design as cascaded second-order sections, and
//! zero-phase (forward-backward) application.
//!
//! The analog low-pass prototype of order `N` is shifted to a bandpass with
//! pre-warped edges and mapped to the z-plane with the bilinear transform.
//! The resulting `2N` poles are grouped into `N` biquads, each carrying one
//! zero at `z = 1` and one at `z = -1`.

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    pub order: usize,
    pub f_lo: f64,
    pub f_hi: f64,
    pub fs: f64,
}

impl FilterSpec {
    /// Third-order 80–1000 Hz bandpass.
    pub fn emg(fs: f64) -> Self {
        Self {
            order: 3,
            f_lo: 80.0,
            f_hi: 1000.0,
            fs,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.order == 0 {
            return Err(Error::InvalidArgument("filter order must be ≥ 1".into()));
        }
        if !(0.0 < self.f_lo && self.f_lo < self.f_hi && self.f_hi < self.fs / 2.0) {
            return Err(Error::InvalidArgument(format!(
                "need 0 < f_lo < f_hi < fs/2, got f_lo={} f_hi={} fs={}",
                self.f_lo, self.f_hi, self.fs
            )));
        }
        Ok(())
    }

    /// Minimum signal length accepted by [`Sos::filtfilt`]:
    /// three times the number of filter states (`2 * order`).
    pub fn warmup_len(&self) -> usize {
        3 * self.order * 2
    }
}

/// One biquad `b0 + b1 z⁻¹ + b2 z⁻²` over `1 + a1 z⁻¹ + a2 z⁻²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Biquad {
    pub b: [f64; 3],
    pub a: [f64; 3],
}

impl Biquad {
    pub fn response(&self, z: Complex64) -> Complex64 {
        let zi = z.inv();
        let num = self.b[0] + self.b[1] * zi + self.b[2] * zi * zi;
        let den = self.a[0] + self.a[1] * zi + self.a[2] * zi * zi;
        num / den
    }

    /// DC steady-state gain.
    fn dc_gain(&self) -> f64 {
        self.b.iter().sum::<f64>() / self.a.iter().sum::<f64>()
    }
}

/// Cascade of second-order sections.
#[derive(Debug, Clone, PartialEq)]
pub struct Sos {
    pub sections: Vec<Biquad>,
    pub warmup: usize,
}

impl Sos {
    pub fn butterworth_bandpass(spec: &FilterSpec) -> Result<Self> {
        spec.validate()?;
        let n = spec.order;
        let fs2 = 2.0 * spec.fs;
        let w_lo = fs2 * (std::f64::consts::PI * spec.f_lo / spec.fs).tan();
        let w_hi = fs2 * (std::f64::consts::PI * spec.f_hi / spec.fs).tan();
        let bw = w_hi - w_lo;
        let w0_sq = w_lo * w_hi;

        // Analog bandpass poles: each prototype pole p yields the two roots
        // of s² - p·bw·s + w0² = 0.
        let mut analog = Vec::with_capacity(2 * n);
        for k in 0..n {
            let theta = std::f64::consts::PI * (2 * k + n + 1) as f64 / (2 * n) as f64;
            let p = Complex64::from_polar(1.0, theta);
            let half = p * bw / 2.0;
            let disc = (half * half - w0_sq).sqrt();
            analog.push(half + disc);
            analog.push(half - disc);
        }
        let digital: Vec<Complex64> = analog.iter().map(|&s| (fs2 + s) / (fs2 - s)).collect();

        // Gain of the full bilinear zpk system (N zeros at s = 0 plus N at
        // infinity in the analog domain).
        let mut gain = Complex64::new(bw.powi(n as i32), 0.0);
        for _ in 0..n {
            gain *= fs2; // zero at s = 0: (fs2 - 0)
        }
        for &s in &analog {
            gain /= fs2 - s;
        }
        let gain = gain.re;

        let mut sections = Vec::with_capacity(n);
        for (pa, pb) in pair_poles(&digital) {
            let a1 = -(pa + pb).re;
            let a2 = (pa * pb).re;
            sections.push(Biquad {
                b: [1.0, 0.0, -1.0],
                a: [1.0, a1, a2],
            });
        }
        if let Some(first) = sections.first_mut() {
            first.b.iter_mut().for_each(|c| *c *= gain);
        }
        Ok(Self {
            sections,
            warmup: spec.warmup_len(),
        })
    }

    /// Complex response at `f` Hz for sampling rate `fs`.
    pub fn response(&self, f: f64, fs: f64) -> Complex64 {
        let z = Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * f / fs);
        self.sections
            .iter()
            .fold(Complex64::new(1.0, 0.0), |acc, s| acc * s.response(z))
    }

    /// Single-pass causal filtering (transposed direct form II) with
    /// optional per-section initial states.
    fn filter_in_place(&self, x: &mut [f64], zi: Option<&[[f64; 2]]>) {
        for (k, s) in self.sections.iter().enumerate() {
            let [b0, b1, b2] = s.b;
            let [_, a1, a2] = s.a;
            let (mut z1, mut z2) = zi.map_or((0.0, 0.0), |z| (z[k][0], z[k][1]));
            for v in x.iter_mut() {
                let xin = *v;
                let y = b0 * xin + z1;
                z1 = b1 * xin - a1 * y + z2;
                z2 = b2 * xin - a2 * y;
                *v = y;
            }
        }
    }

    /// Per-section states that make a constant unit input a steady state.
    fn step_states(&self) -> Vec<[f64; 2]> {
        let mut level = 1.0;
        self.sections
            .iter()
            .map(|s| {
                let y = s.dc_gain() * level;
                let z2 = s.b[2] * level - s.a[2] * y;
                let z1 = y - s.b[0] * level;
                level = y;
                [z1, z2]
            })
            .collect()
    }

    /// Zero-phase filtering: forward pass, then backward pass over the
    /// reversed output. Both ends are extended by odd reflection over
    /// `warmup` samples and the filter starts from steady state, so the
    /// magnitude response is `|H(f)|²` and the phase is zero.
    pub fn filtfilt<T: Real>(&self, x: &[T]) -> Result<Vec<T>> {
        let n = x.len();
        let pad = self.warmup;
        if n <= pad {
            return Err(Error::InvalidArgument(format!(
                "signal of {n} samples is shorter than the filter warm-up length {pad}"
            )));
        }
        let xs: Vec<f64> = x.iter().map(|v| v.as_f64()).collect();
        let mut ext = Vec::with_capacity(n + 2 * pad);
        let (x0, xn) = (xs[0], xs[n - 1]);
        ext.extend((1..=pad).rev().map(|i| 2.0 * x0 - xs[i]));
        ext.extend_from_slice(&xs);
        ext.extend((1..=pad).map(|i| 2.0 * xn - xs[n - 1 - i]));

        let unit = self.step_states();
        let scaled = |v: f64| unit.iter().map(|z| [z[0] * v, z[1] * v]).collect::<Vec<_>>();

        let zi = scaled(ext[0]);
        self.filter_in_place(&mut ext, Some(&zi));
        ext.reverse();
        let zi = scaled(ext[0]);
        self.filter_in_place(&mut ext, Some(&zi));
        ext.reverse();
        Ok(ext[pad..pad + n].iter().map(|&v| T::of(v)).collect())
    }
}

/// Groups poles into conjugate pairs; leftover real poles are paired in
/// sorted order.
fn pair_poles(poles: &[Complex64]) -> Vec<(Complex64, Complex64)> {
    const IMAG_EPS: f64 = 1e-12;
    let mut pairs = Vec::new();
    let mut reals = Vec::new();
    for &p in poles {
        if p.im > IMAG_EPS {
            pairs.push((p, p.conj()));
        } else if p.im.abs() <= IMAG_EPS {
            reals.push(p.re);
        }
    }
    reals.sort_by(f64::total_cmp);
    for c in reals.chunks(2) {
        let second = c.get(1).copied().unwrap_or(0.0);
        pairs.push((Complex64::new(c[0], 0.0), Complex64::new(second, 0.0)));
    }
    pairs
}

#[cfg(test)]
mod tests {
    use super::*;

    fn design() -> Sos {
        Sos::butterworth_bandpass(&FilterSpec::emg(5000.0)).unwrap()
    }

    #[test]
    fn section_count_and_stability() {
        let sos = design();
        assert_eq!(sos.sections.len(), 3);
        for s in &sos.sections {
            // |poles| < 1 ⟺ |a2| < 1 and |a1| < 1 + a2
            assert!(s.a[2].abs() < 1.0 && s.a[1].abs() < 1.0 + s.a[2], "{s:?}");
        }
    }

    #[test]
    fn invalid_specs() {
        let mut spec = FilterSpec::emg(5000.0);
        spec.f_hi = 2600.0;
        assert!(Sos::butterworth_bandpass(&spec).is_err());
        spec = FilterSpec::emg(5000.0);
        spec.f_lo = 1200.0;
        assert!(spec.validate().is_err());
    }

    #[test]
    fn short_signal_rejected() {
        let sos = design();
        assert!(sos.filtfilt(&[0.0f32; 18]).is_err());
        assert!(sos.filtfilt(&[0.0f32; 19]).is_ok());
    }

    #[test]
    fn zeros_stay_zero() {
        let y = design().filtfilt(&vec![0.0f64; 1000]).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn steady_state_states_hold_constant_input() {
        let sos = design();
        let zi = sos.step_states();
        let mut x = vec![1.0; 50];
        sos.filter_in_place(&mut x, Some(&zi));
        // bandpass has zero DC gain, so a steady unit input yields zeros
        assert!(x.iter().all(|v| v.abs() < 1e-12), "{x:?}");
    }
}
