use emgspeech::dsp::{
    bandpass, emg_band_power, mel_spectrogram, BandLayout, FilterSpec, MelFilterbank, Sos,
};
use emgspeech::io::Recording;
use emgspeech::Matrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const FS: f64 = 5000.0;

/// Analog Butterworth bandpass power response at the pre-warped frequency,
/// which the bilinear transform maps exactly onto the digital response.
fn analog_power(f: f64, spec: &FilterSpec) -> f64 {
    let warp = |hz: f64| 2.0 * spec.fs * (std::f64::consts::PI * hz / spec.fs).tan();
    let (w, w1, w2) = (warp(f), warp(spec.f_lo), warp(spec.f_hi));
    let x = (w * w - w1 * w2) / (w * (w2 - w1));
    1.0 / (1.0 + x.powi(2 * spec.order as i32))
}

fn sine(f: f64, n: usize, amp: f64) -> Vec<f32> {
    (0..n)
        .map(|i| (amp * (2.0 * std::f64::consts::PI * f * i as f64 / FS).sin()) as f32)
        .collect()
}

fn rms(x: &[f32]) -> f64 {
    (x.iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / x.len() as f64).sqrt()
}

fn interior(x: &[f32]) -> &[f32] {
    &x[x.len() / 4..3 * x.len() / 4]
}

fn one_channel(x: Vec<f32>) -> Recording {
    let n = x.len();
    let mut data = x;
    data.extend(std::iter::repeat_n(0.0, n));
    Recording::with_reference_last(Matrix::from_vec(2, n, data).unwrap(), FS).unwrap()
}

#[test]
fn digital_response_matches_prewarped_analog_prototype() {
    let spec = FilterSpec::emg(FS);
    let sos = Sos::butterworth_bandpass(&spec).unwrap();
    for f in [5.0, 10.0, 50.0, 80.0, 120.0, 300.0, 700.0, 1000.0, 1500.0, 2400.0] {
        let digital = sos.response(f, FS).norm_sqr();
        let analog = analog_power(f, &spec);
        assert!((digital - analog).abs() < 1e-9, "f={f}: {digital} vs {analog}");
    }
}

#[test]
fn passband_and_stopband_rms() {
    let spec = FilterSpec::emg(FS);
    for (f, band) in [(300.0, "pass"), (10.0, "stop"), (80.0, "edge")] {
        let x = sine(f, 20000, 1.0);
        let y = bandpass(&one_channel(x.clone()), &spec).unwrap();
        let ratio = rms(interior(y.samples.row(0))) / rms(interior(&x));
        // two passes: amplitude gain |H|², i.e. the one-pass power response
        let expected = analog_power(f, &spec);
        assert!((ratio - expected).abs() < 0.05, "{band} {f} Hz: {ratio} vs {expected}");
        match band {
            "pass" => assert!((ratio - 1.0).abs() < 0.05),
            "stop" => assert!(ratio < 0.05),
            _ => {}
        }
    }
}

#[test]
fn bandpass_is_linear() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let x: Vec<f64> = (0..3000).map(|_| normal.sample(&mut rng)).collect();
    let sos = Sos::butterworth_bandpass(&FilterSpec::emg(FS)).unwrap();
    let y = sos.filtfilt(&x).unwrap();
    for a in [-3.0, 0.5, 17.0] {
        let ax: Vec<f64> = x.iter().map(|v| a * v).collect();
        let ay = sos.filtfilt(&ax).unwrap();
        let num: f64 = ay.iter().zip(&y).map(|(p, q)| (p - a * q).powi(2)).sum::<f64>().sqrt();
        let den: f64 = y.iter().map(|q| (a * q).powi(2)).sum::<f64>().sqrt();
        assert!(num / den < 1e-6, "a={a}: rel {}", num / den);
    }
}

#[test]
fn white_noise_lin31_bands_are_flat() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let normal = Normal::new(0.0, 1.0).unwrap();
    // 1000 frames at 20 ms hop with a 100 ms window resolving 29.7 Hz bands
    let n = 999 * 100 + 500;
    let x: Vec<f32> = (0..n).map(|_| normal.sample(&mut rng) as f32).collect();
    let seq = emg_band_power(&one_channel(x), &BandLayout::lin31(), 20.0, 100.0).unwrap();
    assert_eq!(seq.len(), 1000);
    let mean: Vec<f64> = (0..31)
        .map(|b| (0..seq.len()).map(|t| seq.frames[(t, b)] as f64).sum::<f64>() / seq.len() as f64)
        .collect();
    let mu = mean.iter().sum::<f64>() / 31.0;
    let sd = (mean.iter().map(|m| (m - mu).powi(2)).sum::<f64>() / 31.0).sqrt();
    assert!(sd / mu < 0.2, "coefficient of variation {}", sd / mu);
}

#[test]
fn sine_power_concentrates_in_its_band() {
    // Leakage oracle: direct O(n²) DFT of the same Hann-windowed,
    // zero-padded frame, then the same band means.
    let n_fft = 128;
    let x = sine(300.0, 125, 1.0);
    let w: Vec<f64> = (0..125)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / 125.0).cos())
        .collect();
    let power: Vec<f64> = (0..=n_fft / 2)
        .map(|k| {
            let (mut re, mut im) = (0.0, 0.0);
            for (i, (&xi, &wi)) in x.iter().zip(&w).enumerate() {
                let ph = -2.0 * std::f64::consts::PI * (k * i) as f64 / n_fft as f64;
                re += xi as f64 * wi * ph.cos();
                im += xi as f64 * wi * ph.sin();
            }
            (re * re + im * im) / n_fft as f64
        })
        .collect();
    let layout = BandLayout::log5();
    let bins = layout.assign_bins(n_fft, FS).unwrap();
    let oracle: Vec<f64> = bins
        .iter()
        .map(|b| b.iter().map(|&k| power[k]).sum::<f64>() / b.len() as f64)
        .collect();
    let oracle_frac = oracle[2] / oracle.iter().sum::<f64>();
    assert!(oracle_frac >= 0.9, "oracle fraction {oracle_frac}");

    let seq = emg_band_power(&one_channel(x), &layout, 20.0, 25.0).unwrap();
    let got: Vec<f64> = seq.frames.row(0)[..5].iter().map(|&v| v as f64).collect();
    for (g, o) in got.iter().zip(&oracle) {
        assert!((g - o).abs() <= 1e-5 * o.abs().max(1e-6), "{got:?} vs {oracle:?}");
    }
    assert!(got[2] / got.iter().sum::<f64>() >= 0.9);
}

#[test]
fn band_power_bounded_by_frame_energy() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let normal = Normal::new(0.0, 2.0).unwrap();
    let x: Vec<f32> = (0..5000).map(|_| normal.sample(&mut rng) as f32).collect();
    let window = 250;
    let seq = emg_band_power(&one_channel(x.clone()), &BandLayout::lin31(), 20.0, 50.0).unwrap();
    for t in 0..seq.len() {
        let row = &seq.frames.row(t)[..31];
        assert!(row.iter().all(|&p| p >= 0.0));
        let energy: f64 = x[t * 100..t * 100 + window].iter().map(|&v| (v as f64).powi(2)).sum();
        let total: f64 = row.iter().map(|&v| v as f64).sum();
        assert!(total <= energy, "frame {t}: {total} > {energy}");
    }
}

#[test]
fn zero_inputs_give_zero_features() {
    let seq = emg_band_power(&one_channel(vec![0.0; 1000]), &BandLayout::log5(), 20.0, 25.0).unwrap();
    assert!(seq.frames.as_slice().iter().all(|&v| v == 0.0));
    assert_eq!(seq.dim(), 2 * 5);
    let mel = mel_spectrogram(&vec![0.0; 16000], 16000.0, 20.0, None).unwrap();
    assert_eq!(mel.dim(), 80);
    assert!(mel.frames.as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn tone_at_band_center_peaks_in_that_band() {
    let fs = 16000.0;
    let bank = MelFilterbank::new(fs, 512, 80, 20.0, fs / 2.0).unwrap();
    for k in [30, 45, 60, 75] {
        let f = bank.centers[k];
        let audio: Vec<f32> = (0..16000)
            .map(|i| (2.0 * std::f64::consts::PI * f * i as f64 / fs).sin() as f32)
            .collect();
        let mel = mel_spectrogram(&audio, fs, 20.0, None).unwrap();
        let row = mel.frames.row(mel.len() / 2);
        let argmax = (0..80).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        assert_eq!(argmax, k, "tone at {f} Hz");
    }
}

#[test]
fn mel_rejects_fmax_above_nyquist() {
    assert!(mel_spectrogram(&[0.0; 1000], 16000.0, 20.0, Some(9000.0)).is_err());
    assert!(mel_spectrogram(&[], 16000.0, 20.0, None).is_err());
}
