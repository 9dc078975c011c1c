//! Spectral properties of generated clips, checked on a high-resolution
//! magnitude spectrum.

use propcrack::dsp::{clip_feature_matrix, fft, ComplexSpectrum, DspConfig, FeatureMode};
use propcrack::synthgen::{Condition, RecordingVariable, SignalModel, ANGLES_DEG, THROTTLES_PCT};
use propcrack::AudioClip;

const N: usize = 65_536;
const RATE: f64 = 48_000.0;

fn var(angle: u16, throttle: u8, c: Condition) -> RecordingVariable {
    RecordingVariable::new(angle, throttle, c).unwrap()
}

/// Hann-windowed magnitude spectrum of the first `N` samples.
fn magnitude(clip: &AudioClip) -> Vec<f64> {
    let x: Vec<f64> = clip.samples()[..N]
        .iter()
        .enumerate()
        .map(|(i, s)| s * (0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / N as f64).cos()))
        .collect();
    let spec = fft(&ComplexSpectrum::from_real(&x).unwrap());
    spec.bins()[..N / 2 + 1].iter().map(|c| c.norm()).collect()
}

fn bin_hz() -> f64 {
    RATE / N as f64
}

fn clip(m: &SignalModel, v: &RecordingVariable, seed: u64) -> AudioClip {
    m.synth_clip(v, 1.5, seed).unwrap()
}

#[test]
fn normal_low_throttle_spectrum_is_a_regular_comb() {
    let m = SignalModel::default();
    for &angle in &ANGLES_DEG {
        let v = var(angle, 20, Condition::Normal);
        let seed = angle as u64;
        let f0 = m.fundamental_hz(&v, seed);
        let mag = magnitude(&clip(&m, &v, seed));
        let mut peaks: Vec<usize> = (1..mag.len() - 1)
            .filter(|&k| mag[k] > mag[k - 1] && mag[k] >= mag[k + 1])
            .collect();
        peaks.sort_by(|&a, &b| mag[b].partial_cmp(&mag[a]).unwrap());
        for &k in peaks.iter().take(10) {
            let f = k as f64 * bin_hz();
            let h = (f / f0).round().max(1.0);
            let off_bins = (f - h * f0).abs() / bin_hz();
            assert!(off_bins <= 2.0, "angle {angle}: peak at {f:.1} Hz is {off_bins:.2} bins from {h}·f0");
        }
    }
}

#[test]
fn noise_floor_rises_with_throttle() {
    let m = SignalModel::default();
    for &angle in &[45u16, 270] {
        let floors: Vec<f64> = THROTTLES_PCT
            .iter()
            .map(|&t| {
                let mut mag = magnitude(&clip(&m, &var(angle, t, Condition::Normal), 11));
                // relative to the total level, since clips are peak-normalized
                let total: f64 = mag.iter().map(|x| x * x).sum::<f64>().sqrt();
                mag.sort_by(|a, b| a.partial_cmp(b).unwrap());
                mag[mag.len() / 2] / total
            })
            .collect();
        for w in floors.windows(2) {
            assert!(w[1] > w[0], "angle {angle}: floors {floors:?}");
        }
    }
}

/// Energy within ±3 bins of the first `harmonics` multiples of `f0`, split
/// into (odd, even).
fn harmonic_energy(mag: &[f64], f0: f64, harmonics: usize) -> (f64, f64) {
    let (mut odd, mut even) = (0.0, 0.0);
    for h in 1..=harmonics {
        let c = (h as f64 * f0 / bin_hz()).round() as usize;
        let e: f64 = mag[c - 3..=c + 3].iter().map(|x| x * x).sum();
        if h % 2 == 0 {
            even += e;
        } else {
            odd += e;
        }
    }
    (odd, even)
}

#[test]
fn ripped_clips_lose_even_harmonic_energy() {
    let m = SignalModel::default();
    for &angle in &ANGLES_DEG {
        for &t in &THROTTLES_PCT {
            let seed = 1000 + angle as u64 + t as u64;
            let normal = var(angle, t, Condition::Normal);
            let ripped = var(angle, t, Condition::Ripped);
            // same seed, same jitter: both share the fundamental
            let f0 = m.fundamental_hz(&normal, seed);
            assert_eq!(f0, m.fundamental_hz(&ripped, seed));
            let (no, ne) = harmonic_energy(&magnitude(&clip(&m, &normal, seed)), f0, 10);
            let (ro, re) = harmonic_energy(&magnitude(&clip(&m, &ripped, seed)), f0, 10);
            assert!(re / ro < ne / no, "angle {angle} throttle {t}: {} vs {}", re / ro, ne / no);
        }
    }
}

fn mean_features(m: &SignalModel, v: &RecordingVariable, seed: u64) -> Vec<f64> {
    let f = clip_feature_matrix(&clip(m, v, seed), &DspConfig::default(), FeatureMode::Stft).unwrap();
    f.mean_axis(ndarray::Axis(0)).unwrap().to_vec()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

#[test]
fn broken_clips_separate_from_normal_below_fifty_percent() {
    let m = SignalModel::default();
    for &angle in &ANGLES_DEG {
        for &t in &[20u8, 30, 40] {
            let normals: Vec<Vec<f64>> = (0..6).map(|s| mean_features(&m, &var(angle, t, Condition::Normal), s)).collect();
            let broken: Vec<Vec<f64>> = (0..6)
                .map(|s| mean_features(&m, &var(angle, t, Condition::Broken), 100 + s))
                .collect();
            let mut within = 0.0;
            let mut pairs = 0;
            for i in 0..normals.len() {
                for j in i + 1..normals.len() {
                    within += dist(&normals[i], &normals[j]);
                    pairs += 1;
                }
            }
            within /= pairs as f64;
            let between = normals
                .iter()
                .flat_map(|n| broken.iter().map(move |b| dist(n, b)))
                .sum::<f64>()
                / (normals.len() * broken.len()) as f64;
            assert!(between > within, "angle {angle} throttle {t}: {between} <= {within}");
        }
    }
}

#[test]
fn clips_are_deterministic_and_peak_normalized() {
    let m = SignalModel::default();
    let v = var(135, 40, Condition::Broken);
    let a = clip(&m, &v, 5);
    assert_eq!(a, clip(&m, &v, 5));
    assert_ne!(a, clip(&m, &v, 6));
    let peak = a.samples().iter().fold(0.0f64, |p, s| p.max(s.abs()));
    assert!((peak - 0.9).abs() < 1e-12);
}
