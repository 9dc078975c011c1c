//! Spectral preprocessing: FFT, STFT, mel projection, dB scaling and the
//! normalized feature vectors consumed by the autoencoder.

pub mod cache;
pub mod fft;
pub mod mel;

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, Axis};
use num_complex::Complex64;

use crate::audio_io::AudioClip;
use crate::error::{Error, Result};

pub use fft::{fft, ifft, ComplexSpectrum, FftPlan};
pub use mel::{hz_to_mel, mel_to_hz, MelFilterbank};

/// Power floor applied before taking logarithms.
pub const POWER_EPSILON: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct DspConfig {
    pub sample_rate_hz: u32,
    pub window_len: usize,
    pub hop_len: usize,
    pub n_mels: usize,
    pub fmin_hz: f64,
    pub fmax_hz: f64,
    /// Floor in dB relative to the per-clip maximum.
    pub floor_db: f64,
}

impl Default for DspConfig {
    fn default() -> Self {
        Self {
            sample_rate_hz: 48_000,
            window_len: 512,
            hop_len: 256,
            n_mels: 256,
            fmin_hz: 20.0,
            fmax_hz: 20_000.0,
            floor_db: -60.0,
        }
    }
}

impl DspConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.window_len < 2 || !self.window_len.is_power_of_two() {
            return bad(format!("window_len {} must be a power of two", self.window_len));
        }
        if self.hop_len == 0 || self.hop_len > self.window_len {
            return bad(format!(
                "hop_len {} must be in 1..={}",
                self.hop_len, self.window_len
            ));
        }
        if self.n_mels == 0 {
            return bad("n_mels must be positive".into());
        }
        if !(self.fmin_hz >= 0.0 && self.fmin_hz < self.fmax_hz)
            || self.fmax_hz > self.sample_rate_hz as f64 / 2.0
        {
            return bad(format!(
                "need 0 <= fmin < fmax <= sample_rate/2, got {}..{}",
                self.fmin_hz, self.fmax_hz
            ));
        }
        if !(self.floor_db < 0.0) {
            return bad(format!("floor_db {} must be negative", self.floor_db));
        }
        Ok(())
    }

    /// Number of STFT frames for a clip of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        if len < self.window_len {
            0
        } else {
            1 + (len - self.window_len) / self.hop_len
        }
    }

    fn check_clip(&self, clip: &AudioClip, needed: usize) -> Result<()> {
        if clip.sample_rate_hz() != self.sample_rate_hz {
            return Err(Error::UnsupportedFormat(format!(
                "sample rate {} Hz, pipeline expects {} Hz",
                clip.sample_rate_hz(),
                self.sample_rate_hz
            )));
        }
        if clip.len() < needed {
            return Err(Error::ClipTooShort {
                needed,
                actual: clip.len(),
            });
        }
        Ok(())
    }

    /// Mel filterbank sized for the STFT window.
    pub fn filterbank(&self) -> MelFilterbank {
        self.filterbank_for(self.window_len)
    }

    pub fn filterbank_for(&self, n_fft: usize) -> MelFilterbank {
        MelFilterbank::new(
            self.sample_rate_hz,
            n_fft,
            self.n_mels,
            self.fmin_hz,
            self.fmax_hz,
        )
    }
}

/// Spectral representation fed to the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum FeatureMode {
    /// One global spectrum per clip.
    Fft,
    /// One vector per STFT frame.
    #[default]
    Stft,
}

impl fmt::Display for FeatureMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FeatureMode::Fft => "fft",
            FeatureMode::Stft => "stft",
        })
    }
}

impl FromStr for FeatureMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fft" => Ok(FeatureMode::Fft),
            "stft" => Ok(FeatureMode::Stft),
            other => Err(Error::InvalidConfig(format!("unknown mode {other:?}"))),
        }
    }
}

/// Normalized spectral feature with every value in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    values: Vec<f64>,
}

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyFeatures);
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidConfig(format!(
                "feature value {v} outside [0, 1]"
            )));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Frames × mel bands in dB (after [`power_to_db`]).
#[derive(Debug, Clone, PartialEq)]
pub struct Spectrogram {
    pub frames: Array2<f64>,
}

fn hann_periodic(len: usize) -> Vec<f64> {
    (0..len)
        .map(|n| 0.5 - 0.5 * (2.0 * PI * n as f64 / len as f64).cos())
        .collect()
}

/// Windowed FFT of every frame: frame `t` covers `[t·hop, t·hop + window)`.
pub fn stft(clip: &AudioClip, cfg: &DspConfig) -> Result<Vec<ComplexSpectrum>> {
    cfg.validate()?;
    cfg.check_clip(clip, cfg.window_len)?;
    let plan = FftPlan::new(cfg.window_len)?;
    let window = hann_periodic(cfg.window_len);
    let frames = cfg.frame_count(clip.len());
    Ok((0..frames)
        .map(|t| {
            let mut buf = windowed_frame(clip.samples(), t * cfg.hop_len, &window);
            plan.process(&mut buf);
            ComplexSpectrum::new(buf).expect("plan size is a power of two")
        })
        .collect())
}

fn windowed_frame(samples: &[f64], start: usize, window: &[f64]) -> Vec<Complex64> {
    samples[start..start + window.len()]
        .iter()
        .zip(window)
        .map(|(s, w)| Complex64::new(s * w, 0.0))
        .collect()
}

/// Per-frame mel-band power, frames × n_mels.
pub fn mel_power(clip: &AudioClip, cfg: &DspConfig) -> Result<Array2<f64>> {
    cfg.validate()?;
    cfg.check_clip(clip, cfg.window_len)?;
    let plan = FftPlan::new(cfg.window_len)?;
    let window = hann_periodic(cfg.window_len);
    let bank = cfg.filterbank();
    let frames = cfg.frame_count(clip.len());
    let n_bins = cfg.window_len / 2 + 1;
    let mut out = Array2::zeros((frames, cfg.n_mels));
    let mut power = vec![0.0; n_bins];
    for (t, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let mut buf = windowed_frame(clip.samples(), t * cfg.hop_len, &window);
        plan.process(&mut buf);
        for (p, b) in power.iter_mut().zip(&buf) {
            *p = b.norm_sqr();
        }
        bank.apply_into(&power, row.as_slice_mut().expect("standard layout"));
    }
    Ok(out)
}

/// 10·log10(max(p, ε)) referenced to the matrix maximum, clamped below at `floor_db`.
pub fn power_to_db(power: &Array2<f64>, floor_db: f64) -> Array2<f64> {
    let reference = power.iter().fold(POWER_EPSILON, |m, &p| m.max(p));
    power.mapv(|p| (10.0 * (p.max(POWER_EPSILON) / reference).log10()).max(floor_db))
}

/// Min-max scales all values into [0, 1]; a constant input maps to zeros.
fn min_max_normalize(values: &mut Array2<f64>) {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if hi > lo {
        let span = hi - lo;
        values.mapv_inplace(|v| ((v - lo) / span).clamp(0.0, 1.0));
    } else {
        values.fill(0.0);
    }
}

/// dB spectrogram of a clip.
pub fn spectrogram(clip: &AudioClip, cfg: &DspConfig) -> Result<Spectrogram> {
    Ok(Spectrogram {
        frames: power_to_db(&mel_power(clip, cfg)?, cfg.floor_db),
    })
}

/// Global mel power spectrum of the zero-padded clip, as a 1 × n_mels matrix.
fn global_mel_power(clip: &AudioClip, cfg: &DspConfig) -> Result<Array2<f64>> {
    cfg.validate()?;
    cfg.check_clip(clip, cfg.window_len)?;
    let n_fft = clip.len().next_power_of_two();
    let plan = FftPlan::new(n_fft)?;
    let mut buf: Vec<Complex64> = clip
        .samples()
        .iter()
        .map(|&s| Complex64::new(s, 0.0))
        .collect();
    buf.resize(n_fft, Complex64::new(0.0, 0.0));
    plan.process(&mut buf);
    let power: Vec<f64> = buf[..n_fft / 2 + 1].iter().map(|b| b.norm_sqr()).collect();
    let bands = cfg.filterbank_for(n_fft).apply(&power);
    Ok(Array2::from_shape_vec((1, cfg.n_mels), bands).expect("n_mels values"))
}

/// Feature matrix for a clip: one row per clip (FFT) or per frame (STFT).
pub fn clip_feature_matrix(clip: &AudioClip, cfg: &DspConfig, mode: FeatureMode) -> Result<Array2<f64>> {
    let power = match mode {
        FeatureMode::Fft => global_mel_power(clip, cfg)?,
        FeatureMode::Stft => mel_power(clip, cfg)?,
    };
    let mut db = power_to_db(&power, cfg.floor_db);
    min_max_normalize(&mut db);
    Ok(db)
}

pub fn clip_features_fft(clip: &AudioClip, cfg: &DspConfig) -> Result<FeatureVector> {
    let m = clip_feature_matrix(clip, cfg, FeatureMode::Fft)?;
    FeatureVector::new(m.into_raw_vec_and_offset().0)
}

pub fn clip_features_stft(clip: &AudioClip, cfg: &DspConfig) -> Result<Vec<FeatureVector>> {
    let m = clip_feature_matrix(clip, cfg, FeatureMode::Stft)?;
    m.outer_iter()
        .map(|row| FeatureVector::new(row.to_vec()))
        .collect()
}
