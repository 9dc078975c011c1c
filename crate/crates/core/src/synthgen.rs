//! Synthetic propeller recordings.
//!
//! A clip is a comb of blade-pass harmonics with 1/h amplitudes, shaped by a
//! per-angle gain and spectral tilt, plus white noise whose RMS grows with the
//! square of the throttle setting. Defects perturb the comb:
//!
//! * ripped: even harmonics attenuated, narrowband noise between harmonics;
//! * broken: every harmonic shifted up, amplitude modulation at twice the
//!   blade-pass rate.
//!
//! The output is peak-normalized. Every constant lives in [`SignalModel`].

use std::f64::consts::PI;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::audio_io::{write_wav, AudioClip, PIPELINE_SAMPLE_RATE};
use crate::dataset::{Manifest, ManifestEntry};
use crate::error::{Error, Result};
use crate::par::{self, Execution};

/// Microphone angles in degrees. 0° and 180° are not part of the corpus.
pub const ANGLES_DEG: [u16; 6] = [45, 90, 135, 225, 270, 315];
pub const THROTTLES_PCT: [u8; 4] = [20, 30, 40, 50];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Condition {
    Normal,
    Ripped,
    Broken,
}

impl Condition {
    pub const ALL: [Condition; 3] = [Condition::Normal, Condition::Ripped, Condition::Broken];
    pub const ABNORMAL: [Condition; 2] = [Condition::Ripped, Condition::Broken];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Normal => "normal",
            Condition::Ripped => "ripped",
            Condition::Broken => "broken",
        }
    }

    pub fn is_abnormal(self) -> bool {
        self != Condition::Normal
    }

    fn code(self) -> u64 {
        self as u64
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(Condition::Normal),
            "ripped" => Ok(Condition::Ripped),
            "broken" => Ok(Condition::Broken),
            other => Err(Error::InvalidConfig(format!("unknown condition {other:?}"))),
        }
    }
}

/// (angle, throttle, condition) label of a recording.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RecordingVariable {
    angle_deg: u16,
    throttle_pct: u8,
    condition: Condition,
}

impl RecordingVariable {
    pub fn new(angle_deg: u16, throttle_pct: u8, condition: Condition) -> Result<Self> {
        if !ANGLES_DEG.contains(&angle_deg) {
            return Err(Error::InvalidConfig(format!(
                "angle {angle_deg}° not in {ANGLES_DEG:?}"
            )));
        }
        if !THROTTLES_PCT.contains(&throttle_pct) {
            return Err(Error::InvalidConfig(format!(
                "throttle {throttle_pct}% not in {THROTTLES_PCT:?}"
            )));
        }
        Ok(Self {
            angle_deg,
            throttle_pct,
            condition,
        })
    }

    pub fn angle_deg(&self) -> u16 {
        self.angle_deg
    }

    pub fn throttle_pct(&self) -> u8 {
        self.throttle_pct
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }

    /// Every (angle, throttle) pair for one condition, in table order.
    pub fn grid(condition: Condition) -> Vec<RecordingVariable> {
        ANGLES_DEG
            .iter()
            .flat_map(|&a| {
                THROTTLES_PCT.iter().map(move |&t| RecordingVariable {
                    angle_deg: a,
                    throttle_pct: t,
                    condition,
                })
            })
            .collect()
    }

    /// `<condition>_<angle>_<throttle>_<index>.wav`
    pub fn file_name(&self, index: usize) -> String {
        format!(
            "{}_{}_{}_{:03}.wav",
            self.condition, self.angle_deg, self.throttle_pct, index
        )
    }

    /// Parses a name produced by [`file_name`](Self::file_name).
    pub fn parse_file_name(name: &str) -> Result<(RecordingVariable, usize)> {
        let fail = || Error::UnparsableFilename(name.to_string());
        let stem = name.strip_suffix(".wav").ok_or_else(fail)?;
        let parts: Vec<&str> = stem.split('_').collect();
        let [cond, angle, throttle, index] = parts.as_slice() else {
            return Err(fail());
        };
        let condition = cond.parse().map_err(|_| fail())?;
        let angle = angle.parse().map_err(|_| fail())?;
        let throttle = throttle.parse().map_err(|_| fail())?;
        let index = index.parse().map_err(|_| fail())?;
        let var = RecordingVariable::new(angle, throttle, condition).map_err(|_| fail())?;
        Ok((var, index))
    }
}

impl fmt::Display for RecordingVariable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}° {}%", self.condition, self.angle_deg, self.throttle_pct)
    }
}

/// Gain and spectral tilt seen by a microphone at a given angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleResponse {
    pub gain: f64,
    pub tilt_db_per_octave: f64,
}

/// Constants of the synthetic signal model.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalModel {
    pub harmonics: usize,
    /// Blade-pass fundamental at 20 % throttle; scales linearly with throttle.
    pub base_blade_pass_hz: f64,
    /// Relative per-clip spread of the fundamental (uniform ±).
    pub f0_jitter: f64,
    /// Noise RMS at 100 % throttle; scales with throttle².
    pub noise_rms_full_throttle: f64,
    pub ripped_even_attenuation_db: f64,
    /// Amplitude of each mid-harmonic noise band relative to the harmonic below it.
    pub ripped_sideband_level: f64,
    pub ripped_sideband_bandwidth_hz: f64,
    pub broken_frequency_shift: f64,
    pub broken_modulation_depth: f64,
    pub peak: f64,
    /// Indexed like [`ANGLES_DEG`].
    pub angle_responses: [AngleResponse; 6],
}

impl Default for SignalModel {
    fn default() -> Self {
        let r = |gain, tilt_db_per_octave| AngleResponse {
            gain,
            tilt_db_per_octave,
        };
        Self {
            harmonics: 40,
            base_blade_pass_hz: 120.0,
            f0_jitter: 0.015,
            noise_rms_full_throttle: 13.0,
            ripped_even_attenuation_db: 6.0,
            ripped_sideband_level: 0.5,
            ripped_sideband_bandwidth_hz: 20.0,
            broken_frequency_shift: 0.03,
            broken_modulation_depth: 1.0,
            peak: 0.9,
            angle_responses: [
                r(1.0, 3.0),
                r(1.0, 3.5),
                r(1.0, 3.25),
                r(1.0, 3.5),
                r(1.0, 2.5),
                r(1.0, 2.625),
            ],
        }
    }
}

impl SignalModel {
    pub fn angle_response(&self, angle_deg: u16) -> AngleResponse {
        let idx = ANGLES_DEG
            .iter()
            .position(|&a| a == angle_deg)
            .expect("RecordingVariable holds a listed angle");
        self.angle_responses[idx]
    }

    /// Nominal fundamental for a throttle setting, before jitter and defects.
    pub fn nominal_fundamental_hz(&self, throttle_pct: u8) -> f64 {
        self.base_blade_pass_hz * throttle_pct as f64 / 20.0
    }

    fn clip_rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Fundamental of the clip generated from `(v, seed)`, including jitter
    /// and the broken-blade shift.
    pub fn fundamental_hz(&self, v: &RecordingVariable, seed: u64) -> f64 {
        let mut rng = Self::clip_rng(seed);
        self.fundamental_from(v, &mut rng)
    }

    fn fundamental_from(&self, v: &RecordingVariable, rng: &mut ChaCha8Rng) -> f64 {
        let jitter: f64 = rng.gen_range(-1.0..=1.0);
        let mut f0 = self.nominal_fundamental_hz(v.throttle_pct) * (1.0 + self.f0_jitter * jitter);
        if v.condition == Condition::Broken {
            f0 *= 1.0 + self.broken_frequency_shift;
        }
        f0
    }

    fn harmonic_amplitude(&self, v: &RecordingVariable, h: usize) -> f64 {
        let resp = self.angle_response(v.angle_deg);
        let h = h as f64;
        let tilt = 10f64.powf(resp.tilt_db_per_octave * h.log2() / 20.0);
        let mut amp = resp.gain * tilt / h;
        if v.condition == Condition::Ripped && (h as usize) % 2 == 0 {
            amp *= 10f64.powf(-self.ripped_even_attenuation_db / 20.0);
        }
        amp
    }

    /// Generates one clip. Jitter, harmonic phases and broadband noise depend
    /// only on `seed`, so clips of different conditions with the same seed
    /// share them.
    pub fn synth_clip(&self, v: &RecordingVariable, clip_seconds: f64, seed: u64) -> Result<AudioClip> {
        if !(clip_seconds > 0.0) || !clip_seconds.is_finite() {
            return Err(Error::InvalidConfig(format!("clip length {clip_seconds} s")));
        }
        let rate = PIPELINE_SAMPLE_RATE as f64;
        let n = (clip_seconds * rate).round() as usize;
        if n == 0 {
            return Err(Error::InvalidConfig("clip shorter than one sample".into()));
        }
        let nyquist = rate / 2.0;
        let mut rng = Self::clip_rng(seed);
        let f0 = self.fundamental_from(v, &mut rng);
        let phases: Vec<f64> = (0..self.harmonics)
            .map(|_| rng.gen_range(0.0..2.0 * PI))
            .collect();
        let am_phase = rng.gen_range(0.0..2.0 * PI);

        let mut signal = vec![0.0; n];
        for (i, &phase) in phases.iter().enumerate() {
            let h = i + 1;
            let freq = f0 * h as f64;
            if freq >= nyquist {
                break;
            }
            add_tone(&mut signal, self.harmonic_amplitude(v, h), freq / rate, phase);
        }

        match v.condition {
            Condition::Normal => {}
            Condition::Ripped => {
                let mut side = Self::clip_rng(seed);
                side.set_stream(2);
                let alpha = (-2.0 * PI * self.ripped_sideband_bandwidth_hz / rate).exp();
                for h in 1..=self.harmonics / 2 {
                    let freq = (h as f64 + 0.5) * f0;
                    if freq >= nyquist {
                        break;
                    }
                    let amp = self.ripped_sideband_level * self.harmonic_amplitude(v, h);
                    add_narrowband_noise(&mut signal, amp, freq / rate, alpha, &mut side);
                }
            }
            Condition::Broken => {
                let step = 2.0 * PI * 2.0 * f0 / rate;
                let depth = self.broken_modulation_depth;
                for (t, s) in signal.iter_mut().enumerate() {
                    *s *= 1.0 + depth * (step * t as f64 + am_phase).cos();
                }
            }
        }

        let throttle = v.throttle_pct as f64 / 100.0;
        let noise_rms = self.noise_rms_full_throttle * throttle * throttle;
        for s in signal.iter_mut() {
            let g: f64 = rng.sample(StandardNormal);
            *s += noise_rms * g;
        }

        let peak = signal.iter().fold(0.0f64, |m, s| m.max(s.abs()));
        if peak > 0.0 {
            let scale = self.peak / peak;
            for s in signal.iter_mut() {
                *s = (*s * scale).clamp(-1.0, 1.0);
            }
        }
        AudioClip::new(signal, PIPELINE_SAMPLE_RATE)
    }
}

/// Adds `amp·sin(2π·cycles_per_sample·t + phase)` using a rotating phasor.
fn add_tone(signal: &mut [f64], amp: f64, cycles_per_sample: f64, phase: f64) {
    let omega = 2.0 * PI * cycles_per_sample;
    let rot = Complex64::new(omega.cos(), omega.sin());
    let mut z = Complex64::new(phase.cos(), phase.sin()) * amp;
    for (t, s) in signal.iter_mut().enumerate() {
        *s += z.im;
        z *= rot;
        // re-anchor periodically against rounding drift
        if t % 4096 == 4095 {
            let ang = omega * (t + 1) as f64 + phase;
            z = Complex64::new(ang.cos(), ang.sin()) * amp;
        }
    }
}

/// Adds a carrier whose complex envelope is one-pole low-passed Gaussian noise
/// normalized to RMS `amp`.
fn add_narrowband_noise(signal: &mut [f64], amp: f64, cycles_per_sample: f64, alpha: f64, rng: &mut ChaCha8Rng) {
    let omega = 2.0 * PI * cycles_per_sample;
    let rot = Complex64::new(omega.cos(), omega.sin());
    let drive = (1.0 - alpha * alpha).sqrt() * std::f64::consts::FRAC_1_SQRT_2;
    let mut carrier = Complex64::new(1.0, 0.0);
    let mut env = Complex64::new(0.0, 0.0);
    for (t, s) in signal.iter_mut().enumerate() {
        let (re, im): (f64, f64) = (rng.sample(StandardNormal), rng.sample(StandardNormal));
        env = env * alpha + Complex64::new(re, im) * drive;
        *s += amp * std::f64::consts::SQRT_2 * (env * carrier).im;
        carrier *= rot;
        if t % 4096 == 4095 {
            let ang = omega * (t + 1) as f64;
            carrier = Complex64::new(ang.cos(), ang.sin());
        }
    }
}

/// Clip with the default signal model.
pub fn synth_clip(v: &RecordingVariable, clip_seconds: f64, seed: u64) -> Result<AudioClip> {
    SignalModel::default().synth_clip(v, clip_seconds, seed)
}

/// One batch of synthetic recordings.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub variables: Vec<RecordingVariable>,
    pub clips_per_variable: usize,
    pub clip_seconds: f64,
    pub base_blade_pass_hz: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn new(variables: Vec<RecordingVariable>, clips_per_variable: usize, clip_seconds: f64, seed: u64) -> Self {
        Self {
            variables,
            clips_per_variable,
            clip_seconds,
            base_blade_pass_hz: SignalModel::default().base_blade_pass_hz,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.clips_per_variable == 0 {
            return Err(Error::InvalidConfig("clips_per_variable must be >= 1".into()));
        }
        if !(self.clip_seconds > 0.0) {
            return Err(Error::InvalidConfig("clip_seconds must be positive".into()));
        }
        if !(self.base_blade_pass_hz > 0.0) {
            return Err(Error::InvalidConfig("base_blade_pass_hz must be positive".into()));
        }
        Ok(())
    }

    pub fn clip_count(&self) -> usize {
        self.variables.len() * self.clips_per_variable
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Stable mix of several words into one seed.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x243F_6A88_85A3_08D3, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

/// Seed of clip `index` of variable `v` in a dataset seeded with `seed`.
pub fn clip_seed(seed: u64, v: &RecordingVariable, index: usize) -> u64 {
    derive_seed(&[
        seed,
        v.angle_deg as u64,
        v.throttle_pct as u64,
        v.condition.code(),
        index as u64,
    ])
}

/// Writes every clip of `spec` into `out_dir` and returns their manifest.
pub fn synth_dataset(spec: &SynthSpec, out_dir: &Path) -> Result<Manifest> {
    synth_dataset_with(spec, &SignalModel::default(), out_dir, Execution::Parallel)
}

pub fn synth_dataset_with(
    spec: &SynthSpec,
    model: &SignalModel,
    out_dir: &Path,
    exec: Execution,
) -> Result<Manifest> {
    spec.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let model = SignalModel {
        base_blade_pass_hz: spec.base_blade_pass_hz,
        ..model.clone()
    };
    let jobs: Vec<(RecordingVariable, usize)> = spec
        .variables
        .iter()
        .flat_map(|&v| (0..spec.clips_per_variable).map(move |i| (v, i)))
        .collect();
    let entries = par::try_map(exec, &jobs, |&(v, i)| {
        let clip = model.synth_clip(&v, spec.clip_seconds, clip_seed(spec.seed, &v, i))?;
        let name = v.file_name(i);
        write_wav(out_dir.join(&name), &clip)?;
        Ok::<_, Error>(ManifestEntry::new(name, v))
    })?;
    Manifest::new(entries)
}
