//! WAV ingestion, persistence and fixed-length segmentation.
//!
//! Only RIFF/WAVE PCM 16-bit mono little-endian is supported. Reading scales
//! codes by 1/32768; writing quantizes with `round(s * 32767)` (half away
//! from zero) and clamps to the int16 range.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

pub const PIPELINE_SAMPLE_RATE: u32 = 48_000;

/// Fixed-rate mono PCM clip with samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    samples: Vec<f64>,
    sample_rate_hz: u32,
}

impl AudioClip {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyAudio);
        }
        if sample_rate_hz == 0 {
            return Err(Error::InvalidClip("sample rate must be positive".into()));
        }
        if let Some((i, s)) = samples
            .iter()
            .enumerate()
            .find(|(_, s)| !(-1.0..=1.0).contains(*s))
        {
            return Err(Error::InvalidClip(format!(
                "sample {i} = {s} outside [-1, 1]"
            )));
        }
        Ok(Self {
            samples,
            sample_rate_hz,
        })
    }

    pub fn samples(&self) -> &[f64] {
        &self.samples
    }

    pub fn sample_rate_hz(&self) -> u32 {
        self.sample_rate_hz
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    /// Returns a copy with every sample multiplied by `gain`.
    pub fn scaled(&self, gain: f64) -> Result<Self> {
        Self::new(
            self.samples.iter().map(|s| s * gain).collect(),
            self.sample_rate_hz,
        )
    }

    pub fn into_samples(self) -> Vec<f64> {
        self.samples
    }
}

/// Quantizes a sample to int16 the way [`write_wav`] does.
pub fn quantize(sample: f64) -> i16 {
    (sample * 32767.0).round().clamp(-32768.0, 32767.0) as i16
}

/// Value obtained by reading back a quantized sample.
pub fn dequantize(code: i16) -> f64 {
    code as f64 / 32768.0
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<AudioClip> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes)
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Decodes an in-memory RIFF/WAVE image.
pub fn decode_wav(bytes: &[u8]) -> Result<AudioClip> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::MalformedWav("missing RIFF/WAVE magic".into()));
    }
    let mut pos = 12;
    let mut format: Option<(u16, u16, u32, u16)> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .filter(|&end| end <= bytes.len())
            .ok_or_else(|| {
                Error::MalformedWav(format!(
                    "chunk {:?} overruns file",
                    String::from_utf8_lossy(id)
                ))
            })?;
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(Error::MalformedWav("fmt chunk shorter than 16 bytes".into()));
                }
                format = Some((
                    u16_at(body, 0),
                    u16_at(body, 2),
                    u32_at(body, 4),
                    u16_at(body, 14),
                ));
            }
            b"data" => {
                if format.is_none() {
                    return Err(Error::MalformedWav("data chunk before fmt chunk".into()));
                }
                data = Some(body);
                break;
            }
            _ => {}
        }
        // chunks are word aligned
        pos = body_end + (size & 1);
    }
    let (audio_format, channels, sample_rate, bits) =
        format.ok_or_else(|| Error::MalformedWav("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::MalformedWav("no data chunk".into()))?;
    if audio_format != 1 {
        return Err(Error::UnsupportedFormat(format!(
            "audio_format {audio_format} (only PCM = 1)"
        )));
    }
    if channels != 1 {
        return Err(Error::UnsupportedFormat(format!(
            "{channels} channels (mono only)"
        )));
    }
    if bits != 16 {
        return Err(Error::UnsupportedFormat(format!(
            "{bits} bits per sample (16 only)"
        )));
    }
    if sample_rate == 0 {
        return Err(Error::MalformedWav("zero sample rate".into()));
    }
    if data.is_empty() {
        return Err(Error::EmptyAudio);
    }
    if data.len() % 2 != 0 {
        return Err(Error::MalformedWav("odd data chunk length".into()));
    }
    let samples = data
        .chunks_exact(2)
        .map(|c| dequantize(i16::from_le_bytes([c[0], c[1]])))
        .collect();
    AudioClip::new(samples, sample_rate)
}

/// Encodes a clip as a 44-byte-header PCM 16-bit mono WAV image.
pub fn encode_wav(clip: &AudioClip) -> Vec<u8> {
    let data_len = (clip.len() * 2) as u32;
    let rate = clip.sample_rate_hz();
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&rate.to_le_bytes());
    out.extend_from_slice(&(rate * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in clip.samples() {
        out.extend_from_slice(&quantize(s).to_le_bytes());
    }
    out
}

pub fn write_wav(path: impl AsRef<Path>, clip: &AudioClip) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_wav(clip)).map_err(|e| Error::io(path, e))
}

/// Splits a clip into consecutive non-overlapping segments of
/// `segment_seconds`. The trailing remainder is discarded.
pub fn segment(clip: &AudioClip, segment_seconds: f64) -> Result<Vec<AudioClip>> {
    if !(segment_seconds > 0.0) || !segment_seconds.is_finite() {
        return Err(Error::InvalidConfig(format!(
            "segment length {segment_seconds} s must be positive"
        )));
    }
    let seg_len = (segment_seconds * clip.sample_rate_hz() as f64).round() as usize;
    if seg_len == 0 {
        return Err(Error::InvalidConfig("segment shorter than one sample".into()));
    }
    if clip.len() < seg_len {
        return Err(Error::ClipTooShort {
            needed: seg_len,
            actual: clip.len(),
        });
    }
    Ok(clip
        .samples()
        .chunks_exact(seg_len)
        .map(|chunk| AudioClip {
            samples: chunk.to_vec(),
            sample_rate_hz: clip.sample_rate_hz(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wav_with_codes(codes: &[i16], rate: u32) -> Vec<u8> {
        let clip = AudioClip::new(codes.iter().map(|&c| c as f64 / 32767.0).collect(), rate)
            .unwrap();
        encode_wav(&clip)
    }

    #[test]
    fn max_code_reads_as_32767_over_32768() {
        let clip = decode_wav(&wav_with_codes(&[32767], 48_000)).unwrap();
        assert_eq!(clip.samples(), &[32767.0 / 32768.0]);
        assert_eq!(clip.sample_rate_hz(), 48_000);
    }

    #[test]
    fn zero_code_reads_as_zero() {
        let clip = decode_wav(&wav_with_codes(&[0], 48_000)).unwrap();
        assert_eq!(clip.samples(), &[0.0]);
    }

    #[test]
    fn full_scale_quantization() {
        assert_eq!(quantize(1.0), 32767);
        assert_eq!(quantize(-1.0), -32767);
        assert_eq!(quantize(0.5 / 32767.0), 1);
        assert_eq!(quantize(-0.5 / 32767.0), -1);
        let bytes = encode_wav(&AudioClip::new(vec![1.0, -1.0], 48_000).unwrap());
        assert_eq!(&bytes[44..46], &32767i16.to_le_bytes());
        assert_eq!(&bytes[46..48], &(-32767i16).to_le_bytes());
    }

    #[test]
    fn header_layout() {
        let bytes = wav_with_codes(&[1, 2, 3], 48_000);
        assert_eq!(bytes.len(), 50);
        assert_eq!(&bytes[0..4], b"RIFF");
        assert_eq!(u32_at(&bytes, 4), 42);
        assert_eq!(&bytes[12..16], b"fmt ");
        assert_eq!(u16_at(&bytes, 20), 1);
        assert_eq!(u16_at(&bytes, 22), 1);
        assert_eq!(u32_at(&bytes, 24), 48_000);
        assert_eq!(u32_at(&bytes, 28), 96_000);
        assert_eq!(u16_at(&bytes, 34), 16);
        assert_eq!(&bytes[36..40], b"data");
        assert_eq!(u32_at(&bytes, 40), 6);
    }

    #[test]
    fn rejects_bad_magic() {
        let mut bytes = wav_with_codes(&[1], 48_000);
        bytes[0] = b'X';
        assert!(matches!(decode_wav(&bytes), Err(Error::MalformedWav(_))));
        assert!(matches!(decode_wav(b"RIFF"), Err(Error::MalformedWav(_))));
    }

    #[test]
    fn rejects_truncated_chunk() {
        let bytes = wav_with_codes(&[1, 2, 3, 4], 48_000);
        assert!(matches!(
            decode_wav(&bytes[..bytes.len() - 3]),
            Err(Error::MalformedWav(_))
        ));
    }

    #[test]
    fn rejects_stereo_and_other_depths() {
        let mut stereo = wav_with_codes(&[1, 2], 48_000);
        stereo[22] = 2;
        assert!(matches!(decode_wav(&stereo), Err(Error::UnsupportedFormat(_))));
        let mut float = wav_with_codes(&[1, 2], 48_000);
        float[20] = 3;
        assert!(matches!(decode_wav(&float), Err(Error::UnsupportedFormat(_))));
        let mut eight = wav_with_codes(&[1, 2], 48_000);
        eight[34] = 8;
        assert!(matches!(decode_wav(&eight), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn rejects_empty_data() {
        let mut bytes = wav_with_codes(&[1], 48_000);
        bytes.truncate(44);
        bytes[40..44].copy_from_slice(&0u32.to_le_bytes());
        bytes[4..8].copy_from_slice(&36u32.to_le_bytes());
        assert!(matches!(decode_wav(&bytes), Err(Error::EmptyAudio)));
    }

    #[test]
    fn skips_unknown_chunks() {
        let plain = wav_with_codes(&[7, -7], 48_000);
        let mut bytes = plain[..36].to_vec();
        bytes.extend_from_slice(b"LIST");
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&[1, 2, 3, 0]);
        bytes.extend_from_slice(&plain[36..]);
        let clip = decode_wav(&bytes).unwrap();
        assert_eq!(clip.samples(), &[7.0 / 32768.0, -7.0 / 32768.0]);
    }

    #[test]
    fn clip_rejects_out_of_range() {
        assert!(AudioClip::new(vec![1.5], 48_000).is_err());
        assert!(AudioClip::new(vec![f64::NAN], 48_000).is_err());
        assert!(matches!(AudioClip::new(vec![], 48_000), Err(Error::EmptyAudio)));
    }

    #[test]
    fn segment_counts() {
        let rate = 100;
        let thirty_min = AudioClip::new(vec![0.0; 30 * 60 * rate], rate as u32).unwrap();
        assert_eq!(segment(&thirty_min, 10.0).unwrap().len(), 180);
        let five_min = AudioClip::new(vec![0.0; 5 * 60 * rate], rate as u32).unwrap();
        assert_eq!(segment(&five_min, 10.0).unwrap().len() * 48, 1440);
    }

    #[test]
    fn exact_multiple_keeps_everything() {
        let clip = AudioClip::new(vec![0.25; 480_000], 48_000).unwrap();
        let segs = segment(&clip, 10.0).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].len(), 480_000);
    }

    #[test]
    fn segment_too_short() {
        let clip = AudioClip::new(vec![0.0; 10], 48_000).unwrap();
        assert!(matches!(segment(&clip, 10.0), Err(Error::ClipTooShort { .. })));
    }
}
