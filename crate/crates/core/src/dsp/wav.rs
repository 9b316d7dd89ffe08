//! RIFF/WAVE read and write, PCM 16-bit mono only.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Mono waveform with samples in [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

pub const CANONICAL_SAMPLE_RATE: u32 = 16_000;

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::data("waveform must contain at least one sample"));
        }
        if sample_rate_hz == 0 {
            return Err(Error::data("sample rate must be positive"));
        }
        Ok(Waveform {
            samples,
            sample_rate_hz,
        })
    }

    pub fn duration_seconds(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }
}

fn chunk_id(bytes: &[u8]) -> [u8; 4] {
    [bytes[0], bytes[1], bytes[2], bytes[3]]
}

fn read_u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([bytes[at], bytes[at + 1], bytes[at + 2], bytes[at + 3]])
}

fn read_u16_at(bytes: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([bytes[at], bytes[at + 1]])
}

/// Decode a PCM 16-bit mono WAV byte stream. Samples are scaled by 1/32768.
pub fn decode_wav(bytes: &[u8]) -> Result<Waveform> {
    if bytes.len() < 12 || chunk_id(bytes) != *b"RIFF" || chunk_id(&bytes[8..]) != *b"WAVE" {
        return Err(Error::format("not a RIFF/WAVE stream"));
    }

    let mut fmt: Option<(u16, u16, u32, u16)> = None; // (format, channels, rate, bits)
    let mut data: Option<&[u8]> = None;
    let mut pos = 12;
    while pos + 8 <= bytes.len() {
        let id = chunk_id(&bytes[pos..]);
        let size = read_u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start + size;
        if body_end > bytes.len() {
            return Err(Error::format(format!(
                "chunk {:?} overruns file",
                String::from_utf8_lossy(&id)
            )));
        }
        let body = &bytes[body_start..body_end];
        match &id {
            b"fmt " => {
                if size < 16 {
                    return Err(Error::format("fmt chunk too short"));
                }
                fmt = Some((
                    read_u16_at(body, 0),
                    read_u16_at(body, 2),
                    read_u32_at(body, 4),
                    read_u16_at(body, 14),
                ));
            }
            b"data" => data = Some(body),
            _ => {} // skip LIST, fact, etc.
        }
        // Chunks are word-aligned.
        pos = body_end + (size & 1);
    }

    let (format, channels, rate, bits) = fmt.ok_or_else(|| Error::format("missing fmt chunk"))?;
    if format != 1 {
        return Err(Error::format(format!("unsupported WAV format tag {format}, need PCM")));
    }
    if channels != 1 {
        return Err(Error::format(format!("{channels}-channel WAV not supported, need mono")));
    }
    if bits != 16 {
        return Err(Error::format(format!("{bits}-bit WAV not supported, need 16-bit")));
    }
    let data = data.ok_or_else(|| Error::format("missing data chunk"))?;
    if data.len() % 2 != 0 {
        return Err(Error::format("data chunk length is not a multiple of 2"));
    }
    if data.is_empty() {
        return Err(Error::format("data chunk is empty"));
    }

    let samples = data
        .chunks_exact(2)
        .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
        .collect();
    Waveform::new(samples, rate)
}

/// Encode as a canonical 44-byte-header PCM 16-bit mono WAV.
pub fn encode_wav(waveform: &Waveform) -> Vec<u8> {
    let n = waveform.samples.len();
    let data_len = (n * 2) as u32;
    let mut out = Vec::with_capacity(44 + n * 2);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes()); // PCM
    out.extend_from_slice(&1u16.to_le_bytes()); // mono
    out.extend_from_slice(&waveform.sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(waveform.sample_rate_hz * 2).to_le_bytes()); // byte rate
    out.extend_from_slice(&2u16.to_le_bytes()); // block align
    out.extend_from_slice(&16u16.to_le_bytes()); // bits per sample
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &waveform.samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes)
}

pub fn write_wav(waveform: &Waveform, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_wav(waveform)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wav_bytes(channels: u16, bits: u16, rate: u32, samples: &[i16]) -> Vec<u8> {
        let data_len = (samples.len() * 2) as u32;
        let mut out = Vec::new();
        out.extend_from_slice(b"RIFF");
        out.extend_from_slice(&(36 + data_len).to_le_bytes());
        out.extend_from_slice(b"WAVE");
        out.extend_from_slice(b"fmt ");
        out.extend_from_slice(&16u32.to_le_bytes());
        out.extend_from_slice(&1u16.to_le_bytes());
        out.extend_from_slice(&channels.to_le_bytes());
        out.extend_from_slice(&rate.to_le_bytes());
        out.extend_from_slice(&(rate * 2 * channels as u32).to_le_bytes());
        out.extend_from_slice(&(2 * channels).to_le_bytes());
        out.extend_from_slice(&bits.to_le_bytes());
        out.extend_from_slice(b"data");
        out.extend_from_slice(&data_len.to_le_bytes());
        for s in samples {
            out.extend_from_slice(&s.to_le_bytes());
        }
        out
    }

    #[test]
    fn single_zero_sample() {
        let w = decode_wav(&wav_bytes(1, 16, 16_000, &[0])).unwrap();
        assert_eq!(w.samples, vec![0.0]);
        assert_eq!(w.sample_rate_hz, 16_000);
    }

    #[test]
    fn full_scale_negative_is_minus_one() {
        let w = decode_wav(&wav_bytes(1, 16, 16_000, &[i16::MIN])).unwrap();
        assert_eq!(w.samples, vec![-1.0]);
    }

    #[test]
    fn stereo_rejected() {
        let bytes = wav_bytes(2, 16, 16_000, &[0, 0]);
        assert!(matches!(decode_wav(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn non_pcm_rejected() {
        let mut bytes = wav_bytes(1, 16, 16_000, &[0]);
        bytes[20] = 3; // IEEE float tag
        assert!(matches!(decode_wav(&bytes), Err(Error::Format(_))));
    }

    #[test]
    fn encode_decode_roundtrip_is_close() {
        let original = Waveform::new(vec![0.0, 0.5, -0.5, 0.999], 16_000).unwrap();
        let decoded = decode_wav(&encode_wav(&original)).unwrap();
        assert_eq!(decoded.samples.len(), original.samples.len());
        for (a, b) in original.samples.iter().zip(&decoded.samples) {
            assert!((a - b).abs() < 1.0 / 32000.0);
        }
    }

    #[test]
    fn encode_header_is_44_bytes() {
        let w = Waveform::new(vec![0.0], 16_000).unwrap();
        let bytes = encode_wav(&w);
        assert_eq!(bytes.len(), 46);
        assert_eq!(&bytes[0..4], b"RIFF");
        assert_eq!(&bytes[36..40], b"data");
    }
}
