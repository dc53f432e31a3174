//! Minimal RIFF/WAVE codec: mono PCM16 and IEEE float32 in and out.

use std::path::Path;

use super::Waveform;
use crate::error::{Error, Result};

const FORMAT_PCM: u16 = 1;
const FORMAT_IEEE_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

pub fn read_wav(path: impl AsRef<Path>) -> Result<Waveform> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_wav(&bytes)
}

pub fn write_wav(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_wav_pcm16(w)).map_err(|e| Error::io(path, e))
}

pub fn write_wav_f32(path: impl AsRef<Path>, w: &Waveform) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_wav_f32(w)).map_err(|e| Error::io(path, e))
}

fn u16_at(b: &[u8], at: usize) -> u16 {
    u16::from_le_bytes([b[at], b[at + 1]])
}

fn u32_at(b: &[u8], at: usize) -> u32 {
    u32::from_le_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

struct Fmt {
    format: u16,
    channels: u16,
    rate: u32,
    bits: u16,
    block_align: u16,
}

/// Decode a WAV byte stream. Never panics on malformed input.
pub fn decode_wav(bytes: &[u8]) -> Result<Waveform> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(Error::Format("missing RIFF/WAVE signature".into()));
    }
    let mut pos = 12usize;
    let mut fmt: Option<Fmt> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start
            .checked_add(size)
            .ok_or_else(|| Error::Format("chunk size overflow".into()))?;
        if id == b"data" {
            // Streaming writers sometimes leave the data size at its maximum.
            let end = body_end.min(bytes.len());
            data = Some(&bytes[body_start..end]);
            if fmt.is_some() {
                break;
            }
        } else if id == b"fmt " {
            if body_end > bytes.len() || size < 16 {
                return Err(Error::Format("truncated fmt chunk".into()));
            }
            let b = &bytes[body_start..body_end];
            let mut format = u16_at(b, 0);
            if format == FORMAT_EXTENSIBLE {
                if size < 26 {
                    return Err(Error::Format("truncated WAVE_FORMAT_EXTENSIBLE".into()));
                }
                format = u16_at(b, 24);
            }
            fmt = Some(Fmt {
                format,
                channels: u16_at(b, 2),
                rate: u32_at(b, 4),
                block_align: u16_at(b, 12),
                bits: u16_at(b, 14),
            });
        }
        // Chunks are word aligned.
        pos = match body_end.checked_add(size & 1) {
            Some(p) => p,
            None => break,
        };
    }
    let fmt = fmt.ok_or_else(|| Error::Format("no fmt chunk".into()))?;
    let data = data.ok_or_else(|| Error::Format("no data chunk".into()))?;
    if fmt.channels != 1 {
        return Err(Error::UnsupportedLayout(format!(
            "{} channels (mono required)",
            fmt.channels
        )));
    }
    if fmt.rate == 0 {
        return Err(Error::Format("zero sample rate".into()));
    }
    let samples: Vec<f64> = match (fmt.format, fmt.bits) {
        (FORMAT_PCM, 16) => {
            if fmt.block_align != 2 {
                return Err(Error::Format("inconsistent block align for PCM16".into()));
            }
            data.chunks_exact(2)
                .map(|c| i16::from_le_bytes([c[0], c[1]]) as f64 / 32768.0)
                .collect()
        }
        (FORMAT_IEEE_FLOAT, 32) => {
            if fmt.block_align != 4 {
                return Err(Error::Format("inconsistent block align for float32".into()));
            }
            let v: Vec<f64> = data
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            if v.iter().any(|s| !s.is_finite()) {
                return Err(Error::Format("non-finite float sample".into()));
            }
            v
        }
        (f, b) => {
            return Err(Error::UnsupportedLayout(format!(
                "sample format {f} with {b} bits"
            )))
        }
    };
    Ok(Waveform::new(samples, fmt.rate))
}

fn quantize(s: f64) -> i16 {
    (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16
}

pub fn encode_wav_pcm16(w: &Waveform) -> Vec<u8> {
    let data_len = (w.samples.len() * 2) as u32;
    let mut out = Vec::with_capacity(44 + data_len as usize);
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_PCM.to_le_bytes());
    out.extend_from_slice(&1u16.to_le_bytes());
    out.extend_from_slice(&w.sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(w.sample_rate_hz * 2).to_le_bytes());
    out.extend_from_slice(&2u16.to_le_bytes());
    out.extend_from_slice(&16u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &w.samples {
        out.extend_from_slice(&quantize(s).to_le_bytes());
    }
    out
}

/// Mono IEEE float32 WAV; lossless for values already representable as f32.
pub fn encode_wav_f32(w: &Waveform) -> Vec<u8> {
    encode_f32_interleaved(w, 1)
}

/// `channels` only sets the header; samples are written as given.
fn encode_f32_interleaved(w: &Waveform, channels: u16) -> Vec<u8> {
    let data_len = (w.samples.len() * 4) as u32;
    let mut out = Vec::new();
    out.extend_from_slice(b"RIFF");
    out.extend_from_slice(&(36 + data_len).to_le_bytes());
    out.extend_from_slice(b"WAVE");
    out.extend_from_slice(b"fmt ");
    out.extend_from_slice(&16u32.to_le_bytes());
    out.extend_from_slice(&FORMAT_IEEE_FLOAT.to_le_bytes());
    out.extend_from_slice(&channels.to_le_bytes());
    out.extend_from_slice(&w.sample_rate_hz.to_le_bytes());
    out.extend_from_slice(&(w.sample_rate_hz * 4 * channels as u32).to_le_bytes());
    out.extend_from_slice(&(4 * channels).to_le_bytes());
    out.extend_from_slice(&32u16.to_le_bytes());
    out.extend_from_slice(b"data");
    out.extend_from_slice(&data_len.to_le_bytes());
    for &s in &w.samples {
        out.extend_from_slice(&(s as f32).to_le_bytes());
    }
    out
}
