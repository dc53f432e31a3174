use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::ChannelMap;
use crate::error::{Error, Result};
use crate::frames::FrameMatrix;
use crate::signal::{frame_count, periodic_hann, Waveform};

/// Envelope of a full-scale sine centred on a single-bin channel with the
/// standard 128-point Hann analysis. Used when no corpus peak is known.
pub const DEFAULT_REFERENCE_PEAK: f64 = 32.0;

/// Channel envelopes, one row per analysis frame, normalized to [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct EnvelopeMatrix {
    pub values: FrameMatrix,
    pub frame_rate: f64,
    pub reference_peak: f64,
}

/// Framing, windowing and FFT front-end shared by ACE and the neural strategy.
pub struct AceAnalyzer {
    pub map: ChannelMap,
    window: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl AceAnalyzer {
    pub fn new(map: ChannelMap) -> Self {
        let fft = FftPlanner::new().plan_fft_forward(map.fft_len);
        Self {
            window: periodic_hann(map.fft_len),
            map,
            fft,
        }
    }

    pub fn window(&self) -> &[f64] {
        &self.window
    }

    pub fn frames_for(&self, len: usize) -> usize {
        frame_count(len, self.map.fft_len, self.map.hop)
    }

    /// Per-frame FFT magnitudes, `frames × (fft_len/2 + 1)`.
    pub fn magnitudes(&self, samples: &[f64]) -> Result<FrameMatrix> {
        let n = self.map.fft_len;
        if samples.len() < n {
            return Err(Error::Length {
                needed: n,
                got: samples.len(),
            });
        }
        let frames = self.frames_for(samples.len());
        let bins = self.map.bins();
        let mut out = FrameMatrix::zeros(frames, bins);
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for t in 0..frames {
            let start = t * self.map.hop;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(self.window[i] * samples[start + i], 0.0);
            }
            self.fft.process(&mut buf);
            for (o, z) in out.row_mut(t).iter_mut().zip(&buf[..bins]) {
                *o = z.norm();
            }
        }
        Ok(out)
    }

    /// Unnormalized channel envelopes: root of summed bin power per channel.
    pub fn raw_envelopes(&self, mag: &FrameMatrix) -> FrameMatrix {
        let m = self.map.channels();
        let mut env = FrameMatrix::zeros(mag.frames, m);
        for t in 0..mag.frames {
            let row = mag.row(t);
            for (ch, span) in self.map.entries.iter().enumerate() {
                let p: f64 = span.bins().map(|b| row[b] * row[b]).sum();
                env.data[t * m + ch] = p.sqrt();
            }
        }
        env
    }

    pub fn analyze(&self, w: &Waveform, reference_peak: Option<f64>) -> Result<(EnvelopeMatrix, FrameMatrix)> {
        let mag = self.magnitudes(&w.samples)?;
        let raw = self.raw_envelopes(&mag);
        let peak = match reference_peak {
            Some(p) => p,
            None => raw.max(),
        };
        Ok((normalize(raw, peak, self.map.frame_rate()), mag))
    }
}

fn normalize(mut raw: FrameMatrix, peak: f64, frame_rate: f64) -> EnvelopeMatrix {
    let scale = if peak > 0.0 { 1.0 / peak } else { 1.0 };
    raw.data.iter_mut().for_each(|v| *v = (*v * scale).clamp(0.0, 1.0));
    EnvelopeMatrix {
        values: raw,
        frame_rate,
        reference_peak: if peak > 0.0 { peak } else { 1.0 },
    }
}

/// Envelopes and the 65-bin magnitudes for one waveform. With
/// `reference_peak = None` the waveform's own envelope maximum is used.
pub fn analyze_envelopes(w: &Waveform, map: &ChannelMap, reference_peak: Option<f64>) -> Result<(EnvelopeMatrix, FrameMatrix)> {
    AceAnalyzer::new(map.clone()).analyze(w, reference_peak)
}

/// Largest raw channel envelope over a corpus.
pub fn corpus_reference_peak<'a>(corpus: impl IntoIterator<Item = &'a Waveform>, map: &ChannelMap) -> Result<f64> {
    let a = AceAnalyzer::new(map.clone());
    let mut peak = 0.0f64;
    for w in corpus {
        let mag = a.magnitudes(&w.samples)?;
        peak = peak.max(a.raw_envelopes(&mag).max());
    }
    Ok(peak)
}
