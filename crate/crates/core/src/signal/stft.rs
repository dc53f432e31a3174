//! Uncentered STFT with least-squares (dual-window) overlap-add inverse.
//!
//! Frames start at sample 0: column `t` covers `[t*hop, t*hop + window_len)`.
//! The inverse divides the windowed overlap-add by `sum_t w^2(n - t*hop)`, which
//! reconstructs exactly wherever that sum is nonzero, independent of whether the
//! window/hop pair satisfies COLA.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::Waveform;
use crate::error::{Error, Result};

/// Samples whose dual-window denominator falls below this (relative to its
/// maximum) are not reconstructible and come out as zero.
const DENOM_FLOOR: f64 = 1e-10;

pub fn periodic_hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / n as f64).cos())
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct StftConfig {
    pub window_len: usize,
    pub hop: usize,
    pub window: Vec<f64>,
}

impl Default for StftConfig {
    fn default() -> Self {
        Self::hann(510, 128)
    }
}

impl StftConfig {
    pub fn hann(window_len: usize, hop: usize) -> Self {
        assert!(window_len >= 2 && hop >= 1);
        Self {
            window_len,
            hop,
            window: periodic_hann(window_len),
        }
    }

    pub fn fft_len(&self) -> usize {
        self.window_len
    }

    pub fn bins(&self) -> usize {
        self.window_len / 2 + 1
    }

    pub fn frames_for(&self, len: usize) -> usize {
        frame_count(len, self.window_len, self.hop)
    }

    /// Number of samples spanned by `frames` frames.
    pub fn span(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            (frames - 1) * self.hop + self.window_len
        }
    }
}

/// `floor((len - window) / hop) + 1`, or 0 when the signal is shorter than one window.
pub fn frame_count(len: usize, window: usize, hop: usize) -> usize {
    if len < window {
        0
    } else {
        (len - window) / hop + 1
    }
}

/// F×T complex matrix, row-major (`data[f * frames + t]`).
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexSpectrogram {
    pub data: Vec<Complex64>,
    pub bins: usize,
    pub frames: usize,
    pub config: StftConfig,
    pub origin_len: usize,
    pub sample_rate_hz: u32,
}

impl ComplexSpectrogram {
    pub fn zeros(config: StftConfig, frames: usize, origin_len: usize, sample_rate_hz: u32) -> Self {
        let bins = config.bins();
        Self {
            data: vec![Complex64::new(0.0, 0.0); bins * frames],
            bins,
            frames,
            config,
            origin_len,
            sample_rate_hz,
        }
    }

    pub fn at(&self, f: usize, t: usize) -> Complex64 {
        self.data[f * self.frames + t]
    }

    pub fn magnitude(&self) -> Vec<f64> {
        self.data.iter().map(|z| z.norm()).collect()
    }

    /// Unit phasors; bins with zero magnitude get phase 0.
    pub fn phasors(&self) -> Vec<Complex64> {
        self.data
            .iter()
            .map(|z| {
                let m = z.norm();
                if m > 0.0 {
                    z / m
                } else {
                    Complex64::new(1.0, 0.0)
                }
            })
            .collect()
    }

    pub fn scale(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.data.iter_mut().for_each(|z| *z *= c);
        out
    }
}

/// FFT plans plus the synthesis denominator cache for one configuration.
pub struct StftPlan {
    pub config: StftConfig,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl StftPlan {
    pub fn new(config: &StftConfig) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            config: config.clone(),
            forward: planner.plan_fft_forward(config.window_len),
            inverse: planner.plan_fft_inverse(config.window_len),
        }
    }

    pub fn analyze(&self, samples: &[f64], origin_len: usize, sample_rate_hz: u32) -> Result<ComplexSpectrogram> {
        let cfg = &self.config;
        let n = cfg.window_len;
        if samples.len() < n {
            return Err(Error::Length {
                needed: n,
                got: samples.len(),
            });
        }
        let frames = cfg.frames_for(samples.len());
        let mut spec = ComplexSpectrogram::zeros(cfg.clone(), frames, origin_len, sample_rate_hz);
        let bins = spec.bins;
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for t in 0..frames {
            let start = t * cfg.hop;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = Complex64::new(cfg.window[i] * samples[start + i], 0.0);
            }
            self.forward.process(&mut buf);
            for f in 0..bins {
                spec.data[f * frames + t] = buf[f];
            }
        }
        Ok(spec)
    }

    /// `sum_t w^2(n - t*hop)` over the first `len` samples.
    pub fn denominator(&self, frames: usize, len: usize) -> Vec<f64> {
        let cfg = &self.config;
        let mut d = vec![0.0; len];
        for t in 0..frames {
            let start = t * cfg.hop;
            for i in 0..cfg.window_len {
                if start + i < len {
                    d[start + i] += cfg.window[i] * cfg.window[i];
                }
            }
        }
        d
    }

    fn inverse_weights(&self, frames: usize, len: usize) -> Vec<f64> {
        let d = self.denominator(frames, len);
        let peak = d.iter().cloned().fold(0.0, f64::max);
        d.iter()
            .map(|&v| if v > DENOM_FLOOR * peak.max(f64::MIN_POSITIVE) { 1.0 / v } else { 0.0 })
            .collect()
    }

    /// Hermitian-extend one column, inverse FFT, and return the real frame (1/N scaled).
    fn column_to_frame(&self, spec: &ComplexSpectrogram, t: usize, buf: &mut [Complex64]) {
        let n = self.config.window_len;
        let bins = spec.bins;
        for f in 0..bins {
            buf[f] = spec.data[f * spec.frames + t];
        }
        buf[0].im = 0.0;
        if n % 2 == 0 {
            buf[n / 2].im = 0.0;
        }
        for f in bins..n {
            buf[f] = buf[n - f].conj();
        }
        self.inverse.process(buf);
        let scale = 1.0 / n as f64;
        buf.iter_mut().for_each(|z| *z *= scale);
    }

    pub fn synthesize(&self, spec: &ComplexSpectrogram) -> Vec<f64> {
        let cfg = &self.config;
        let n = cfg.window_len;
        let len = spec.origin_len;
        let mut acc = vec![0.0; len];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for t in 0..spec.frames {
            self.column_to_frame(spec, t, &mut buf);
            let start = t * cfg.hop;
            for i in 0..n {
                if start + i < len {
                    acc[start + i] += cfg.window[i] * buf[i].re;
                }
            }
        }
        let inv = self.inverse_weights(spec.frames, len);
        acc.iter_mut().zip(&inv).for_each(|(a, w)| *a *= w);
        acc
    }

    /// Adjoint of [`StftPlan::synthesize`] with respect to the spectrogram entries,
    /// treating each complex entry as the real pair (re, im). Returns the gradient
    /// as complex numbers `dL/dre + i dL/dim`, F×T row-major.
    pub fn synthesize_adjoint(&self, grad: &[f64], frames: usize) -> Vec<Complex64> {
        let cfg = &self.config;
        let n = cfg.window_len;
        let bins = cfg.bins();
        let len = grad.len();
        let inv = self.inverse_weights(frames, len);
        let mut out = vec![Complex64::new(0.0, 0.0); bins * frames];
        let mut buf = vec![Complex64::new(0.0, 0.0); n];
        for t in 0..frames {
            let start = t * cfg.hop;
            for (i, b) in buf.iter_mut().enumerate() {
                let v = if start + i < len {
                    grad[start + i] * inv[start + i] * cfg.window[i]
                } else {
                    0.0
                };
                *b = Complex64::new(v, 0.0);
            }
            self.forward.process(&mut buf);
            for f in 0..bins {
                let edge = f == 0 || (n % 2 == 0 && f == n / 2);
                let c = if edge { 1.0 } else { 2.0 } / n as f64;
                let mut g = buf[f] * c;
                if edge {
                    g.im = 0.0;
                }
                out[f * frames + t] = g;
            }
        }
        out
    }
}

pub fn stft(w: &Waveform, cfg: &StftConfig) -> Result<ComplexSpectrogram> {
    StftPlan::new(cfg).analyze(&w.samples, w.len(), w.sample_rate_hz)
}

pub fn istft(s: &ComplexSpectrogram) -> Waveform {
    Waveform::new(StftPlan::new(&s.config).synthesize(s), s.sample_rate_hz)
}
