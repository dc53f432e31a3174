//! Differentiable spectral operators for the enhancer → coder bridge.

use std::f64::consts::PI;
use std::rc::Rc;

use rustfft::num_complex::Complex64;

use super::gemm::{gemm, Layout};
use super::graph::{Graph, Op, Var};
use super::Tensor;
use crate::error::{Error, Result};
use crate::signal::{frame_count, ComplexSpectrogram, StftPlan};

/// Denominator guard for the derivative of |z|.
const MAG_EPS: f64 = 1e-9;

pub(crate) struct SynthesizeRecord {
    pub mag: Var,
    phasors: Rc<[Complex64]>,
    plan: Rc<StftPlan>,
    frames: usize,
}

impl SynthesizeRecord {
    pub fn backward(&self, g: &[f64]) -> Vec<f64> {
        let adj = self.plan.synthesize_adjoint(g, self.frames);
        adj.iter().zip(self.phasors.iter()).map(|(a, p)| a.re * p.re + a.im * p.im).collect()
    }
}

/// Windowed real DFT of overlapping frames expressed as two matrix products.
pub struct FrameAnalysis {
    pub fft_len: usize,
    pub hop: usize,
    bins: usize,
    cos_w: Vec<f64>,
    sin_w: Vec<f64>,
}

impl FrameAnalysis {
    pub fn new(window: &[f64], hop: usize) -> Self {
        let n = window.len();
        let bins = n / 2 + 1;
        let mut cos_w = vec![0.0; n * bins];
        let mut sin_w = vec![0.0; n * bins];
        for i in 0..n {
            for k in 0..bins {
                let a = 2.0 * PI * ((i * k) % n) as f64 / n as f64;
                cos_w[i * bins + k] = window[i] * a.cos();
                sin_w[i * bins + k] = -window[i] * a.sin();
            }
        }
        Self {
            fft_len: n,
            hop,
            bins,
            cos_w,
            sin_w,
        }
    }

    pub fn bins(&self) -> usize {
        self.bins
    }
}

pub(crate) struct FrameMagRecord {
    pub wave: Var,
    analysis: Rc<FrameAnalysis>,
    re: Vec<f64>,
    im: Vec<f64>,
    mag: Vec<f64>,
}

impl FrameMagRecord {
    pub fn backward(&self, g: &[f64], len: usize) -> Vec<f64> {
        let a = &*self.analysis;
        let (n, bins) = (a.fft_len, a.bins);
        let frames = self.mag.len() / bins;
        let mut d_re = vec![0.0; frames * bins];
        let mut d_im = vec![0.0; frames * bins];
        for i in 0..frames * bins {
            let s = g[i] / (self.mag[i] + MAG_EPS);
            d_re[i] = s * self.re[i];
            d_im[i] = s * self.im[i];
        }
        let mut d_frames = vec![0.0; frames * n];
        gemm(frames, bins, n, &d_re, Layout::rm(bins), &a.cos_w, Layout::tr(bins), &mut d_frames, 0.0);
        gemm(frames, bins, n, &d_im, Layout::rm(bins), &a.sin_w, Layout::tr(bins), &mut d_frames, 1.0);
        let mut dx = vec![0.0; len];
        for t in 0..frames {
            let start = t * a.hop;
            for i in 0..n {
                dx[start + i] += d_frames[t * n + i];
            }
        }
        dx
    }
}

impl Graph {
    /// Inverse STFT of `mag ⊙ phasors` where `mag: [F, T]` is differentiable and
    /// the unit phasors are fixed. Output: `[len]` samples.
    pub fn synthesize(&mut self, mag: Var, phasors: Rc<[Complex64]>, plan: Rc<StftPlan>, len: usize) -> Result<Var> {
        let (bins, frames) = self.value(mag).dims2()?;
        if bins != plan.config.bins() || phasors.len() != bins * frames {
            return Err(Error::Shape(format!(
                "synthesize: magnitude [{bins}, {frames}] with {} phasors for {} bins",
                phasors.len(),
                plan.config.bins()
            )));
        }
        let mut spec = ComplexSpectrogram::zeros(plan.config.clone(), frames, len, crate::signal::SAMPLE_RATE);
        for ((z, m), p) in spec.data.iter_mut().zip(&self.value(mag).data).zip(phasors.iter()) {
            *z = p * *m;
        }
        let samples = plan.synthesize(&spec);
        let rec = SynthesizeRecord {
            mag,
            phasors,
            plan,
            frames,
        };
        self.push(Tensor { shape: vec![len], data: samples }, Op::Synthesize(rec), &[mag])
    }

    /// Per-frame windowed DFT magnitudes of a 1-D signal: `[frames, fft_len/2 + 1]`.
    pub fn frame_magnitudes(&mut self, wave: Var, analysis: Rc<FrameAnalysis>) -> Result<Var> {
        let x = &self.value(wave).data;
        if self.value(wave).rank() != 1 || x.len() < analysis.fft_len {
            return Err(Error::Shape(format!(
                "frame_magnitudes: need a signal of at least {} samples, got {:?}",
                analysis.fft_len,
                self.value(wave).shape
            )));
        }
        let (n, bins) = (analysis.fft_len, analysis.bins);
        let frames = frame_count(x.len(), n, analysis.hop);
        let mut framed = vec![0.0; frames * n];
        for t in 0..frames {
            framed[t * n..(t + 1) * n].copy_from_slice(&x[t * analysis.hop..t * analysis.hop + n]);
        }
        let mut re = vec![0.0; frames * bins];
        let mut im = vec![0.0; frames * bins];
        gemm(frames, n, bins, &framed, Layout::rm(n), &analysis.cos_w, Layout::rm(bins), &mut re, 0.0);
        gemm(frames, n, bins, &framed, Layout::rm(n), &analysis.sin_w, Layout::rm(bins), &mut im, 0.0);
        let mag: Vec<f64> = re.iter().zip(&im).map(|(a, b)| (a * a + b * b).sqrt()).collect();
        let value = Tensor {
            shape: vec![frames, bins],
            data: mag.clone(),
        };
        let rec = FrameMagRecord {
            wave,
            analysis,
            re,
            im,
            mag,
        };
        self.push(value, Op::FrameMag(rec), &[wave])
    }
}
