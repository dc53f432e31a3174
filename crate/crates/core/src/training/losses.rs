use std::rc::Rc;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::ace::Electrodogram;
use crate::error::{Error, Result};
use crate::frames::FrameMatrix;
use crate::nn::{FrameAnalysis, Graph, Var};
use crate::signal::{periodic_hann, StftConfig, StftPlan};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { alpha: 1.0, beta: 0.5 }
    }
}

impl LossWeights {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        let w = Self { alpha, beta };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.alpha) || !ok(self.beta) {
            return Err(Error::Config(format!("loss weights must be finite and ≥ 0, got α={} β={}", self.alpha, self.beta)));
        }
        if self.alpha == 0.0 && self.beta == 0.0 {
            return Err(Error::Config("loss weights α and β cannot both be zero".into()));
        }
        Ok(())
    }
}

fn mse(a: &FrameMatrix, b: &FrameMatrix, what: &str) -> Result<f64> {
    if (a.frames, a.width) != (b.frames, b.width) {
        return Err(Error::Shape(format!(
            "{what}: {}×{} vs {}×{}",
            a.frames, a.width, b.frames, b.width
        )));
    }
    if a.data.is_empty() {
        return Ok(0.0);
    }
    let s: f64 = a.data.iter().zip(&b.data).map(|(x, y)| (x - y) * (x - y)).sum();
    Ok(s / a.data.len() as f64)
}

/// Mean squared error between two magnitude spectrograms.
pub fn spec_loss(enhanced_mag: &FrameMatrix, clean_mag: &FrameMatrix) -> Result<f64> {
    mse(enhanced_mag, clean_mag, "spec_loss")
}

/// Mean squared error over every channel and frame, zeros included.
pub fn elec_loss(enhanced: &Electrodogram, clean: &Electrodogram) -> Result<f64> {
    mse(&enhanced.values, &clean.values, "elec_loss")
}

pub fn total_loss(spec: f64, elec: f64, w: LossWeights) -> f64 {
    w.alpha * spec + w.beta * elec
}

/// Graph form of [`total_loss`].
pub fn total_loss_graph(g: &mut Graph, spec: Var, elec: Option<Var>, w: LossWeights) -> Result<Var> {
    let s = g.scale(spec, w.alpha)?;
    match elec {
        Some(e) => {
            let e = g.scale(e, w.beta)?;
            g.add(s, e)
        }
        None => Ok(s),
    }
}

/// Differentiable path from an enhanced magnitude spectrogram to an
/// electrodogram: inverse STFT with the noisy phase, coder framing, per-frame
/// magnitudes, input scaling, the (frozen) channel-selection network and top-k.
pub struct Bridge {
    pub plan: Rc<StftPlan>,
    pub analysis: Rc<FrameAnalysis>,
    pub input_scale: f64,
    pub k: usize,
}

impl Bridge {
    pub fn new(stft: &StftConfig, coder_window: usize, coder_hop: usize, input_scale: f64, k: usize) -> Self {
        Self {
            plan: Rc::new(StftPlan::new(stft)),
            analysis: Rc::new(FrameAnalysis::new(&periodic_hann(coder_window), coder_hop)),
            input_scale,
            k,
        }
    }

    /// 510/128 enhancer STFT into 128/32 ACE framing and top-8 selection.
    pub fn standard(input_scale: f64) -> Self {
        let map = crate::ace::build_channel_map();
        Self::new(&StftConfig::default(), map.fft_len, map.hop, input_scale, crate::ace::N_TOPK)
    }

    /// Coder frames produced from `len` samples.
    pub fn coder_frames(&self, len: usize) -> usize {
        crate::signal::frame_count(len, self.analysis.fft_len, self.analysis.hop)
    }

    /// `mag: [F, T]` → electrodogram `[frames, channels]`. `encoder` maps the
    /// scaled per-frame magnitudes to pre-selection envelopes.
    pub fn electrodogram(
        &self,
        g: &mut Graph,
        mag: Var,
        phasors: Rc<[Complex64]>,
        encoder: &dyn Fn(&mut Graph, Var) -> Result<Var>,
    ) -> Result<Var> {
        let (_, frames) = g.value(mag).dims2()?;
        let len = self.plan.config.span(frames);
        let wave = g.synthesize(mag, phasors, self.plan.clone(), len)?;
        let m = g.frame_magnitudes(wave, self.analysis.clone())?;
        let x = g.scale(m, self.input_scale)?;
        let env = encoder(g, x)?;
        g.topk_mask(env, self.k)
    }
}
