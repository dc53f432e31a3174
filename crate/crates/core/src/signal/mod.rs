//! Waveforms, WAV I/O, resampling and the short-time Fourier transform.

mod resample;
mod stft;
pub mod wav;

pub use resample::resample;
pub use stft::{frame_count, istft, periodic_hann, stft, ComplexSpectrogram, StftConfig, StftPlan};
pub use wav::{read_wav, write_wav, write_wav_f32};

use crate::error::{Error, Result};

/// Pipeline-wide working rate.
pub const SAMPLE_RATE: u32 = 16_000;

#[derive(Debug, Clone, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate_hz: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate_hz: u32) -> Self {
        Self {
            samples,
            sample_rate_hz,
        }
    }

    pub fn zeros(len: usize, sample_rate_hz: u32) -> Self {
        Self::new(vec![0.0; len], sample_rate_hz)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate_hz as f64
    }

    pub fn rms(&self) -> f64 {
        rms(&self.samples)
    }

    pub fn peak(&self) -> f64 {
        self.samples.iter().fold(0.0f64, |m, s| m.max(s.abs()))
    }

    /// Canonicalize to the pipeline rate.
    pub fn to_pipeline_rate(self) -> Waveform {
        if self.sample_rate_hz == SAMPLE_RATE {
            self
        } else {
            resample(&self, SAMPLE_RATE)
        }
    }

    /// Round every sample to the nearest f32, the precision of stored corpus files.
    pub fn round_to_f32(mut self) -> Waveform {
        self.samples.iter_mut().for_each(|s| *s = *s as f32 as f64);
        self
    }

    pub fn ensure_finite(&self) -> Result<()> {
        match self.samples.iter().position(|s| !s.is_finite()) {
            Some(i) => Err(Error::Numeric(format!("non-finite sample at index {i}"))),
            None => Ok(()),
        }
    }
}

pub fn rms(x: &[f64]) -> f64 {
    if x.is_empty() {
        return 0.0;
    }
    (x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64).sqrt()
}
