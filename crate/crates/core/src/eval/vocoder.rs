//! Tone vocoder: one sinusoidal carrier per channel, amplitude-modulated by the
//! linearly interpolated electrodogram.

use std::f64::consts::PI;

use crate::ace::{build_channel_map, Electrodogram};
use crate::error::{Error, Result};
use crate::signal::{Waveform, SAMPLE_RATE};

#[derive(Debug, Clone, PartialEq)]
pub struct VocoderConfig {
    pub carrier_hz: Vec<f64>,
    /// Samples between electrodogram frames.
    pub hop: usize,
    /// Sample index of frame 0's centre.
    pub first_centre: usize,
    pub target_rms: f64,
    pub sample_rate_hz: u32,
}

impl Default for VocoderConfig {
    fn default() -> Self {
        let map = build_channel_map();
        Self {
            carrier_hz: map.centers_hz(),
            hop: map.hop,
            first_centre: map.fft_len / 2,
            target_rms: 0.05,
            sample_rate_hz: SAMPLE_RATE,
        }
    }
}

impl VocoderConfig {
    /// Output length matching the analysed waveform span of `frames` frames.
    pub fn default_len(&self, frames: usize) -> usize {
        if frames == 0 {
            0
        } else {
            (frames - 1) * self.hop + 2 * self.first_centre
        }
    }
}

/// Synthesize `len` samples (or the default span when `None`).
pub fn tone_vocode(e: &Electrodogram, cfg: &VocoderConfig, len: Option<usize>) -> Result<Waveform> {
    let m = e.channels();
    if m != cfg.carrier_hz.len() {
        return Err(Error::Shape(format!("{m} electrodogram channels for {} carriers", cfg.carrier_hz.len())));
    }
    let nyquist = cfg.sample_rate_hz as f64 / 2.0;
    if cfg.carrier_hz.windows(2).any(|w| w[1] <= w[0]) || cfg.carrier_hz.iter().any(|&f| f <= 0.0 || f >= nyquist) {
        return Err(Error::Config("carriers must increase strictly and stay below Nyquist".into()));
    }
    let len = len.unwrap_or_else(|| cfg.default_len(e.frames()));
    let mut out = vec![0.0; len];
    let frames = e.frames();
    if frames == 0 || cfg.hop == 0 {
        return Ok(Waveform::new(out, cfg.sample_rate_hz));
    }
    let rate = cfg.sample_rate_hz as f64;
    for (ch, &fc) in cfg.carrier_hz.iter().enumerate() {
        let env: Vec<f64> = (0..frames).map(|t| e.values.get(t, ch)).collect();
        if env.iter().all(|&v| v == 0.0) {
            continue;
        }
        let w = 2.0 * PI * fc / rate;
        for (n, o) in out.iter_mut().enumerate() {
            let pos = (n as f64 - cfg.first_centre as f64) / cfg.hop as f64;
            let amp = if pos <= 0.0 {
                env[0]
            } else if pos >= (frames - 1) as f64 {
                env[frames - 1]
            } else {
                let i = pos.floor() as usize;
                let f = pos - i as f64;
                env[i] * (1.0 - f) + env[i + 1] * f
            };
            if amp != 0.0 {
                *o += amp * (w * n as f64).sin();
            }
        }
    }
    let r = crate::signal::rms(&out);
    if r > 0.0 {
        let g = cfg.target_rms / r;
        out.iter_mut().for_each(|v| *v *= g);
    }
    Ok(Waveform::new(out, cfg.sample_rate_hz))
}

#[cfg(test)]
mod tests {
    use rustfft::num_complex::Complex64;
    use rustfft::FftPlanner;

    use super::*;
    use crate::frames::FrameMatrix;

    fn elec(frames: usize, f: impl Fn(usize, usize) -> f64) -> Electrodogram {
        let mut v = FrameMatrix::zeros(frames, 22);
        for t in 0..frames {
            for c in 0..22 {
                v.data[t * 22 + c] = f(t, c);
            }
        }
        Electrodogram {
            values: v,
            n_active: 8,
            frame_rate: 500.0,
        }
    }

    fn power_spectrum(x: &[f64]) -> Vec<f64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&s| Complex64::new(s, 0.0)).collect();
        FftPlanner::new().plan_fft_forward(x.len()).process(&mut buf);
        buf[..x.len() / 2].iter().map(|z| z.norm_sqr()).collect()
    }

    #[test]
    fn zero_electrodogram_is_silent() {
        let w = tone_vocode(&elec(50, |_, _| 0.0), &VocoderConfig::default(), None).unwrap();
        assert_eq!(w.len(), 49 * 32 + 128);
        assert!(w.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_channel_power_near_its_carrier() {
        let cfg = VocoderConfig::default();
        let w = tone_vocode(&elec(500, |_, c| if c == 9 { 1.0 } else { 0.0 }), &cfg, Some(16000)).unwrap();
        assert!((w.rms() - 0.05).abs() < 1e-12);
        let p = power_spectrum(&w.samples);
        let fc = cfg.carrier_hz[9];
        let near: f64 = p.iter().enumerate().filter(|(k, _)| (*k as f64 - fc).abs() <= 50.0).map(|(_, v)| v).sum();
        assert!(near / p.iter().sum::<f64>() >= 0.9);
    }

    #[test]
    fn all_channels_give_peaks_at_every_carrier() {
        let cfg = VocoderConfig::default();
        let w = tone_vocode(&elec(500, |_, _| 1.0), &cfg, Some(16000)).unwrap();
        let p = power_spectrum(&w.samples);
        let floor = p.iter().sum::<f64>() / p.len() as f64;
        for &fc in &cfg.carrier_hz {
            let k = fc.round() as usize;
            let local = p[k - 2..=k + 2].iter().cloned().fold(0.0, f64::max);
            assert!(local > 100.0 * floor, "{fc}");
        }
    }

    #[test]
    fn envelope_is_linearly_interpolated() {
        let cfg = VocoderConfig::default();
        let e = elec(3, |t, c| if c == 0 { [0.0, 1.0, 0.0][t] } else { 0.0 });
        let w = tone_vocode(&e, &cfg, Some(200)).unwrap();
        // amplitude is zero at and before frame 0's centre, then ramps up
        assert!(w.samples[..=64].iter().all(|&v| v == 0.0));
        let early = crate::signal::rms(&w.samples[65..80]);
        let late = crate::signal::rms(&w.samples[85..100]);
        assert!(late > early && early > 0.0);
    }
}
