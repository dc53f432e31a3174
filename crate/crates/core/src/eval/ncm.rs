//! Normalized covariance measure: per-band envelope correlation mapped to an
//! apparent SNR and a transmission index.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use crate::error::{Error, Result};
use crate::signal::Waveform;

pub const NCM_BANDS: usize = 20;
const LOW_HZ: f64 = 150.0;
const HIGH_HZ: f64 = 8000.0;
const ENVELOPE_CUTOFF_HZ: f64 = 25.0;
const ENVELOPE_RATE_HZ: f64 = 100.0;

fn erb_rate(f: f64) -> f64 {
    21.4 * (1.0 + 0.004_37 * f).log10()
}

fn erb_rate_inv(e: f64) -> f64 {
    (10f64.powf(e / 21.4) - 1.0) / 0.004_37
}

fn erb(f: f64) -> f64 {
    24.7 * (1.0 + 0.004_37 * f)
}

/// Centre frequencies: ERB-rate midpoints of `NCM_BANDS` equal ERB-rate bands
/// spanning `LOW_HZ..HIGH_HZ`.
pub fn band_centres() -> Vec<f64> {
    let (lo, hi) = (erb_rate(LOW_HZ), erb_rate(HIGH_HZ));
    let step = (hi - lo) / NCM_BANDS as f64;
    (0..NCM_BANDS).map(|b| erb_rate_inv(lo + step * (b as f64 + 0.5))).collect()
}

/// Fourth-order gammatone band signal via frequency shift and four complex
/// one-pole low-pass stages.
fn gammatone(x: &[f64], fc: f64, rate: f64) -> Vec<f64> {
    let b = 2.0 * PI * 1.019 * erb(fc);
    let a = (-b / rate).exp();
    let w = 2.0 * PI * fc / rate;
    let mut stages = [Complex64::new(0.0, 0.0); 4];
    // per-stage unity gain at DC of the shifted signal
    let g = 1.0 - a;
    x.iter()
        .enumerate()
        .map(|(n, &v)| {
            let osc = Complex64::from_polar(1.0, -w * n as f64);
            let mut s = osc * v;
            for st in stages.iter_mut() {
                *st = *st * a + s * g;
                s = *st;
            }
            2.0 * (s * osc.conj()).re
        })
        .collect()
}

/// Second-order Butterworth low-pass (bilinear transform), applied forward only.
fn butter_lowpass(x: &[f64], cutoff: f64, rate: f64) -> Vec<f64> {
    let k = (PI * cutoff / rate).tan();
    let norm = 1.0 / (1.0 + 2f64.sqrt() * k + k * k);
    let b0 = k * k * norm;
    let (b1, b2) = (2.0 * b0, b0);
    let a1 = 2.0 * (k * k - 1.0) * norm;
    let a2 = (1.0 - 2f64.sqrt() * k + k * k) * norm;
    let (mut x1, mut x2, mut y1, mut y2) = (0.0, 0.0, 0.0, 0.0);
    x.iter()
        .map(|&v| {
            let y = b0 * v + b1 * x1 + b2 * x2 - a1 * y1 - a2 * y2;
            x2 = x1;
            x1 = v;
            y2 = y1;
            y1 = y;
            y
        })
        .collect()
}

fn envelope(x: &[f64], fc: f64, rate: f64) -> Vec<f64> {
    let band = gammatone(x, fc, rate);
    let rectified: Vec<f64> = band.iter().map(|v| v.abs()).collect();
    let smooth = butter_lowpass(&rectified, ENVELOPE_CUTOFF_HZ, rate);
    let step = (rate / ENVELOPE_RATE_HZ).round().max(1.0) as usize;
    smooth.iter().step_by(step).copied().collect()
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa <= 0.0 {
        None
    } else if sbb <= 0.0 {
        Some(0.0)
    } else {
        Some(sab / (saa * sbb).sqrt())
    }
}

/// Transmission index for a normalized covariance `r`.
pub fn transmission_index(r: f64) -> f64 {
    let r2 = r * r;
    let snr = if r2 >= 1.0 {
        15.0
    } else if r2 <= 0.0 {
        -15.0
    } else {
        (10.0 * (r2 / (1.0 - r2)).log10()).clamp(-15.0, 15.0)
    };
    (snr + 15.0) / 30.0
}

/// Uniformly weighted mean transmission index over the bands where the clean
/// envelope varies.
pub fn ncm(clean: &Waveform, proc: &Waveform) -> Result<f64> {
    if clean.sample_rate_hz != proc.sample_rate_hz {
        return Err(Error::Shape("clean and processed sample rates differ".into()));
    }
    let n = clean.len().min(proc.len());
    let (x, y) = (&clean.samples[..n], &proc.samples[..n]);
    if x.iter().all(|&v| v == 0.0) || y.iter().all(|&v| v == 0.0) {
        return Err(Error::UndefinedMetric("silent input".into()));
    }
    let rate = clean.sample_rate_hz as f64;
    let mut sum = 0.0;
    let mut count = 0;
    for fc in band_centres() {
        if fc >= rate / 2.0 {
            continue;
        }
        let (ex, ey) = (envelope(x, fc, rate), envelope(y, fc, rate));
        if let Some(r) = pearson(&ex, &ey) {
            sum += transmission_index(r);
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::UndefinedMetric("no band with a varying clean envelope".into()));
    }
    Ok(sum / count as f64)
}
