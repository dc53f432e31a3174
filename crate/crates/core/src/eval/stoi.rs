//! STOI and ESTOI.
//!
//! Front-end: polyphase resampling to 10 kHz with a Kaiser-windowed sinc,
//! removal of frames more than 40 dB below the loudest clean frame,
//! 256-sample frames at 50% overlap, 512-point FFT, and 15 one-third-octave
//! bands from 150 Hz. Intermediate measures use 30-frame segments.

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::signal::Waveform;

const FS: u32 = 10_000;
const FRAME: usize = 256;
const HOP: usize = 128;
const NFFT: usize = 512;
const BANDS: usize = 15;
const MIN_FREQ: f64 = 150.0;
const SEGMENT: usize = 30;
const BETA_DB: f64 = -15.0;
const DYN_RANGE_DB: f64 = 40.0;
const EPS: f64 = f64::EPSILON;

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Modified Bessel function of the first kind, order 0.
fn bessel_i0(x: f64) -> f64 {
    let (mut sum, mut term) = (1.0, 1.0);
    let q = x * x / 4.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

/// Anti-aliasing filter: sinc at `1/(2·max(p, q))` with 60 dB Kaiser window.
fn resample_filter(p: usize, q: usize) -> Vec<f64> {
    let cutoff = 1.0 / (2.0 * p.max(q) as f64);
    let roll_off = cutoff / 10.0;
    let rejection_db = 60.0;
    let half = ((rejection_db - 8.0) / (28.714 * roll_off)).ceil() as i64;
    let beta = 0.1102 * (rejection_db - 8.7);
    let m = (2 * half) as f64;
    let i0b = bessel_i0(beta);
    let h: Vec<f64> = (-half..=half)
        .map(|t| {
            let x = 2.0 * cutoff * t as f64;
            let sinc = if t == 0 { 1.0 } else { (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x) };
            let r = 2.0 * (t + half) as f64 / m - 1.0;
            let kaiser = bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / i0b;
            kaiser * 2.0 * p as f64 * cutoff * sinc
        })
        .collect();
    let s: f64 = h.iter().sum();
    h.iter().map(|v| v / s).collect()
}

/// Rational resampling by `p/q`; output sample `m` sits at input time `m·q/p`.
fn resample_rational(x: &[f64], p: usize, q: usize) -> Vec<f64> {
    let g = gcd(p, q);
    let (p, q) = (p / g, q / g);
    if p == q {
        return x.to_vec();
    }
    let h = resample_filter(p, q);
    let half = (h.len() - 1) / 2;
    let n_out = (x.len() * p).div_ceil(q);
    (0..n_out)
        .map(|m| {
            // upsampled index j = k·p contributes h[m·q − k·p + half]
            let centre = (m * q + half) as i64;
            let k_lo = (centre - (h.len() as i64 - 1)).max(0).div_euclid(p as i64);
            let k_hi = (centre.div_euclid(p as i64)).min(x.len() as i64 - 1);
            let mut acc = 0.0;
            let mut k = k_lo;
            while k <= k_hi {
                let idx = centre - k * p as i64;
                if idx >= 0 && (idx as usize) < h.len() {
                    acc += x[k as usize] * h[idx as usize];
                }
                k += 1;
            }
            acc * p as f64
        })
        .collect()
}

/// `hanning(N + 2)` without its zero endpoints.
fn frame_window() -> Vec<f64> {
    (1..=FRAME)
        .map(|n| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / (FRAME + 1) as f64).cos())
        .collect()
}

/// Frame starts `0, hop, ..` strictly below `len − frame`.
fn frame_starts(len: usize) -> impl Iterator<Item = usize> {
    (0..len.saturating_sub(FRAME)).step_by(HOP)
}

fn remove_silent_frames(x: &[f64], y: &[f64], w: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let starts: Vec<usize> = frame_starts(x.len()).collect();
    let energy: Vec<f64> = starts
        .iter()
        .map(|&s| {
            let e: f64 = (0..FRAME).map(|i| (w[i] * x[s + i]).powi(2)).sum();
            20.0 * (e.sqrt() + EPS).log10()
        })
        .collect();
    let max = energy.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let kept: Vec<usize> = starts
        .iter()
        .zip(&energy)
        .filter(|(_, &e)| max - DYN_RANGE_DB - e < 0.0)
        .map(|(&s, _)| s)
        .collect();
    if kept.is_empty() {
        return (Vec::new(), Vec::new());
    }
    let len = (kept.len() - 1) * HOP + FRAME;
    let (mut xo, mut yo) = (vec![0.0; len], vec![0.0; len]);
    for (j, &s) in kept.iter().enumerate() {
        for i in 0..FRAME {
            xo[j * HOP + i] += w[i] * x[s + i];
            yo[j * HOP + i] += w[i] * y[s + i];
        }
    }
    (xo, yo)
}

/// One-third-octave band edges as FFT bin ranges `[lo, hi)`.
fn third_octave_bins() -> Vec<(usize, usize)> {
    let bins = NFFT / 2 + 1;
    let nearest = |f: f64| {
        (0..bins)
            .min_by(|&a, &b| {
                let fa = a as f64 * FS as f64 / NFFT as f64;
                let fb = b as f64 * FS as f64 / NFFT as f64;
                (fa - f).powi(2).total_cmp(&(fb - f).powi(2))
            })
            .expect("bins")
    };
    (0..BANDS)
        .map(|k| {
            let k = k as f64;
            let lo = MIN_FREQ * 2f64.powf((2.0 * k - 1.0) / 6.0);
            let hi = MIN_FREQ * 2f64.powf((2.0 * k + 1.0) / 6.0);
            (nearest(lo), nearest(hi))
        })
        .collect()
}

/// Band envelopes, `bands × frames` row-major.
fn band_envelopes(x: &[f64], w: &[f64]) -> (Vec<f64>, usize) {
    let starts: Vec<usize> = frame_starts(x.len()).collect();
    let frames = starts.len();
    let bands = third_octave_bins();
    let fft = FftPlanner::new().plan_fft_forward(NFFT);
    let mut out = vec![0.0; BANDS * frames];
    let mut buf = vec![Complex64::new(0.0, 0.0); NFFT];
    for (t, &s) in starts.iter().enumerate() {
        buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for i in 0..FRAME {
            buf[i] = Complex64::new(w[i] * x[s + i], 0.0);
        }
        fft.process(&mut buf);
        for (b, &(lo, hi)) in bands.iter().enumerate() {
            let p: f64 = buf[lo..hi].iter().map(|z| z.norm_sqr()).sum();
            out[b * frames + t] = p.sqrt();
        }
    }
    (out, frames)
}

fn prepare(clean: &Waveform, proc: &Waveform) -> Result<(Vec<f64>, Vec<f64>, usize)> {
    if clean.sample_rate_hz != proc.sample_rate_hz {
        return Err(Error::Shape("clean and processed sample rates differ".into()));
    }
    let n = clean.len().min(proc.len());
    let (x, y) = (&clean.samples[..n], &proc.samples[..n]);
    if x.iter().all(|&v| v == 0.0) || y.iter().all(|&v| v == 0.0) {
        return Err(Error::UndefinedMetric("silent input".into()));
    }
    let (x, y) = if clean.sample_rate_hz == FS {
        (x.to_vec(), y.to_vec())
    } else {
        (
            resample_rational(x, FS as usize, clean.sample_rate_hz as usize),
            resample_rational(y, FS as usize, clean.sample_rate_hz as usize),
        )
    };
    let w = frame_window();
    let (x, y) = remove_silent_frames(&x, &y, &w);
    let (xe, frames) = band_envelopes(&x, &w);
    let (ye, _) = band_envelopes(&y, &w);
    if frames < SEGMENT {
        return Err(Error::UndefinedMetric(format!(
            "only {frames} active frames after silence removal, need {SEGMENT}"
        )));
    }
    Ok((xe, ye, frames))
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn centre(v: &mut [f64]) {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter_mut().for_each(|a| *a -= m);
}

pub fn stoi(clean: &Waveform, proc: &Waveform) -> Result<f64> {
    let (xe, ye, frames) = prepare(clean, proc)?;
    let clip = 1.0 + 10f64.powf(-BETA_DB / 20.0);
    let segments = frames - SEGMENT + 1;
    let mut total = 0.0;
    for m in 0..segments {
        for b in 0..BANDS {
            let mut x = xe[b * frames + m..b * frames + m + SEGMENT].to_vec();
            let y = &ye[b * frames + m..b * frames + m + SEGMENT];
            let alpha = norm(&x) / (norm(y) + EPS);
            let mut yp: Vec<f64> = y.iter().zip(&x).map(|(yv, xv)| (alpha * yv).min(xv * clip)).collect();
            centre(&mut yp);
            centre(&mut x);
            let (nx, ny) = (norm(&x) + EPS, norm(&yp) + EPS);
            total += x.iter().zip(&yp).map(|(a, b)| (a / nx) * (b / ny)).sum::<f64>();
        }
    }
    Ok(total / (segments * BANDS) as f64)
}

/// Row then column mean/variance normalization of a `bands × SEGMENT` block.
fn normalize_segment(seg: &mut [f64]) {
    for row in seg.chunks_exact_mut(SEGMENT) {
        centre(row);
        let n = norm(row);
        if n > 0.0 {
            row.iter_mut().for_each(|v| *v /= n);
        }
    }
    for c in 0..SEGMENT {
        let mean = (0..BANDS).map(|b| seg[b * SEGMENT + c]).sum::<f64>() / BANDS as f64;
        (0..BANDS).for_each(|b| seg[b * SEGMENT + c] -= mean);
        let n = (0..BANDS).map(|b| seg[b * SEGMENT + c].powi(2)).sum::<f64>().sqrt();
        if n > 0.0 {
            (0..BANDS).for_each(|b| seg[b * SEGMENT + c] /= n);
        }
    }
}

pub fn estoi(clean: &Waveform, proc: &Waveform) -> Result<f64> {
    let (xe, ye, frames) = prepare(clean, proc)?;
    let segments = frames - SEGMENT + 1;
    let mut total = 0.0;
    let cut = |e: &[f64], m: usize| -> Vec<f64> {
        (0..BANDS).flat_map(|b| e[b * frames + m..b * frames + m + SEGMENT].to_vec()).collect()
    };
    for m in 0..segments {
        let mut x = cut(&xe, m);
        let mut y = cut(&ye, m);
        normalize_segment(&mut x);
        normalize_segment(&mut y);
        total += x.iter().zip(&y).map(|(a, b)| a * b).sum::<f64>() / SEGMENT as f64;
    }
    Ok(total / segments as f64)
}
