//! Pseudo-speech: a harmonic source with drifting pitch, two moving formant
//! resonators, syllable-rate amplitude modulation and silent gaps.

use std::f64::consts::PI;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::seed;
use crate::signal::{Waveform, SAMPLE_RATE};

pub const PEAK: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeechConfig {
    pub min_duration_s: f64,
    pub max_duration_s: f64,
}

impl Default for SpeechConfig {
    fn default() -> Self {
        Self {
            min_duration_s: 2.0,
            max_duration_s: 4.0,
        }
    }
}

/// Piecewise-linear trajectory through random targets placed every `step` samples.
fn trajectory(rng: &mut ChaCha8Rng, len: usize, step: usize, lo: f64, hi: f64) -> Vec<f64> {
    let knots: Vec<f64> = (0..len / step + 2).map(|_| rng.gen_range(lo..hi)).collect();
    (0..len)
        .map(|n| {
            let k = n / step;
            let frac = (n % step) as f64 / step as f64;
            knots[k] + (knots[k + 1] - knots[k]) * frac
        })
        .collect()
}

/// Two-pole resonator with per-sample centre frequency.
fn resonate(x: &[f64], centre: &[f64], bandwidth: f64, rate: f64) -> Vec<f64> {
    let r = (-PI * bandwidth / rate).exp();
    let (mut y1, mut y2) = (0.0, 0.0);
    x.iter()
        .zip(centre)
        .map(|(&v, &f)| {
            let theta = 2.0 * PI * f / rate;
            let y = (1.0 - r) * v + 2.0 * r * theta.cos() * y1 - r * r * y2;
            y2 = y1;
            y1 = y;
            y
        })
        .collect()
}

/// Zero out 10–20% of the signal in one to three gaps with 10 ms ramps.
fn cut_gaps(rng: &mut ChaCha8Rng, x: &mut [f64], rate: f64) {
    let len = x.len();
    let total = (len as f64 * rng.gen_range(0.10..0.20)) as usize;
    let count = rng.gen_range(1..=3usize);
    let each = total / count;
    let ramp = (0.01 * rate) as usize;
    let slot = len / count;
    let mut gain = vec![1.0f64; len];
    for g in 0..count {
        let room = slot.saturating_sub(each).max(1);
        let start = g * slot + rng.gen_range(0..room);
        let end = (start + each).min(len);
        for (n, gv) in gain.iter_mut().enumerate() {
            let d = if n < start {
                start - n
            } else if n >= end {
                n + 1 - end
            } else {
                0
            };
            if d < ramp {
                *gv = gv.min(0.5 - 0.5 * (PI * d as f64 / ramp as f64).cos());
            }
        }
    }
    x.iter_mut().zip(&gain).for_each(|(v, g)| *v *= g);
}

/// Deterministic pseudo-speech for `(seed, label)`, peak-normalized to 0.5.
pub fn pseudo_speech(seed_value: u64, label: &str, cfg: &SpeechConfig) -> Waveform {
    let mut rng = seed::rng(seed_value, &format!("speech/{label}"));
    let rate = SAMPLE_RATE as f64;
    let dur = rng.gen_range(cfg.min_duration_s..=cfg.max_duration_s);
    let len = (dur * rate).round() as usize;

    let base = rng.gen_range(110.0..220.0);
    let f0 = trajectory(&mut rng, len, (0.3 * rate) as usize, base * 0.8, base * 1.25);
    let f0: Vec<f64> = f0.iter().map(|f| f.clamp(100.0, 300.0)).collect();
    let mut phase = 0.0;
    let mut source = vec![0.0; len];
    for (n, s) in source.iter_mut().enumerate() {
        phase += 2.0 * PI * f0[n] / rate;
        let harmonics = (7000.0 / f0[n]) as usize;
        *s = (1..=harmonics).map(|k| (k as f64 * phase).sin() / k as f64).sum::<f64>();
    }
    for s in source.iter_mut() {
        *s += 0.05 * rng.gen_range(-1.0..1.0);
    }

    let syllable = (0.25 * rate) as usize;
    let f1 = trajectory(&mut rng, len, syllable, 300.0, 900.0);
    let f2 = trajectory(&mut rng, len, syllable, 900.0, 2500.0);
    let a = resonate(&source, &f1, 90.0, rate);
    let b = resonate(&source, &f2, 130.0, rate);
    let am_phase = rng.gen_range(0.0..2.0 * PI);
    let am_rate = rng.gen_range(3.5..4.5);
    let mut x: Vec<f64> = (0..len)
        .map(|n| {
            let t = n as f64 / rate;
            let am = 0.55 - 0.45 * (2.0 * PI * am_rate * t + am_phase).cos();
            am * (a[n] + 0.6 * b[n])
        })
        .collect();
    cut_gaps(&mut rng, &mut x, rate);

    let peak = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak > 0.0 {
        x.iter_mut().for_each(|v| *v *= PEAK / peak);
    }
    Waveform::new(x, SAMPLE_RATE)
}
