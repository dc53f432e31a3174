//! Band-limited sample-rate conversion by Kaiser-windowed sinc interpolation.

use std::f64::consts::PI;

use super::Waveform;

const ZERO_CROSSINGS: f64 = 24.0;
const ROLLOFF: f64 = 0.94;
const KAISER_BETA: f64 = 8.6;
const MAX_PHASES: u64 = 4096;

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

struct Kernel {
    cutoff: f64,
    half_width: f64,
    i0_beta: f64,
}

impl Kernel {
    fn new(ratio: f64) -> Self {
        let cutoff = 0.5 * ratio.min(1.0) * ROLLOFF;
        Self {
            cutoff,
            half_width: ZERO_CROSSINGS / (2.0 * cutoff),
            i0_beta: bessel_i0(KAISER_BETA),
        }
    }

    fn tap(&self, d: f64) -> f64 {
        if d.abs() >= self.half_width {
            return 0.0;
        }
        let x = 2.0 * self.cutoff * d;
        let sinc = if x.abs() < 1e-12 {
            1.0
        } else {
            (PI * x).sin() / (PI * x)
        };
        let r = d / self.half_width;
        let win = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / self.i0_beta;
        2.0 * self.cutoff * sinc * win
    }

    /// Normalized weights for input indices `base - reach + 1 ..= base + reach`
    /// given fractional position `frac` past `base`.
    fn weights(&self, frac: f64, reach: i64) -> Vec<f64> {
        let mut w: Vec<f64> = (-reach + 1..=reach)
            .map(|k| self.tap(k as f64 - frac))
            .collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
        w
    }
}

/// Resample to `target_hz`. Output length is `round(len * target / source)`.
/// Weights are normalized per output sample, so constants are preserved exactly
/// away from the edges.
pub fn resample(w: &Waveform, target_hz: u32) -> Waveform {
    assert!(target_hz > 0, "target rate must be positive");
    let src = w.sample_rate_hz as u64;
    let dst = target_hz as u64;
    if src == dst {
        return w.clone();
    }
    let out_len = ((w.len() as u128 * dst as u128 + src as u128 / 2) / src as u128) as usize;
    let kernel = Kernel::new(dst as f64 / src as f64);
    let reach = kernel.half_width.ceil() as i64 + 1;
    let g = gcd(src, dst);
    let (up, down) = (dst / g, src / g);
    let x = &w.samples;
    let n = x.len() as i64;

    let apply = |base: i64, weights: &[f64]| -> f64 {
        let mut acc = 0.0;
        for (j, wt) in weights.iter().enumerate() {
            let idx = base - reach + 1 + j as i64;
            if idx >= 0 && idx < n {
                acc += wt * x[idx as usize];
            }
        }
        acc
    };

    let samples = if up <= MAX_PHASES {
        let table: Vec<Vec<f64>> = (0..up)
            .map(|p| kernel.weights(p as f64 / up as f64, reach))
            .collect();
        (0..out_len as u64)
            .map(|m| {
                let pos = m * down;
                apply((pos / up) as i64, &table[(pos % up) as usize])
            })
            .collect()
    } else {
        (0..out_len as u64)
            .map(|m| {
                let pos = m as u128 * down as u128;
                let base = (pos / up as u128) as i64;
                let frac = (pos % up as u128) as f64 / up as f64;
                apply(base, &kernel.weights(frac, reach))
            })
            .collect()
    };
    Waveform::new(samples, target_hz)
}
