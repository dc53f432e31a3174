//! Seeded noise sources and SNR mixing.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::speech::{pseudo_speech, SpeechConfig};
use crate::error::{Error, Result};
use crate::seed;
use crate::signal::{rms, Waveform, SAMPLE_RATE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseType {
    White,
    Pink,
    Brown,
    Babble,
    Engine,
}

impl NoiseType {
    pub const ALL: [NoiseType; 5] = [Self::White, Self::Pink, Self::Brown, Self::Babble, Self::Engine];

    pub fn name(self) -> &'static str {
        match self {
            Self::White => "white",
            Self::Pink => "pink",
            Self::Brown => "brown",
            Self::Babble => "babble",
            Self::Engine => "engine",
        }
    }
}

impl fmt::Display for NoiseType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for NoiseType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown noise type `{s}`")))
    }
}

/// White noise shaped so power falls by `db_per_decade`.
fn coloured(rng: &mut impl Rng, len: usize, db_per_decade: f64) -> Vec<f64> {
    let n = len.max(2);
    let mut buf: Vec<Complex64> = (0..n).map(|_| Complex64::new(StandardNormal.sample(rng), 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    // amplitude exponent: power ∝ f^(db/10) per decade
    let exponent = db_per_decade / 20.0;
    buf[0] = Complex64::new(0.0, 0.0);
    for k in 1..n {
        let f = k.min(n - k) as f64;
        buf[k] *= f.powf(exponent);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    buf.iter().take(len).map(|z| z.re).collect()
}

fn babble(seed_value: u64, label: &str, len: usize) -> Vec<f64> {
    let mut rng = seed::rng(seed_value, &format!("babble-offsets/{label}"));
    let mut out = vec![0.0; len];
    for talker in 0..6 {
        let s = pseudo_speech(seed_value, &format!("babble/{label}/{talker}"), &SpeechConfig::default());
        let offset = rng.gen_range(0..s.len());
        for (n, o) in out.iter_mut().enumerate() {
            *o += s.samples[(n + offset) % s.len()];
        }
    }
    out
}

fn engine(rng: &mut impl Rng, len: usize) -> Vec<f64> {
    let rate = SAMPLE_RATE as f64;
    let f = rng.gen_range(25.0..45.0);
    let harmonics: Vec<(f64, f64)> = (1..=40)
        .map(|k| (1.0 / (k as f64).powf(0.7), rng.gen_range(0.0..2.0 * PI)))
        .collect();
    let wobble = rng.gen_range(0.2..0.6);
    let rumble = coloured(rng, len, -20.0);
    let rumble_rms = rms(&rumble).max(1e-12);
    let mut phase = 0.0;
    (0..len)
        .map(|n| {
            let t = n as f64 / rate;
            phase += 2.0 * PI * f * (1.0 + 0.02 * (2.0 * PI * wobble * t).sin()) / rate;
            let tone: f64 = harmonics
                .iter()
                .enumerate()
                .map(|(k, (a, p))| a * ((k + 1) as f64 * phase + p).sin())
                .sum();
            let firing = 1.0 + 0.3 * (phase / 2.0).sin();
            firing * tone + 0.3 * rumble[n] / rumble_rms
        })
        .collect()
}

/// `len` samples of the given noise type at unit RMS, deterministic per `(seed, label)`.
pub fn generate_noise(kind: NoiseType, len: usize, seed_value: u64, label: &str) -> Waveform {
    let mut rng = seed::rng(seed_value, &format!("noise/{kind}/{label}"));
    let mut x = match kind {
        NoiseType::White => (0..len).map(|_| StandardNormal.sample(&mut rng)).collect(),
        NoiseType::Pink => coloured(&mut rng, len, -10.0),
        NoiseType::Brown => coloured(&mut rng, len, -20.0),
        NoiseType::Babble => babble(seed_value, label, len),
        NoiseType::Engine => engine(&mut rng, len),
    };
    let r = rms(&x);
    if r > 0.0 {
        x.iter_mut().for_each(|v| *v /= r);
    }
    Waveform::new(x, SAMPLE_RATE)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mixture {
    /// `scale · (clean + gain · segment)`.
    pub noisy: Waveform,
    /// Noise exactly as added before peak rescaling: `gain · segment`.
    pub scaled_noise: Waveform,
    pub gain: f64,
    pub offset: usize,
    /// Peak-rescaling factor (≤ 1) applied to the sum.
    pub scale: f64,
}

/// Add noise to `clean` at `snr_db`, measured over the clean support. The noise
/// segment starts at a seeded offset and wraps around when the noise is short.
pub fn mix_at_snr(clean: &Waveform, noise: &Waveform, snr_db: f64, seed_value: u64, label: &str) -> Result<Mixture> {
    let (lc, ln) = (clean.len(), noise.len());
    if lc == 0 || ln == 0 {
        return Err(Error::DegenerateInput("mixing needs nonempty clean and noise".into()));
    }
    if !snr_db.is_finite() {
        return Err(Error::Config(format!("SNR must be finite, got {snr_db}")));
    }
    let mut rng = seed::rng(seed_value, &format!("mix-offset/{label}"));
    let offset = if ln >= lc { rng.gen_range(0..=ln - lc) } else { rng.gen_range(0..ln) };
    let segment: Vec<f64> = (0..lc).map(|n| noise.samples[(offset + n) % ln]).collect();
    let (rc, rn) = (clean.rms(), rms(&segment));
    if rc == 0.0 || rn == 0.0 {
        return Err(Error::DegenerateInput("clean or noise segment has zero power".into()));
    }
    let gain = rc / (rn * 10f64.powf(snr_db / 20.0));
    let scaled: Vec<f64> = segment.iter().map(|v| v * gain).collect();
    let sum: Vec<f64> = clean.samples.iter().zip(&scaled).map(|(c, n)| c + n).collect();
    let peak = sum.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let scale = if peak > 1.0 { 1.0 / peak } else { 1.0 };
    Ok(Mixture {
        noisy: Waveform::new(sum.iter().map(|v| v * scale).collect(), clean.sample_rate_hz),
        scaled_noise: Waveform::new(scaled, clean.sample_rate_hz),
        gain,
        offset,
        scale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(len: usize) -> Waveform {
        Waveform::new((0..len).map(|n| 0.3 * (n as f64 * 0.07).sin()).collect(), SAMPLE_RATE)
    }

    fn power(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
    }

    #[test]
    fn achieved_snr_matches_request() {
        let clean = tone(8000);
        let noise = generate_noise(NoiseType::White, 12000, 1, "n");
        for snr in [-12.0, -6.0, 0.0, 6.0, 12.0, 20.0] {
            let m = mix_at_snr(&clean, &noise, snr, 2, "m").unwrap();
            let measured = 10.0 * (power(&clean.samples) / power(&m.scaled_noise.samples)).log10();
            assert!((measured - snr).abs() < 1e-9, "{snr}: {measured}");
        }
        let m = mix_at_snr(&clean, &noise, 0.0, 2, "m").unwrap();
        assert!((m.scaled_noise.rms() - clean.rms()).abs() < 1e-9);
        let m = mix_at_snr(&clean, &noise, 20.0, 2, "m").unwrap();
        let ratio = power(&m.scaled_noise.samples) / (power(&clean.samples) / 100.0);
        assert!((ratio - 1.0).abs() < 1e-9);
    }

    #[test]
    fn peak_rescaling_recorded() {
        let clean = tone(4000);
        let noise = generate_noise(NoiseType::White, 4000, 3, "n");
        let m = mix_at_snr(&clean, &noise, -12.0, 4, "m").unwrap();
        assert!(m.scale < 1.0);
        assert!(m.noisy.peak() <= 1.0 + 1e-12);
        for n in 0..4000 {
            let raw = clean.samples[n] + m.scaled_noise.samples[n];
            assert!((m.noisy.samples[n] - m.scale * raw).abs() < 1e-12);
        }
    }

    #[test]
    fn short_noise_wraps_and_zero_power_fails() {
        let clean = tone(5000);
        let noise = generate_noise(NoiseType::Pink, 1000, 5, "n");
        let m = mix_at_snr(&clean, &noise, 0.0, 6, "m").unwrap();
        assert_eq!(m.noisy.len(), 5000);
        let silent = Waveform::zeros(5000, SAMPLE_RATE);
        assert!(matches!(mix_at_snr(&silent, &noise, 0.0, 6, "m"), Err(Error::DegenerateInput(_))));
        assert!(matches!(mix_at_snr(&clean, &silent, 0.0, 6, "m"), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn noise_types_are_deterministic_and_unit_rms() {
        for kind in NoiseType::ALL {
            let a = generate_noise(kind, 16000, 7, "x");
            assert_eq!(a, generate_noise(kind, 16000, 7, "x"));
            assert!((a.rms() - 1.0).abs() < 1e-9, "{kind}");
            assert_eq!(kind.name().parse::<NoiseType>().unwrap(), kind);
        }
    }

    #[test]
    fn spectral_tilts_are_ordered() {
        // fraction of power below 1 kHz: white < pink < brown
        let low_fraction = |kind| {
            let w = generate_noise(kind, 16384, 8, "t");
            let mut buf: Vec<Complex64> = w.samples.iter().map(|&s| Complex64::new(s, 0.0)).collect();
            FftPlanner::new().plan_fft_forward(16384).process(&mut buf);
            let p: Vec<f64> = buf[..8192].iter().map(|z| z.norm_sqr()).collect();
            p[..1024].iter().sum::<f64>() / p.iter().sum::<f64>()
        };
        let (w, p, b) = (low_fraction(NoiseType::White), low_fraction(NoiseType::Pink), low_fraction(NoiseType::Brown));
        assert!(w < p && p < b, "{w} {p} {b}");
    }
}
