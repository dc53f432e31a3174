//! Visual feature tracks: file format, alignment to STFT frames, and the
//! clean-speech proxy generator.

use std::path::Path;

use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{Error, Result};
use crate::frames::FrameMatrix;
use crate::seed;
use crate::signal::{periodic_hann, Waveform};

pub const DEFAULT_DV: usize = 32;
pub const DEFAULT_FPS: f64 = 25.0;
pub const DEFAULT_NOISE_SIGMA: f64 = 0.1;
const MAX_VALUES: usize = 1 << 26;

#[derive(Debug, Clone, PartialEq)]
pub struct VisualFeatureTrack {
    /// `T_v × D_v`.
    pub data: FrameMatrix,
    pub fps: f64,
    pub source_id: String,
}

impl VisualFeatureTrack {
    pub fn new(data: FrameMatrix, fps: f64, source_id: impl Into<String>) -> Result<Self> {
        if !(fps.is_finite() && fps > 0.0) {
            return Err(Error::Format(format!("visual track fps must be positive, got {fps}")));
        }
        if data.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format("visual track holds non-finite values".into()));
        }
        Ok(Self {
            data,
            fps,
            source_id: source_id.into(),
        })
    }

    pub fn frames(&self) -> usize {
        self.data.frames
    }

    pub fn dim(&self) -> usize {
        self.data.width
    }
}

/// `VISF v1 dv=<D> fps=<fps> frames=<T>\n` followed by little-endian f32 rows.
pub fn encode_visf(track: &VisualFeatureTrack) -> Vec<u8> {
    let mut out = format!("VISF v1 dv={} fps={} frames={}\n", track.dim(), track.fps, track.frames()).into_bytes();
    for v in &track.data.data {
        out.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    out
}

pub fn decode_visf(bytes: &[u8], source_id: &str) -> Result<VisualFeatureTrack> {
    let nl = bytes
        .iter()
        .take(256)
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("VISF: missing header line".into()))?;
    let header = std::str::from_utf8(&bytes[..nl]).map_err(|_| Error::Format("VISF: header is not UTF-8".into()))?;
    let fields: Vec<&str> = header.split(' ').collect();
    let [magic, version, dv, fps, frames] = fields[..] else {
        return Err(Error::Format(format!("VISF: malformed header `{header}`")));
    };
    if magic != "VISF" || version != "v1" {
        return Err(Error::Format(format!("VISF: unsupported header `{header}`")));
    }
    let field = |s: &str, key: &str| -> Result<String> {
        s.strip_prefix(key)
            .map(str::to_string)
            .ok_or_else(|| Error::Format(format!("VISF: expected `{key}` in `{header}`")))
    };
    let bad = |what: &str| Error::Format(format!("VISF: invalid {what} in `{header}`"));
    let dv: usize = field(dv, "dv=")?.parse().map_err(|_| bad("dv"))?;
    let fps: f64 = field(fps, "fps=")?.parse().map_err(|_| bad("fps"))?;
    let frames: usize = field(frames, "frames=")?.parse().map_err(|_| bad("frames"))?;
    if dv == 0 || frames == 0 {
        return Err(Error::Format("VISF: empty track".into()));
    }
    let n = dv.checked_mul(frames).filter(|n| *n <= MAX_VALUES).ok_or_else(|| bad("size"))?;
    let payload = &bytes[nl + 1..];
    if payload.len() != n * 4 {
        return Err(Error::Format(format!("VISF: payload has {} bytes, expected {}", payload.len(), n * 4)));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    VisualFeatureTrack::new(FrameMatrix::from_vec(frames, dv, data), fps, source_id)
}

pub fn write_visf(path: impl AsRef<Path>, track: &VisualFeatureTrack) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_visf(track)).map_err(|e| Error::io(path, e))
}

pub fn read_visf(path: impl AsRef<Path>) -> Result<VisualFeatureTrack> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let id = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    decode_visf(&bytes, &id)
}

/// Nearest-neighbour hold: row `t` is track row `round(t·hop_s·fps)`, clamped.
pub fn align_visual(track: &VisualFeatureTrack, frames: usize, hop_s: f64) -> Result<FrameMatrix> {
    if track.frames() == 0 || track.dim() == 0 {
        return Err(Error::Data(format!("visual track `{}` is empty", track.source_id)));
    }
    let last = track.frames() - 1;
    let mut out = FrameMatrix::zeros(frames, track.dim());
    for t in 0..frames {
        let i = ((t as f64 * hop_s * track.fps).round() as usize).min(last);
        out.row_mut(t).copy_from_slice(track.data.row(i));
    }
    Ok(out)
}

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filters over the bins of an `n_fft`-point spectrum.
fn mel_filters(bands: usize, n_fft: usize, rate: f64, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    let (ml, mh) = (hz_to_mel(lo), hz_to_mel(hi));
    let edges: Vec<f64> = (0..bands + 2).map(|i| mel_to_hz(ml + (mh - ml) * i as f64 / (bands + 1) as f64)).collect();
    let bin_hz = rate / n_fft as f64;
    (0..bands)
        .map(|b| {
            let (l, c, r) = (edges[b], edges[b + 1], edges[b + 2]);
            (0..=n_fft / 2)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    if f <= l || f >= r {
                        0.0
                    } else if f <= c {
                        (f - l) / (c - l)
                    } else {
                        (r - f) / (r - c)
                    }
                })
                .collect()
        })
        .collect()
}

/// Clean-speech stand-in for pre-extracted lip embeddings: log mel band
/// energies per video frame, standardized per dimension, plus seeded Gaussian
/// noise. A dimension with zero variance standardizes to zero.
pub fn synth_visual_features(clean: &Waveform, dv: usize, fps: f64, noise_sigma: f64, seed_value: u64, id: &str) -> Result<VisualFeatureTrack> {
    if dv == 0 || !(fps > 0.0) || !(noise_sigma >= 0.0) {
        return Err(Error::Config("visual features need dv > 0, fps > 0, sigma >= 0".into()));
    }
    let rate = clean.sample_rate_hz as f64;
    let frame_len = (rate / fps).round().max(1.0) as usize;
    let frames = clean.len().div_ceil(frame_len).max(1);
    let n_fft = frame_len.next_power_of_two();
    let filters = mel_filters(dv, n_fft, rate, 80.0, (rate / 2.0 * 0.95).min(7600.0));
    let window = periodic_hann(frame_len);
    let fft = FftPlanner::new().plan_fft_forward(n_fft);
    let mut feats = FrameMatrix::zeros(frames, dv);
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    for t in 0..frames {
        buf.iter_mut().for_each(|z| *z = Complex64::new(0.0, 0.0));
        for i in 0..frame_len {
            let s = clean.samples.get(t * frame_len + i).copied().unwrap_or(0.0);
            buf[i] = Complex64::new(s * window[i], 0.0);
        }
        fft.process(&mut buf);
        for (b, f) in filters.iter().enumerate() {
            let e: f64 = f.iter().zip(&buf).map(|(w, z)| w * z.norm_sqr()).sum();
            feats.data[t * dv + b] = (e + 1e-10).ln();
        }
    }
    for d in 0..dv {
        let mean = (0..frames).map(|t| feats.get(t, d)).sum::<f64>() / frames as f64;
        let var = (0..frames).map(|t| (feats.get(t, d) - mean).powi(2)).sum::<f64>() / frames as f64;
        let std = var.sqrt();
        for t in 0..frames {
            let v = &mut feats.data[t * dv + d];
            *v = if std > 1e-9 { (*v - mean) / std } else { 0.0 };
        }
    }
    if noise_sigma > 0.0 {
        let normal = Normal::new(0.0, noise_sigma).expect("valid sigma");
        let mut rng = seed::rng(seed_value, &format!("visual/{id}"));
        feats.data.iter_mut().for_each(|v| *v += normal.sample(&mut rng));
    }
    VisualFeatureTrack::new(feats, fps, id)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn track(frames: usize, dv: usize) -> VisualFeatureTrack {
        let data = (0..frames * dv).map(|i| i as f64 * 0.25 - 3.0).collect();
        VisualFeatureTrack::new(FrameMatrix::from_vec(frames, dv, data), 25.0, "x").unwrap()
    }

    #[test]
    fn visf_roundtrip() {
        let t = track(7, 32);
        let bytes = encode_visf(&t);
        assert!(bytes.starts_with(b"VISF v1 dv=32 fps=25 frames=7\n"));
        assert_eq!(decode_visf(&bytes, "x").unwrap(), t);
    }

    #[test]
    fn visf_rejects_bad_headers_and_sizes() {
        let bytes = encode_visf(&track(2, 3));
        assert!(decode_visf(&bytes[..bytes.len() - 1], "x").is_err());
        assert!(decode_visf(b"VISF v2 dv=3 fps=25 frames=1\n", "x").is_err());
        assert!(decode_visf(b"VISF v1 dv=3 fps=-1 frames=1\n\0\0\0\0\0\0\0\0\0\0\0\0", "x").is_err());
        assert!(decode_visf(b"VISF v1 dv=99999999 fps=25 frames=99999999\n", "x").is_err());
        assert!(decode_visf(b"no newline", "x").is_err());
    }

    #[test]
    fn alignment_repeats_each_video_frame_five_times() {
        let t = track(20, 2);
        let hop_s = 128.0 / 16000.0;
        let a = align_visual(&t, 60, hop_s).unwrap();
        assert_eq!(a.frames, 60);
        // row t maps to round(t / 5): interior video frames cover 5 STFT frames each
        let mut counts = vec![0; 20];
        for r in 0..60 {
            let i = (0..20).find(|&i| a.row(r) == t.data.row(i)).unwrap();
            assert_eq!(i, ((r as f64) / 5.0).round() as usize);
            counts[i] += 1;
        }
        assert!(counts[1..12].iter().all(|&c| c == 5));
    }

    #[test]
    fn single_frame_track_is_held() {
        let t = track(1, 4);
        let a = align_visual(&t, 9, 0.008).unwrap();
        assert!(a.rows().all(|r| r == t.data.row(0)));
    }

    #[test]
    fn silence_gives_noise_only_features() {
        let w = Waveform::zeros(16000, 16000);
        let t = synth_visual_features(&w, 32, 25.0, 0.0, 1, "s").unwrap();
        assert_eq!(t.frames(), 25);
        assert!(t.data.data.iter().all(|&v| v == 0.0));
        let n = synth_visual_features(&w, 32, 25.0, 0.1, 1, "s").unwrap();
        let sd = (n.data.data.iter().map(|v| v * v).sum::<f64>() / n.data.data.len() as f64).sqrt();
        assert!((sd - 0.1).abs() < 0.01, "{sd}");
    }

    #[test]
    fn generator_is_deterministic_and_standardized() {
        let mut rng = seed::rng(4, "vis");
        let w = Waveform::new((0..20000).map(|i| (i as f64 * 0.05).sin() * rand::Rng::gen_range(&mut rng, 0.0..1.0)).collect(), 16000);
        let a = synth_visual_features(&w, 32, 25.0, 0.1, 9, "u").unwrap();
        let b = synth_visual_features(&w, 32, 25.0, 0.1, 9, "u").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.frames(), 32);
        let c = synth_visual_features(&w, 32, 25.0, 0.0, 9, "u").unwrap();
        for d in 0..32 {
            let m: f64 = (0..c.frames()).map(|t| c.data.get(t, d)).sum::<f64>() / c.frames() as f64;
            assert!(m.abs() < 1e-9);
        }
    }
}
