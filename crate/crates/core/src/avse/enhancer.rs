//! Spectral-masking encoder/decoder with one attention fusion block at the
//! bottleneck.
//!
//! Layout of one pass over a `[F = 256, T]` magnitude crop (`T` a multiple of 4):
//!
//! ```text
//! c(|S|) [1,256,T] -conv s2-> e1 [16,128,T/2] -conv s2-> e2 [32,64,T/4]
//!   -> rows [T/4, 2048] -> dense 64 -> fusion -> dense 2048 -> relu + e2
//!   -> up -> conv 16 -> relu + e1 -> up -> conv 8 -> relu -> conv1x1 -> sigmoid
//! ```

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::visual::{align_visual, VisualFeatureTrack, DEFAULT_DV};
use crate::error::{Error, Result};
use crate::frames::FrameMatrix;
use crate::nn::{glorot_uniform, Adam, Checkpoint, Graph, ParamStore, Tensor, Var};
use crate::signal::{StftConfig, StftPlan, Waveform, SAMPLE_RATE};

pub const CHECKPOINT_KIND: &str = "avse";
/// Bottleneck width per time step.
pub const D_A: usize = 64;
pub const D_K: usize = 64;
/// Time (and frequency) downsampling between the input and the bottleneck.
pub const TIME_STRIDE: usize = 4;
const ENC: [usize; 2] = [16, 32];
const DEC: usize = 8;
/// Magnitude compression `0.15·sqrt(m + eps)` used for the network input.
pub const COMPRESS_GAIN: f64 = 0.15;
pub const COMPRESS_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    /// Queries from audio, keys and values from visual features.
    Cross,
    /// Queries, keys and values from audio.
    #[serde(rename = "self")]
    SelfAttn,
}

impl FusionMode {
    pub fn needs_visual(self) -> bool {
        self == FusionMode::Cross
    }
}

impl std::fmt::Display for FusionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FusionMode::Cross => "cross",
            FusionMode::SelfAttn => "self",
        })
    }
}

impl std::str::FromStr for FusionMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cross" => Ok(FusionMode::Cross),
            "self" => Ok(FusionMode::SelfAttn),
            _ => Err(Error::Config(format!("unknown fusion mode `{s}` (expected cross or self)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FusionConfig {
    pub mode: FusionMode,
    pub d_k: usize,
    /// Width of the visual rows (ignored in self mode).
    pub visual_dim: usize,
}

impl FusionConfig {
    pub fn new(mode: FusionMode) -> Self {
        Self {
            mode,
            d_k: D_K,
            visual_dim: DEFAULT_DV,
        }
    }

    fn kv_width(&self) -> usize {
        match self.mode {
            FusionMode::Cross => self.visual_dim,
            FusionMode::SelfAttn => D_A,
        }
    }
}

/// Sinusoidal position table `[t, d]`.
pub fn positional_encoding(rows: usize, dim: usize, offset: usize) -> Tensor {
    let mut data = vec![0.0; rows * dim];
    for t in 0..rows {
        let pos = (t + offset) as f64;
        for i in 0..dim {
            let rate = 10000f64.powf(-((i / 2 * 2) as f64) / dim as f64);
            data[t * dim + i] = if i % 2 == 0 { (pos * rate).sin() } else { (pos * rate).cos() };
        }
    }
    Tensor { shape: vec![rows, dim], data }
}

/// `audio + softmax((A + P_a)·M_Q ((KV + P_kv)·M_K)ᵀ/√d_k)·(KV·M_V)`, with
/// `P_a`, `P_kv` sinusoidal position tables of the input widths. Positions
/// enter before the projections so the network can learn how sharply a query
/// attends to its own time step. `m = [M_Q, M_K, M_V]`; `kv` is the visual rows
/// in cross mode and `audio` in self mode.
///
/// `locality` is a learned `[1, 1]` weight λ; when given, `λ·|t − s|` is
/// subtracted from the scaled scores so the block can trade global context
/// for time-aligned rows. λ = 0 is the plain block.
pub fn fusion_graph(g: &mut Graph, audio: Var, kv: Var, m: [Var; 3], pos: [Var; 2], locality: Option<Var>) -> Result<Var> {
    let (ta, _) = g.value(audio).dims2()?;
    let (tv, _) = g.value(kv).dims2()?;
    if ta != tv {
        return Err(Error::Shape(format!("fusion: {ta} audio rows vs {tv} key/value rows")));
    }
    let qa = g.add(audio, pos[0])?;
    let q = g.matmul(qa, m[0])?;
    let ka = g.add(kv, pos[1])?;
    let k = g.matmul(ka, m[1])?;
    let v = g.matmul(kv, m[2])?;
    let att = match locality {
        None => g.attention(q, k, v)?,
        Some(lambda) => {
            let dk = g.value(q).dims2()?.1;
            let scores = g.matmul_bt(q, k)?;
            let scores = g.scale(scores, 1.0 / (dk as f64).sqrt())?;
            let dist: Vec<f64> = (0..ta * ta).map(|i| -((i / ta) as f64 - (i % ta) as f64).abs()).collect();
            let dist = g.constant(Tensor::new(&[ta * ta, 1], dist)?);
            let bias = g.matmul(dist, lambda)?;
            let bias = g.reshape(bias, &[ta, ta])?;
            let scores = g.add(scores, bias)?;
            let w = g.softmax_rows(scores)?;
            g.matmul(w, v)?
        }
    };
    g.add(audio, att)
}

/// Starting locality weight. From λ = 0 the attention stays diffuse and the
/// gradient on λ is too small to find the alignment, so both modes start with
/// a clear preference for nearby steps and are free to learn it away.
pub const LOCALITY_INIT: f64 = 3.0;

/// Position tables for audio rows of width `da` and key/value rows of width
/// `dkv`, starting at bottleneck step `offset`.
fn fusion_positions(g: &mut Graph, rows: usize, da: usize, dkv: usize, offset: usize) -> [Var; 2] {
    let pa = g.constant(positional_encoding(rows, da, offset));
    let pkv = if dkv == da { pa } else { g.constant(positional_encoding(rows, dkv, offset)) };
    [pa, pkv]
}

/// Plain-matrix fusion block for direct use and tests.
pub fn fusion_block(audio: &FrameMatrix, visual: Option<&FrameMatrix>, m: [&Tensor; 3]) -> Result<FrameMatrix> {
    let mut g = Graph::new();
    let a = g.constant(Tensor::new(&[audio.frames, audio.width], audio.data.clone())?);
    let kv = match visual {
        Some(v) => g.constant(Tensor::new(&[v.frames, v.width], v.data.clone())?),
        None => a,
    };
    let dkv = g.value(kv).shape.get(1).copied().unwrap_or(0);
    let mv = m.map(|t| g.constant(t.clone()));
    let pos = fusion_positions(&mut g, audio.frames, audio.width, dkv, 0);
    let out = fusion_graph(&mut g, a, kv, mv, pos, None)?;
    Ok(FrameMatrix::from_vec(audio.frames, audio.width, g.value(out).data.clone()))
}

fn compress(m: f64) -> f64 {
    COMPRESS_GAIN * (m + COMPRESS_EPS).sqrt()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnhancerNetwork {
    pub params: ParamStore,
    pub fusion: FusionConfig,
    pub bins: usize,
}

/// Handles of the network parameters on a graph, in store order.
struct Bound<'a>(&'a [Var]);

impl Bound<'_> {
    fn conv(&self, i: usize) -> (Var, Var) {
        (self.0[2 * i], self.0[2 * i + 1])
    }
}

// Store order: enc1, enc2, down, up, dec1, dec2, head (weight, bias each), then M_Q, M_K, M_V, λ.
const ENC1: usize = 0;
const ENC2: usize = 1;
const DOWN: usize = 2;
const UP: usize = 3;
const DEC1: usize = 4;
const DEC2: usize = 5;
const HEAD: usize = 6;
const FUSION_BASE: usize = 14;

impl EnhancerNetwork {
    pub fn init(seed: u64, fusion: FusionConfig) -> Self {
        let bins = StftConfig::default().bins();
        let flat = ENC[1] * bins / TIME_STRIDE;
        let mut p = ParamStore::new();
        let conv = |p: &mut ParamStore, name: &str, co: usize, ci: usize, k: usize| {
            let w = format!("avse.{name}.weight");
            let t = glorot_uniform(&[co, ci, k, k], ci * k * k, co * k * k, seed, &w);
            p.add(w, t);
            p.add(format!("avse.{name}.bias"), Tensor::zeros(&[co]));
        };
        conv(&mut p, "enc1", ENC[0], 1, 3);
        conv(&mut p, "enc2", ENC[1], ENC[0], 3);
        let dense = |p: &mut ParamStore, name: &str, i: usize, o: usize| {
            let w = format!("avse.{name}.weight");
            let t = glorot_uniform(&[i, o], i, o, seed, &w);
            p.add(w, t);
            p.add(format!("avse.{name}.bias"), Tensor::zeros(&[o]));
        };
        dense(&mut p, "down", flat, D_A);
        dense(&mut p, "up", D_A, flat);
        conv(&mut p, "dec1", ENC[0], ENC[1], 3);
        conv(&mut p, "dec2", DEC, ENC[0], 3);
        conv(&mut p, "head", 1, DEC, 1);
        let kv = fusion.kv_width();
        for (name, i) in [("q", D_A), ("k", kv), ("v", kv)] {
            let w = format!("avse.fusion.{name}");
            let t = glorot_uniform(&[i, fusion.d_k], i, fusion.d_k, seed, &w);
            p.add(w, t);
        }
        p.add("avse.fusion.locality", Tensor::filled(&[1, 1], LOCALITY_INIT));
        Self { params: p, fusion, bins }
    }

    pub fn mode(&self) -> FusionMode {
        self.fusion.mode
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != CHECKPOINT_KIND {
            return Err(Error::Format(format!("expected an `{CHECKPOINT_KIND}` checkpoint, found `{}`", ck.kind)));
        }
        let fusion: FusionConfig = serde_json::from_value(ck.config.get("fusion").cloned().unwrap_or(Value::Null))
            .map_err(|e| Error::Format(format!("checkpoint config lacks a valid `fusion` entry: {e}")))?;
        let net = Self {
            params: ck.params.clone(),
            fusion,
            bins: StftConfig::default().bins(),
        };
        let template = EnhancerNetwork::init(0, fusion);
        let ok = template.params.len() == net.params.len()
            && template
                .params
                .iter()
                .zip(net.params.iter())
                .all(|((wn, wt), (n, t))| wn == n && wt.shape == t.shape);
        if !ok {
            return Err(Error::Shape("checkpoint tensors do not match the enhancer layout".into()));
        }
        Ok(net)
    }

    /// `config` must carry the fusion settings under `fusion`; they are added if absent.
    pub fn to_checkpoint(&self, seed: u64, corpus_peak: f64, mut config: Value, optimizer: Option<Adam>, history: Value) -> Checkpoint {
        let fusion = serde_json::to_value(self.fusion).expect("fusion config serializes");
        match &mut config {
            Value::Object(map) => {
                map.insert("fusion".into(), fusion);
            }
            _ => config = serde_json::json!({ "fusion": fusion }),
        }
        Checkpoint::new(CHECKPOINT_KIND, seed, corpus_peak, config, self.params.clone(), optimizer, history)
    }

    /// Mask `[F, T]` for a magnitude crop `[F, T]` (`T` a multiple of 4) and,
    /// in cross mode, visual rows `[T/4, D_v]` (one per bottleneck step).
    /// `frame_offset` positions the crop for the position table.
    pub fn forward_graph(&self, g: &mut Graph, p: &[Var], mag: Var, visual: Option<Var>, frame_offset: usize) -> Result<Var> {
        let (f, t) = g.value(mag).dims2()?;
        if f != self.bins || t == 0 || t % TIME_STRIDE != 0 {
            return Err(Error::Shape(format!(
                "enhancer input [{f}, {t}]: need {} bins and a positive multiple of {TIME_STRIDE} frames",
                self.bins
            )));
        }
        let b = Bound(p);
        let feat = g.sqrt_eps(mag, COMPRESS_EPS)?;
        let feat = g.scale(feat, COMPRESS_GAIN)?;
        let x = g.reshape(feat, &[1, f, t])?;
        let (w, bb) = b.conv(ENC1);
        let e1 = g.conv2d(x, w, bb, 2, 1)?;
        let e1 = g.relu(e1)?;
        let (w, bb) = b.conv(ENC2);
        let e2 = g.conv2d(e1, w, bb, 2, 1)?;
        let e2 = g.relu(e2)?;
        let (c2, h2, t2) = g.value(e2).dims3()?;

        let rows = g.permute3(e2, [2, 0, 1])?;
        let rows = g.reshape(rows, &[t2, c2 * h2])?;
        let (w, bb) = b.conv(DOWN);
        let a = g.dense(rows, w, bb)?;
        let kv = match (self.fusion.mode, visual) {
            (FusionMode::Cross, Some(v)) => {
                let (tv, dv) = g.value(v).dims2()?;
                if tv != t2 || dv != self.fusion.visual_dim {
                    return Err(Error::Shape(format!(
                        "fusion: visual rows [{tv}, {dv}] for {t2} bottleneck steps of width {}",
                        self.fusion.visual_dim
                    )));
                }
                v
            }
            (FusionMode::Cross, None) => return Err(Error::MissingVisual("<input>".into())),
            (FusionMode::SelfAttn, _) => a,
        };
        let pos = fusion_positions(g, t2, D_A, self.fusion.kv_width(), frame_offset / TIME_STRIDE);
        let m = [p[FUSION_BASE], p[FUSION_BASE + 1], p[FUSION_BASE + 2]];
        let fused = fusion_graph(g, a, kv, m, pos, Some(p[FUSION_BASE + 3]))?;
        let (w, bb) = b.conv(UP);
        let up = g.dense(fused, w, bb)?;
        let up = g.reshape(up, &[t2, c2, h2])?;
        let up = g.permute3(up, [1, 2, 0])?;
        let up = g.relu(up)?;
        let d = g.add(up, e2)?;

        let d = g.upsample2(d)?;
        let (w, bb) = b.conv(DEC1);
        let d = g.conv2d(d, w, bb, 1, 1)?;
        let d = g.relu(d)?;
        let d = g.add(d, e1)?;
        let d = g.upsample2(d)?;
        let (w, bb) = b.conv(DEC2);
        let d = g.conv2d(d, w, bb, 1, 1)?;
        let d = g.relu(d)?;
        let (w, bb) = b.conv(HEAD);
        let d = g.conv2d(d, w, bb, 1, 0)?;
        let d = g.sigmoid(d)?;
        g.reshape(d, &[f, t])
    }
}

/// Visual rows for the bottleneck steps of a crop starting at STFT frame
/// `frame_offset`: one row per `TIME_STRIDE` frames.
pub fn bottleneck_visual(track: &VisualFeatureTrack, frame_offset: usize, steps: usize) -> Result<FrameMatrix> {
    let hop_s = StftConfig::default().hop as f64 / SAMPLE_RATE as f64;
    let full = align_visual(track, frame_offset + steps * TIME_STRIDE, hop_s)?;
    let mut out = FrameMatrix::zeros(steps, track.dim());
    for r in 0..steps {
        out.row_mut(r).copy_from_slice(full.row(frame_offset + r * TIME_STRIDE));
    }
    Ok(out)
}

/// Result of one enhancement pass.
#[derive(Debug, Clone)]
pub struct Enhanced {
    pub waveform: Waveform,
    /// `F × T`, bin-major like the spectrogram.
    pub mask: Vec<f64>,
    pub enhanced_mag: Vec<f64>,
    pub bins: usize,
    pub frames: usize,
}

/// Noisy STFT of a signal padded so that every sample is covered by a full
/// frame, plus the number of frames.
pub(crate) fn padded_stft(plan: &StftPlan, x: &Waveform) -> Result<crate::signal::ComplexSpectrogram> {
    let cfg = &plan.config;
    let len = x.len().max(1);
    let frames = if len <= cfg.window_len { 1 } else { (len - cfg.window_len).div_ceil(cfg.hop) + 1 };
    let mut samples = x.samples.clone();
    samples.resize(cfg.span(frames), 0.0);
    plan.analyze(&samples, samples.len(), x.sample_rate_hz)
}

/// Zero-pad an `[F, T]` bin-major buffer to `t_out` frames.
pub(crate) fn pad_frames(data: &[f64], bins: usize, t: usize, t_out: usize) -> Vec<f64> {
    let mut out = vec![0.0; bins * t_out];
    for f in 0..bins {
        out[f * t_out..f * t_out + t].copy_from_slice(&data[f * t..(f + 1) * t]);
    }
    out
}

fn mask_to_waveform(
    plan: &StftPlan,
    spec: &crate::signal::ComplexSpectrogram,
    mask: &[f64],
    out_len: usize,
) -> (Waveform, Vec<f64>) {
    let mag = spec.magnitude();
    let enhanced_mag: Vec<f64> = mag.iter().zip(mask).map(|(m, k)| m * k).collect();
    let mut s = spec.clone();
    for ((z, p), m) in s.data.iter_mut().zip(spec.phasors()).zip(&enhanced_mag) {
        *z = p * *m;
    }
    let mut samples = plan.synthesize(&s);
    samples.truncate(out_len);
    (Waveform::new(samples, spec.sample_rate_hz), enhanced_mag)
}

/// Enhance `noisy` with a fixed mask instead of the network (for checks).
pub fn apply_mask(noisy: &Waveform, mask_value: impl Fn(usize, usize) -> f64) -> Result<Enhanced> {
    let plan = StftPlan::new(&StftConfig::default());
    let spec = padded_stft(&plan, noisy)?;
    let (bins, frames) = (spec.bins, spec.frames);
    let mask: Vec<f64> = (0..bins * frames).map(|i| mask_value(i / frames, i % frames)).collect();
    let (waveform, enhanced_mag) = mask_to_waveform(&plan, &spec, &mask, noisy.len());
    Ok(Enhanced {
        waveform,
        mask,
        enhanced_mag,
        bins,
        frames,
    })
}

/// One deterministic pass: mask the noisy STFT magnitude, keep the noisy phase.
pub fn enhance(noisy: &Waveform, visual: Option<&VisualFeatureTrack>, net: &EnhancerNetwork) -> Result<Enhanced> {
    if noisy.sample_rate_hz != SAMPLE_RATE {
        return Err(Error::Format(format!("enhancer expects {SAMPLE_RATE} Hz input, got {}", noisy.sample_rate_hz)));
    }
    if net.mode().needs_visual() && visual.is_none() {
        return Err(Error::MissingVisual("<input>".into()));
    }
    noisy.ensure_finite()?;
    let plan = StftPlan::new(&StftConfig::default());
    let spec = padded_stft(&plan, noisy)?;
    let (bins, frames) = (spec.bins, spec.frames);
    let t_pad = frames.div_ceil(TIME_STRIDE) * TIME_STRIDE;
    let mag = pad_frames(&spec.magnitude(), bins, frames, t_pad);

    let mut g = Graph::new();
    let p = net.params.bind(&mut g, false);
    let m = g.constant(Tensor::new(&[bins, t_pad], mag)?);
    let v = match (net.mode(), visual) {
        (FusionMode::Cross, Some(track)) => {
            let rows = bottleneck_visual(track, 0, t_pad / TIME_STRIDE)?;
            Some(g.constant(Tensor::new(&[rows.frames, rows.width], rows.data)?))
        }
        _ => None,
    };
    let out = net.forward_graph(&mut g, &p, m, v, 0)?;
    let full = &g.value(out).data;
    let mut mask = vec![0.0; bins * frames];
    for f in 0..bins {
        mask[f * frames..(f + 1) * frames].copy_from_slice(&full[f * t_pad..f * t_pad + frames]);
    }
    let (waveform, enhanced_mag) = mask_to_waveform(&plan, &spec, &mask, noisy.len());
    Ok(Enhanced {
        waveform,
        mask,
        enhanced_mag,
        bins,
        frames,
    })
}

/// Feature compression applied to magnitudes before the network and in the
/// spectrogram loss.
pub fn compress_magnitudes(m: &[f64]) -> Vec<f64> {
    m.iter().map(|&v| compress(v)).collect()
}
