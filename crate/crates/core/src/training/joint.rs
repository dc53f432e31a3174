use std::fmt::Write as _;
use std::rc::Rc;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::losses::{total_loss_graph, Bridge, LossWeights};
use crate::avse::enhancer::{bottleneck_visual, compress_magnitudes, TIME_STRIDE};
use crate::avse::{EnhancerNetwork, FusionConfig, FusionMode, VisualFeatureTrack};
use crate::ace::M_CHANNELS;
use crate::data::{Manifest, Split};
use crate::ecs::EcsNetwork;
use crate::error::{Error, Result};
use crate::frames::FrameMatrix;
use crate::nn::{Adam, AdamConfig, Checkpoint, Graph, Tensor, Var};
use crate::seed;
use crate::signal::{StftConfig, StftPlan, Waveform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpecDomain {
    /// MSE between `0.15·sqrt(|X|)` of enhanced and clean magnitudes.
    Compressed,
    /// MSE between raw magnitudes.
    Magnitude,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointConfig {
    pub weights: LossWeights,
    pub lr: f64,
    pub epochs: usize,
    /// Crop length in STFT frames.
    pub crop_frames: usize,
    pub seed: u64,
    pub fusion: FusionMode,
    pub freeze_ecs: bool,
    pub spec_domain: SpecDomain,
    /// Use only the first `n` training utterances (reduced runs).
    pub max_utterances: Option<usize>,
}

impl Default for JointConfig {
    fn default() -> Self {
        Self {
            weights: LossWeights::default(),
            lr: 1e-4,
            epochs: 30,
            crop_frames: 256,
            seed: 0,
            fusion: FusionMode::Cross,
            freeze_ecs: true,
            spec_domain: SpecDomain::Compressed,
            max_utterances: None,
        }
    }
}

impl JointConfig {
    pub fn validate(&self) -> Result<()> {
        self.weights.validate()?;
        if !self.freeze_ecs {
            return Err(Error::Config("the channel-selection network is always frozen during joint training".into()));
        }
        if self.crop_frames == 0 || self.crop_frames % TIME_STRIDE != 0 {
            return Err(Error::Config(format!("crop_frames must be a positive multiple of {TIME_STRIDE}")));
        }
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub epoch: usize,
    pub utterance: String,
    pub l_spec: f64,
    /// `None` when the electrodogram branch was not evaluated.
    pub l_elec: Option<f64>,
    pub l_total: f64,
    /// Norm of whatever gradient reached the ECS parameters on the tape.
    pub ecs_grad_norm: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct JointHistory {
    pub epoch_spec: Vec<f64>,
    pub epoch_elec: Vec<f64>,
    pub epoch_total: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub network: EnhancerNetwork,
    pub checkpoint: Checkpoint,
    pub log: Vec<StepLog>,
    pub history: JointHistory,
}

/// `step,L_Spec,L_Elec,L_Total` with one row per optimizer step.
pub fn log_csv(log: &[StepLog]) -> String {
    let mut s = String::from("step,L_Spec,L_Elec,L_Total\n");
    for r in log {
        let elec = r.l_elec.map(|v| format!("{v:.9e}")).unwrap_or_default();
        let _ = writeln!(s, "{},{:.9e},{},{:.9e}", r.step, r.l_spec, elec, r.l_total);
    }
    s
}

/// One training utterance with everything a crop needs.
struct TrainItem {
    id: String,
    noisy: Vec<f64>,
    clean: Vec<f64>,
    /// Frames of the padded utterance.
    frames: usize,
    visual: Option<VisualFeatureTrack>,
    /// Frozen-ECS electrodogram of the clean speech, coder frames × 22.
    clean_elec: Option<FrameMatrix>,
}

/// Padded frame count so every sample lies under a full frame.
fn padded_frames(cfg: &StftConfig, len: usize) -> usize {
    if len <= cfg.window_len {
        1
    } else {
        (len - cfg.window_len).div_ceil(cfg.hop) + 1
    }
}

fn load_items(manifest: &Manifest, cfg: &JointConfig, ecs: Option<&EcsNetwork>) -> Result<Vec<TrainItem>> {
    let stft = StftConfig::default();
    let mut entries: Vec<_> = manifest.split(Split::Train).collect();
    if let Some(n) = cfg.max_utterances {
        entries.truncate(n);
    }
    if entries.is_empty() {
        return Err(Error::Data("training manifest has no train utterances".into()));
    }
    let mut items = Vec::with_capacity(entries.len());
    for e in entries {
        let utt = manifest.load_utterance(e)?;
        let clean = utt.clean_in_mixture();
        let frames = padded_frames(&stft, utt.noisy.len());
        let visual = if cfg.fusion.needs_visual() {
            Some(manifest.load_visual(e).map_err(|err| match err {
                Error::MissingVisual(id) => Error::MissingVisual(id),
                other => Error::Data(format!("visual features for `{}`: {other}", e.id)),
            })?)
        } else {
            None
        };
        let clean_elec = match ecs {
            Some(net) => {
                let mut padded = clean.samples.clone();
                padded.resize(stft.span(frames), 0.0);
                Some(net.encode(&Waveform::new(padded, clean.sample_rate_hz))?.values)
            }
            None => None,
        };
        items.push(TrainItem {
            id: e.id.clone(),
            noisy: utt.noisy.samples,
            clean: clean.samples,
            frames,
            visual,
            clean_elec,
        });
    }
    Ok(items)
}

/// The epoch/crop schedule shared by every trainer so runs at the same seed
/// see identical data regardless of the loss weights.
struct Schedule {
    rng: ChaCha8Rng,
    seed: u64,
}

impl Schedule {
    fn new(seed_value: u64) -> Self {
        Self {
            rng: seed::rng(seed_value, "joint/crop"),
            seed: seed_value,
        }
    }

    fn epoch_order(&self, n: usize, epoch: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut seed::rng(self.seed, &format!("joint/shuffle/{epoch}")));
        order
    }

    fn crop_start(&mut self, frames: usize, crop: usize) -> usize {
        if frames > crop {
            self.rng.gen_range(0..=frames - crop)
        } else {
            0
        }
    }
}

/// Inputs for one crop, all `[F, T]` bin-major.
struct Crop {
    noisy_mag: Vec<f64>,
    phasors: Rc<[Complex64]>,
    clean_target: Vec<f64>,
    frame_weights: Vec<f64>,
    visual: Option<FrameMatrix>,
    offset: usize,
    valid: usize,
}

fn segment(x: &[f64], start: usize, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    if start < x.len() {
        let end = (start + len).min(x.len());
        out[..end - start].copy_from_slice(&x[start..end]);
    }
    out
}

fn make_crop(plan: &StftPlan, item: &TrainItem, t0: usize, t: usize, domain: SpecDomain) -> Result<Crop> {
    let cfg = &plan.config;
    let len = cfg.span(t);
    let start = t0 * cfg.hop;
    let noisy = plan.analyze(&segment(&item.noisy, start, len), len, crate::signal::SAMPLE_RATE)?;
    let clean = plan.analyze(&segment(&item.clean, start, len), len, crate::signal::SAMPLE_RATE)?;
    let valid = (item.frames - t0).min(t);
    let bins = noisy.bins;
    let mut frame_weights = vec![0.0; bins * t];
    let mut noisy_mag = noisy.magnitude();
    let mut clean_mag = clean.magnitude();
    for f in 0..bins {
        for j in 0..t {
            if j < valid {
                frame_weights[f * t + j] = 1.0;
            } else {
                // Padding frames carry nothing.
                noisy_mag[f * t + j] = 0.0;
                clean_mag[f * t + j] = 0.0;
            }
        }
    }
    let clean_target = match domain {
        SpecDomain::Compressed => compress_magnitudes(&clean_mag),
        SpecDomain::Magnitude => clean_mag,
    };
    let visual = match &item.visual {
        Some(track) => Some(bottleneck_visual(track, t0, t / TIME_STRIDE)?),
        None => None,
    };
    Ok(Crop {
        noisy_mag,
        phasors: noisy.phasors().into(),
        clean_target,
        frame_weights,
        visual,
        offset: t0,
        valid,
    })
}

/// Spectrogram loss on the graph, over valid frames only.
fn spec_term(g: &mut Graph, enhanced: Var, crop: &Crop, domain: SpecDomain) -> Result<Var> {
    let shape = g.value(enhanced).shape.clone();
    let pred = match domain {
        SpecDomain::Compressed => {
            let s = g.sqrt_eps(enhanced, crate::avse::enhancer::COMPRESS_EPS)?;
            g.scale(s, crate::avse::enhancer::COMPRESS_GAIN)?
        }
        SpecDomain::Magnitude => enhanced,
    };
    let target = g.constant(Tensor::new(&shape, crop.clean_target.clone())?);
    g.mse(pred, target, Some(crop.frame_weights.clone().into()))
}

/// Forward the enhancer on a crop and return `(mask·|S|, enhancer param handles)`.
fn enhanced_on_graph(g: &mut Graph, net: &EnhancerNetwork, crop: &Crop, t: usize) -> Result<(Var, Vec<Var>)> {
    let p = net.params.bind(g, true);
    let mag = g.constant(Tensor::new(&[net.bins, t], crop.noisy_mag.clone())?);
    let vis = match &crop.visual {
        Some(v) => Some(g.constant(Tensor::new(&[v.frames, v.width], v.data.clone())?)),
        None => None,
    };
    let mask = net.forward_graph(g, &p, mag, vis, crop.offset)?;
    let enhanced = g.mul(mask, mag)?;
    Ok((enhanced, p))
}

fn step_error(e: Error, step: usize, id: &str, t0: usize) -> Error {
    match e {
        Error::Numeric(msg) => Error::Numeric(format!("training step {step} (utterance `{id}`, crop at frame {t0}): {msg}")),
        other => other,
    }
}

fn history_of(log: &[StepLog], epochs: usize) -> JointHistory {
    let mut h = JointHistory::default();
    for e in 0..epochs {
        let rows: Vec<&StepLog> = log.iter().filter(|r| r.epoch == e).collect();
        let n = rows.len().max(1) as f64;
        h.epoch_spec.push(rows.iter().map(|r| r.l_spec).sum::<f64>() / n);
        h.epoch_elec.push(rows.iter().map(|r| r.l_elec.unwrap_or(0.0)).sum::<f64>() / n);
        h.epoch_total.push(rows.iter().map(|r| r.l_total).sum::<f64>() / n);
    }
    h
}

fn finish(
    net: EnhancerNetwork,
    adam: Adam,
    cfg: &JointConfig,
    corpus_peak: f64,
    log: Vec<StepLog>,
) -> Result<TrainOutcome> {
    let history = history_of(&log, cfg.epochs);
    let config = serde_json::to_value(cfg)?;
    let checkpoint = net.to_checkpoint(cfg.seed, corpus_peak, config, Some(adam), serde_json::to_value(&history)?);
    Ok(TrainOutcome {
        network: EnhancerNetwork::from_checkpoint(&checkpoint)?,
        checkpoint,
        log,
        history,
    })
}

/// Train the enhancer through the frozen channel-selection network with
/// `α·L_Spec + β·L_Elec`. With β = 0 the electrodogram branch is still
/// evaluated for the log but takes no part in the backward pass.
pub fn joint_train(manifest: &Manifest, ecs: &EcsNetwork, cfg: &JointConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let items = load_items(manifest, cfg, Some(ecs))?;
    let plan = StftPlan::new(&StftConfig::default());
    let bridge = Bridge::standard(ecs.input_scale());
    let mut net = EnhancerNetwork::init(cfg.seed, FusionConfig::new(cfg.fusion));
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr), &net.params);
    let mut schedule = Schedule::new(cfg.seed);
    let t = cfg.crop_frames;
    let coder_frames = bridge.coder_frames(plan.config.span(t));
    let coder_hop_ratio = plan.config.hop / bridge.analysis.hop;
    let mut log = Vec::new();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        for i in schedule.epoch_order(items.len(), epoch) {
            let item = &items[i];
            let t0 = schedule.crop_start(item.frames, t);
            let crop = make_crop(&plan, item, t0, t, cfg.spec_domain)?;
            let clean_elec = item.clean_elec.as_ref().expect("loaded with ECS");
            // Coder frame j of the crop is frame coder_hop_ratio·t0 + j of the utterance.
            let base = coder_hop_ratio * t0;
            let valid_len = plan.config.span(crop.valid);
            let mut target = vec![0.0; coder_frames * M_CHANNELS];
            let mut weights = vec![0.0; coder_frames * M_CHANNELS];
            for j in 0..coder_frames {
                let inside = j * bridge.analysis.hop + bridge.analysis.fft_len <= valid_len;
                if inside && base + j < clean_elec.frames {
                    target[j * M_CHANNELS..(j + 1) * M_CHANNELS].copy_from_slice(clean_elec.row(base + j));
                    weights[j * M_CHANNELS..(j + 1) * M_CHANNELS].iter_mut().for_each(|w| *w = 1.0);
                }
            }

            let mut g = Graph::new();
            let run = (|| -> Result<StepLog> {
                let (enhanced, p) = enhanced_on_graph(&mut g, &net, &crop, t)?;
                let spec = spec_term(&mut g, enhanced, &crop, cfg.spec_domain)?;
                let ecs_vars = ecs.params.bind(&mut g, !cfg.freeze_ecs);
                let encoder = |g: &mut Graph, x: Var| EcsNetwork::forward_graph(g, &ecs_vars, x);
                let elec_out = bridge.electrodogram(&mut g, enhanced, crop.phasors.clone(), &encoder)?;
                let target = g.constant(Tensor::new(&[coder_frames, M_CHANNELS], target.clone())?);
                let elec = g.mse(elec_out, target, Some(weights.clone().into()))?;
                let elec_in_total = (cfg.weights.beta != 0.0).then_some(elec);
                let total = total_loss_graph(&mut g, spec, elec_in_total, cfg.weights)?;
                g.backward(total)?;
                let grads = net.params.grads(&g, &p);
                let ecs_grad_norm = ecs_vars
                    .iter()
                    .map(|v| g.grad(*v).map(|t| t.norm().powi(2)).unwrap_or(0.0))
                    .sum::<f64>()
                    .sqrt();
                adam.step(&mut net.params, &grads)?;
                Ok(StepLog {
                    step,
                    epoch,
                    utterance: item.id.clone(),
                    l_spec: g.value(spec).item(),
                    l_elec: Some(g.value(elec).item()),
                    l_total: g.value(total).item(),
                    ecs_grad_norm,
                })
            })();
            let row = run.map_err(|e| step_error(e, step, &item.id, t0))?;
            log.push(row);
            step += 1;
        }
        if let Some(h) = history_of(&log, epoch + 1).epoch_total.last() {
            log::info!("joint epoch {} (β = {}): mean L_Total {h:.6}", epoch + 1, cfg.weights.beta);
        }
    }
    finish(net, adam, cfg, ecs.corpus_peak, log)
}

/// The spectrogram-loss-only trainer: same data schedule and enhancer, no
/// coder in the loop.
pub fn train_spec_only(manifest: &Manifest, corpus_peak: f64, cfg: &JointConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let items = load_items(manifest, cfg, None)?;
    let plan = StftPlan::new(&StftConfig::default());
    let mut net = EnhancerNetwork::init(cfg.seed, FusionConfig::new(cfg.fusion));
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr), &net.params);
    let mut schedule = Schedule::new(cfg.seed);
    let t = cfg.crop_frames;
    let mut log = Vec::new();
    let mut step = 0;
    for epoch in 0..cfg.epochs {
        for i in schedule.epoch_order(items.len(), epoch) {
            let item = &items[i];
            let t0 = schedule.crop_start(item.frames, t);
            let crop = make_crop(&plan, item, t0, t, cfg.spec_domain)?;
            let mut g = Graph::new();
            let run = (|| -> Result<StepLog> {
                let (enhanced, p) = enhanced_on_graph(&mut g, &net, &crop, t)?;
                let spec = spec_term(&mut g, enhanced, &crop, cfg.spec_domain)?;
                let total = g.scale(spec, cfg.weights.alpha)?;
                g.backward(total)?;
                let grads = net.params.grads(&g, &p);
                adam.step(&mut net.params, &grads)?;
                Ok(StepLog {
                    step,
                    epoch,
                    utterance: item.id.clone(),
                    l_spec: g.value(spec).item(),
                    l_elec: None,
                    l_total: g.value(total).item(),
                    ecs_grad_norm: 0.0,
                })
            })();
            log.push(run.map_err(|e| step_error(e, step, &item.id, t0))?);
            step += 1;
        }
    }
    finish(net, adam, cfg, corpus_peak, log)
}
