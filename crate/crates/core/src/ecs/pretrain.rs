use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{EcsNetwork, INPUT_BINS, LAYER_WIDTHS};
use crate::ace::{build_channel_map, corpus_reference_peak, AceAnalyzer, M_CHANNELS};
use crate::error::{Error, Result};
use crate::frames::FrameMatrix;
use crate::nn::{Adam, AdamConfig, Graph, Tensor};
use crate::seed;
use crate::signal::Waveform;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcsTrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub batch_frames: usize,
    pub val_fraction: f64,
    pub seed: u64,
}

impl Default for EcsTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 8,
            lr: 1e-3,
            batch_frames: 256,
            val_fraction: 0.05,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EcsHistory {
    pub train_loss: Vec<f64>,
    pub val_loss: Vec<f64>,
}

/// Paired per-frame magnitudes (unscaled) and normalized ACE envelopes.
#[derive(Debug, Clone)]
pub struct FrameSet {
    pub inputs: FrameMatrix,
    pub targets: FrameMatrix,
}

impl FrameSet {
    pub fn from_corpus(corpus: &[Waveform], corpus_peak: f64) -> Result<Self> {
        let analyzer = AceAnalyzer::new(build_channel_map());
        let (mut inputs, mut targets) = (Vec::new(), Vec::new());
        for w in corpus {
            let (env, mag) = analyzer.analyze(w, Some(corpus_peak))?;
            inputs.extend_from_slice(&mag.data);
            targets.extend_from_slice(&env.values.data);
        }
        let frames = inputs.len() / INPUT_BINS;
        Ok(Self {
            inputs: FrameMatrix::from_vec(frames, INPUT_BINS, inputs),
            targets: FrameMatrix::from_vec(frames, M_CHANNELS, targets),
        })
    }

    /// Gain that brings `inputs / corpus_peak` to unit RMS, rounded to f32.
    pub fn unit_rms_gain(&self, corpus_peak: f64) -> f64 {
        let n = self.inputs.data.len().max(1) as f64;
        let rms = (self.inputs.data.iter().map(|v| (v / corpus_peak).powi(2)).sum::<f64>() / n).sqrt();
        if rms > 0.0 {
            (1.0 / rms) as f32 as f64
        } else {
            1.0
        }
    }

    pub fn frames(&self) -> usize {
        self.inputs.frames
    }

    fn batch(&self, idx: &[usize], scale: f64) -> (Tensor, Tensor) {
        let x: Vec<f64> = idx.iter().flat_map(|&t| self.inputs.row(t).iter().map(move |v| v * scale)).collect();
        let y: Vec<f64> = idx.iter().flat_map(|&t| self.targets.row(t).iter().copied()).collect();
        (
            Tensor {
                shape: vec![idx.len(), INPUT_BINS],
                data: x,
            },
            Tensor {
                shape: vec![idx.len(), M_CHANNELS],
                data: y,
            },
        )
    }

    /// Mean absolute error of the network's pre-mask output over `idx`.
    pub fn l1_gap(&self, net: &EcsNetwork, idx: &[usize]) -> Result<f64> {
        let mut total = 0.0;
        for chunk in idx.chunks(4096) {
            let (x, y) = self.batch(chunk, net.input_scale());
            let mut g = Graph::new();
            let vars = net.params.bind(&mut g, false);
            let xv = g.constant(x);
            let yv = g.constant(y);
            let out = EcsNetwork::forward_graph(&mut g, &vars, xv)?;
            let loss = g.l1(out, yv)?;
            total += g.value(loss).item() * chunk.len() as f64;
        }
        Ok(total / idx.len().max(1) as f64)
    }
}

fn diverged(e: Error, epoch: usize, batch: usize) -> Error {
    match e {
        Error::Numeric(msg) => Error::Numeric(format!("ECS pretraining diverged at epoch {epoch}, batch {batch}: {msg}")),
        other => other,
    }
}

/// Fit the network to ACE envelopes of a clean corpus with an L1 loss over all
/// channels. A fixed fraction of frames, chosen by the seed, is held out.
pub fn pretrain(corpus: &[Waveform], cfg: &EcsTrainConfig) -> Result<(EcsNetwork, EcsHistory, Adam)> {
    if corpus.is_empty() {
        return Err(Error::Data("ECS pretraining needs a nonempty corpus".into()));
    }
    if cfg.batch_frames == 0 || !(0.0..1.0).contains(&cfg.val_fraction) {
        return Err(Error::Config("ECS pretraining: batch_frames must be positive and val_fraction in [0, 1)".into()));
    }
    let peak = corpus_reference_peak(corpus, &build_channel_map())?;
    if peak <= 0.0 {
        return Err(Error::DegenerateInput("ECS pretraining corpus is silent".into()));
    }
    let data = FrameSet::from_corpus(corpus, peak)?;
    let gain = data.unit_rms_gain(peak);
    let mut order: Vec<usize> = (0..data.frames()).collect();
    order.shuffle(&mut seed::rng(cfg.seed, "ecs/split"));
    let n_val = ((data.frames() as f64) * cfg.val_fraction).round() as usize;
    let (val, train) = order.split_at(n_val);
    let mut train = train.to_vec();

    let mut net = EcsNetwork::init(cfg.seed, peak, gain);
    // Start the output at the mean envelope instead of sigmoid(0) = 0.5: with
    // most targets near zero, the initial pull toward zero otherwise saturates
    // the sigmoid and Adam's second moments never recover.
    let mean = data.targets.data.iter().sum::<f64>() / data.targets.data.len().max(1) as f64;
    let logit = (mean.clamp(1e-4, 0.5) / (1.0 - mean.clamp(1e-4, 0.5))).ln();
    let out_bias = net.params.index(&format!("ecs.dense{}.bias", LAYER_WIDTHS.len() - 1)).expect("output bias");
    net.params.tensor_mut(out_bias).data.iter_mut().for_each(|b| *b = logit);
    let mut adam = Adam::new(AdamConfig::with_lr(cfg.lr), &net.params);
    let mut history = EcsHistory::default();
    let scale = net.input_scale();
    for epoch in 0..cfg.epochs {
        train.shuffle(&mut seed::rng(cfg.seed, &format!("ecs/shuffle/{epoch}")));
        let mut sum = 0.0;
        for (b, idx) in train.chunks(cfg.batch_frames).enumerate() {
            let (x, y) = data.batch(idx, scale);
            let mut g = Graph::new();
            let vars = net.params.bind(&mut g, true);
            let xv = g.constant(x);
            let yv = g.constant(y);
            let step = (|| {
                let out = EcsNetwork::forward_graph(&mut g, &vars, xv)?;
                let loss = g.l1(out, yv)?;
                g.backward(loss)?;
                Ok(g.value(loss).item())
            })();
            let loss = step.map_err(|e| diverged(e, epoch, b))?;
            let grads = net.params.grads(&g, &vars);
            adam.step(&mut net.params, &grads).map_err(|e| diverged(e, epoch, b))?;
            sum += loss * idx.len() as f64;
        }
        history.train_loss.push(sum / train.len().max(1) as f64);
        if !val.is_empty() {
            history.val_loss.push(data.l1_gap(&net, val)?);
        }
        log::info!(
            "ecs epoch {}: train L1 {:.5}, val L1 {:.5}",
            epoch + 1,
            history.train_loss[epoch],
            history.val_loss.last().copied().unwrap_or(f64::NAN)
        );
    }
    Ok((net, history, adam))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chirp(len: usize, f0: f64, f1: f64, amp: f64) -> Waveform {
        let mut phase = 0.0;
        let samples = (0..len)
            .map(|i| {
                let f = f0 + (f1 - f0) * i as f64 / len as f64;
                phase += 2.0 * std::f64::consts::PI * f / 16000.0;
                amp * phase.sin()
            })
            .collect();
        Waveform::new(samples, 16000)
    }

    #[test]
    fn training_reduces_loss_and_is_deterministic() {
        let corpus = vec![chirp(4000, 200.0, 3000.0, 0.5), chirp(4000, 5000.0, 800.0, 0.3)];
        let cfg = EcsTrainConfig {
            epochs: 3,
            batch_frames: 64,
            seed: 11,
            ..Default::default()
        };
        let (net, h, _) = pretrain(&corpus, &cfg).unwrap();
        assert_eq!(h.train_loss.len(), 3);
        assert!(h.train_loss[2] <= h.train_loss[0], "{h:?}");
        let (net2, h2, _) = pretrain(&corpus, &cfg).unwrap();
        assert_eq!(net.params.fingerprint(), net2.params.fingerprint());
        assert_eq!(h, h2);
    }

    #[test]
    fn empty_or_silent_corpus_rejected() {
        assert!(pretrain(&[], &EcsTrainConfig::default()).is_err());
        let silent = vec![Waveform::zeros(2000, 16000)];
        assert!(matches!(pretrain(&silent, &EcsTrainConfig::default()), Err(Error::DegenerateInput(_))));
    }
}
