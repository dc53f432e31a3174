//! Neural channel-selection strategy: a per-frame dense network from the 65
//! FFT magnitudes of the ACE front-end to 22 channel envelopes, followed by a
//! top-8 selection layer.

mod pretrain;

pub use pretrain::{pretrain, EcsHistory, EcsTrainConfig, FrameSet};

use serde_json::Value;

use crate::ace::{build_channel_map, AceAnalyzer, Electrodogram, M_CHANNELS, N_TOPK};
use crate::error::{Error, Result};
use crate::frames::FrameMatrix;
use crate::nn::{glorot_uniform, Adam, Checkpoint, Graph, ParamStore, Tensor, Var};
use crate::signal::Waveform;

pub const INPUT_BINS: usize = 65;
pub const LAYER_WIDTHS: [usize; 4] = [1024, 512, 256, M_CHANNELS];
pub const CHECKPOINT_KIND: &str = "ecs";

#[derive(Debug, Clone, PartialEq)]
pub struct EcsNetwork {
    pub params: ParamStore,
    /// Raw-envelope reference peak; inputs are divided by it.
    pub corpus_peak: f64,
    /// Extra input gain so peak-normalized magnitudes have unit RMS over the
    /// pretraining corpus. Stored as `input_gain` in the checkpoint config.
    pub input_gain: f64,
}

fn layer_names(i: usize) -> (String, String) {
    (format!("ecs.dense{i}.weight"), format!("ecs.dense{i}.bias"))
}

impl EcsNetwork {
    /// Glorot-uniform weights and zero biases.
    pub fn init(seed: u64, corpus_peak: f64, input_gain: f64) -> Self {
        let mut params = ParamStore::new();
        let mut fan_in = INPUT_BINS;
        for (i, &width) in LAYER_WIDTHS.iter().enumerate() {
            let (w, b) = layer_names(i);
            params.add(w.clone(), glorot_uniform(&[fan_in, width], fan_in, width, seed, &w));
            params.add(b, Tensor::zeros(&[width]));
            fan_in = width;
        }
        Self {
            params,
            corpus_peak,
            input_gain,
        }
    }

    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        if ck.kind != CHECKPOINT_KIND {
            return Err(Error::Format(format!("expected an `{CHECKPOINT_KIND}` checkpoint, found `{}`", ck.kind)));
        }
        let mut fan_in = INPUT_BINS;
        for (i, &width) in LAYER_WIDTHS.iter().enumerate() {
            let (w, b) = layer_names(i);
            let ok = ck.params.get(&w).map(|t| t.shape == [fan_in, width]) == Some(true)
                && ck.params.get(&b).map(|t| t.shape == [width]) == Some(true);
            if !ok {
                return Err(Error::Shape(format!("checkpoint layer {i} does not match {fan_in}→{width}")));
            }
            fan_in = width;
        }
        if ck.params.len() != 2 * LAYER_WIDTHS.len() {
            return Err(Error::Shape("checkpoint has extra tensors for an ECS network".into()));
        }
        let input_gain = match ck.config.get("input_gain") {
            None => 1.0,
            Some(v) => v
                .as_f64()
                .filter(|g| g.is_finite() && *g > 0.0)
                .ok_or_else(|| Error::Format(format!("checkpoint input_gain must be a positive number, got {v}")))?,
        };
        Ok(Self {
            params: ck.params.clone(),
            corpus_peak: ck.corpus_peak,
            input_gain,
        })
    }

    /// `config` is stored under `train`, next to `input_gain`.
    pub fn to_checkpoint(&self, seed: u64, config: Value, optimizer: Option<Adam>, history: Value) -> Checkpoint {
        let config = serde_json::json!({ "input_gain": self.input_gain, "train": config });
        Checkpoint::new(CHECKPOINT_KIND, seed, self.corpus_peak, config, self.params.clone(), optimizer, history)
    }

    pub fn input_scale(&self) -> f64 {
        if self.corpus_peak > 0.0 {
            self.input_gain / self.corpus_peak
        } else {
            1.0
        }
    }

    /// `x: [N, 65]` already scaled; returns the pre-mask envelopes `[N, 22]`.
    pub fn forward_graph(g: &mut Graph, params: &[Var], x: Var) -> Result<Var> {
        let mut h = x;
        let last = LAYER_WIDTHS.len() - 1;
        for i in 0..LAYER_WIDTHS.len() {
            h = g.dense(h, params[2 * i], params[2 * i + 1])?;
            h = if i == last { g.sigmoid(h)? } else { g.relu(h)? };
        }
        Ok(h)
    }

    /// Pre-mask envelopes and the top-8 electrodogram for unscaled magnitudes
    /// (`frames × 65`).
    pub fn forward(&self, mag: &FrameMatrix) -> Result<(FrameMatrix, Electrodogram)> {
        if mag.width != INPUT_BINS {
            return Err(Error::Shape(format!("ECS input has {} bins, expected {INPUT_BINS}", mag.width)));
        }
        let scale = self.input_scale();
        let mut g = Graph::new();
        let vars = self.params.bind(&mut g, false);
        let x = g.constant(Tensor::new(&[mag.frames, INPUT_BINS], mag.data.iter().map(|v| v * scale).collect())?);
        let env = Self::forward_graph(&mut g, &vars, x)?;
        let elec = g.topk_mask(env, N_TOPK)?;
        let env_pre = FrameMatrix::from_vec(mag.frames, M_CHANNELS, g.value(env).data.clone());
        let values = FrameMatrix::from_vec(mag.frames, M_CHANNELS, g.value(elec).data.clone());
        Ok((
            env_pre,
            Electrodogram {
                values,
                n_active: N_TOPK,
                frame_rate: build_channel_map().frame_rate(),
            },
        ))
    }

    /// ACE framing (128/32, Hann) followed by the network and top-8 selection.
    pub fn encode(&self, w: &Waveform) -> Result<Electrodogram> {
        let mag = AceAnalyzer::new(build_channel_map()).magnitudes(&w.samples)?;
        Ok(self.forward(&mag)?.1)
    }
}
