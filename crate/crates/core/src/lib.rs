//! Cochlear-implant sound coding with a neural channel-selection strategy and an
//! audio-visual speech-enhancement front-end.
//!
//! The crate covers the whole signal chain:
//!
//! * [`signal`]: WAV I/O, resampling, STFT/ISTFT.
//! * [`ace`]: the conventional ACE strategy (filterbank envelopes, N-of-M selection).
//! * [`nn`]: a small reverse-mode autodiff kernel with the layers the models need.
//! * [`ecs`]: the dense network that emulates ACE, ending in a top-k selection layer.
//! * [`avse`]: the masking enhancer with audio-visual cross-attention fusion.
//! * [`training`]: spectrogram/electrodogram losses and joint training.
//! * [`eval`]: tone vocoder, STOI, ESTOI and NCM.
//! * [`data`]: desk-scale corpus synthesis, SNR mixing and manifests.

pub mod ace;
pub mod avse;
pub mod data;
pub mod ecs;
pub mod error;
pub mod eval;
pub mod frames;
pub mod nn;
pub mod seed;
pub mod signal;
pub mod training;

pub use error::{Error, Result};
