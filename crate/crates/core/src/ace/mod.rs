//! Conventional ACE coding: 128-point FFT filterbank, 22 channel envelopes,
//! N-of-M maxima selection and the loudness growth function.

mod channel_map;
pub mod elec_file;
mod envelope;
mod select;

pub use channel_map::{build_channel_map, ChannelMap, ChannelSpan};
pub use envelope::{
    analyze_envelopes, corpus_reference_peak, AceAnalyzer, EnvelopeMatrix, DEFAULT_REFERENCE_PEAK,
};
pub use select::{ace_encode, lgf, lgf_default, select_maxima, select_row, Electrodogram};

/// Channels selected per frame.
pub const N_TOPK: usize = 8;
/// Electrode channels.
pub const M_CHANNELS: usize = 22;
