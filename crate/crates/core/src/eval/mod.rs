//! Tone vocoder, objective intelligibility metrics and system evaluation.

mod ncm;
mod pipeline;
mod report;
mod stoi;
mod vocoder;

pub use ncm::{band_centres, ncm, transmission_index, NCM_BANDS};
pub use pipeline::{evaluate_set, InputCondition, System, SystemKind};
pub use report::{Failure, MetricReport, MetricRow, Scores};
pub use stoi::{estoi, stoi};
pub use vocoder::{tone_vocode, VocoderConfig};

use crate::error::Result;
use crate::signal::Waveform;

/// STOI, ESTOI and NCM of `proc` against `clean`.
pub fn score(clean: &Waveform, proc: &Waveform) -> Result<Scores> {
    Ok(Scores {
        stoi: stoi(clean, proc)?,
        estoi: estoi(clean, proc)?,
        ncm: ncm(clean, proc)?,
    })
}
