use super::{build_channel_map, AceAnalyzer, EnvelopeMatrix, N_TOPK};
use crate::error::Result;
use crate::frames::FrameMatrix;
use crate::signal::Waveform;

/// Per-frame stimulation magnitudes in [0, 1] with at most `n_active` nonzero
/// channels per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Electrodogram {
    pub values: FrameMatrix,
    pub n_active: usize,
    pub frame_rate: f64,
}

impl Electrodogram {
    pub fn channels(&self) -> usize {
        self.values.width
    }

    pub fn frames(&self) -> usize {
        self.values.frames
    }

    pub fn nonzero_in_frame(&self, t: usize) -> usize {
        self.values.row(t).iter().filter(|&&v| v != 0.0).count()
    }
}

/// Indices of the `n` largest entries of `row`; ties go to the lower index.
pub fn select_row(row: &[f64], n: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    // Stable sort keeps ascending index order among equal values.
    idx.sort_by(|&a, &b| row[b].total_cmp(&row[a]));
    idx.truncate(n);
    idx.sort_unstable();
    idx
}

pub fn select_maxima(env: &EnvelopeMatrix, n: usize) -> Electrodogram {
    let m = env.values.width;
    assert!((1..=m).contains(&n), "n must be in 1..={m}");
    let mut out = FrameMatrix::zeros(env.values.frames, m);
    for t in 0..env.values.frames {
        let row = env.values.row(t);
        let dst = out.row_mut(t);
        for c in select_row(row, n) {
            dst[c] = row[c];
        }
    }
    Electrodogram {
        values: out,
        n_active: n,
        frame_rate: env.frame_rate,
    }
}

/// Loudness growth function: logarithmic compression of `x` between `base` and `sat`.
pub fn lgf(x: f64, base: f64, sat: f64, rho: f64) -> f64 {
    assert!(sat > base);
    if x <= base {
        0.0
    } else if x >= sat {
        1.0
    } else {
        (1.0 + rho * (x - base) / (sat - base)).ln() / (1.0 + rho).ln()
    }
}

pub fn lgf_default(x: f64) -> f64 {
    lgf(x, 0.0156, 1.0, 416.2)
}

/// ACE: envelopes followed by 8-of-22 maxima selection, in the envelope domain.
pub fn ace_encode(w: &Waveform, reference_peak: f64) -> Result<Electrodogram> {
    let (env, _) = AceAnalyzer::new(build_channel_map()).analyze(w, Some(reference_peak))?;
    Ok(select_maxima(&env, N_TOPK))
}
