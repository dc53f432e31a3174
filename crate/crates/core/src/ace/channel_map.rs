use crate::signal::SAMPLE_RATE;

/// Bins per channel for the standard 22-channel map, apical to basal.
const STANDARD_COUNTS: [usize; 22] = [1, 1, 1, 1, 1, 1, 1, 1, 1, 2, 2, 2, 2, 3, 3, 4, 4, 5, 5, 6, 7, 8];
const STANDARD_FIRST_BIN: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelSpan {
    pub start_bin: usize,
    pub bin_count: usize,
    pub center_hz: f64,
}

impl ChannelSpan {
    pub fn bins(&self) -> std::ops::Range<usize> {
        self.start_bin..self.start_bin + self.bin_count
    }
}

/// FFT-bin to channel allocation for the analysis filterbank.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelMap {
    pub entries: Vec<ChannelSpan>,
    pub fft_len: usize,
    pub hop: usize,
    pub sample_rate_hz: u32,
}

impl ChannelMap {
    /// Contiguous allocation of `counts` bins starting at `first_bin`.
    pub fn from_counts(counts: &[usize], first_bin: usize, fft_len: usize, hop: usize, sample_rate_hz: u32) -> Self {
        assert!(counts.iter().all(|&c| c > 0));
        let bin_hz = sample_rate_hz as f64 / fft_len as f64;
        let mut start = first_bin;
        let entries = counts
            .iter()
            .map(|&count| {
                let lo = (start as f64 - 0.5) * bin_hz;
                let hi = (start + count) as f64 * bin_hz - 0.5 * bin_hz;
                let span = ChannelSpan {
                    start_bin: start,
                    bin_count: count,
                    center_hz: (lo * hi).sqrt(),
                };
                start += count;
                span
            })
            .collect();
        let map = Self {
            entries,
            fft_len,
            hop,
            sample_rate_hz,
        };
        assert!(map.last_bin() < map.bins(), "channel map exceeds FFT bins");
        map
    }

    pub fn channels(&self) -> usize {
        self.entries.len()
    }

    pub fn bins(&self) -> usize {
        self.fft_len / 2 + 1
    }

    pub fn bin_hz(&self) -> f64 {
        self.sample_rate_hz as f64 / self.fft_len as f64
    }

    pub fn last_bin(&self) -> usize {
        let e = self.entries.last().expect("empty channel map");
        e.start_bin + e.bin_count - 1
    }

    /// Lower and upper edge of a channel's pass band in Hz.
    pub fn edges_hz(&self, ch: usize) -> (f64, f64) {
        let e = &self.entries[ch];
        let w = self.bin_hz();
        ((e.start_bin as f64 - 0.5) * w, (e.start_bin + e.bin_count) as f64 * w - 0.5 * w)
    }

    pub fn centers_hz(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.center_hz).collect()
    }

    pub fn frame_rate(&self) -> f64 {
        self.sample_rate_hz as f64 / self.hop as f64
    }
}

/// The fixed 22-channel map: 128-point FFT at 16 kHz, 32-sample hop, bins 2..=63.
pub fn build_channel_map() -> ChannelMap {
    ChannelMap::from_counts(&STANDARD_COUNTS, STANDARD_FIRST_BIN, 128, 32, SAMPLE_RATE)
}
