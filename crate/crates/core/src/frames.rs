/// Row-per-frame matrix: `data[t * width + c]`.
///
/// Envelopes, FFT magnitudes and electrodograms are all stored frame-major so a
/// frame is one contiguous row. The "channels × frames" view used in plots is the
/// transpose.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameMatrix {
    pub frames: usize,
    pub width: usize,
    pub data: Vec<f64>,
}

impl FrameMatrix {
    pub fn zeros(frames: usize, width: usize) -> Self {
        Self {
            frames,
            width,
            data: vec![0.0; frames * width],
        }
    }

    pub fn from_vec(frames: usize, width: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), frames * width, "frame matrix size");
        Self { frames, width, data }
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.width..(t + 1) * self.width]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.width..(t + 1) * self.width]
    }

    pub fn get(&self, t: usize, c: usize) -> f64 {
        self.data[t * self.width + c]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.data.chunks_exact(self.width.max(1)).take(self.frames)
    }

    /// Frames `start..start + count`.
    pub fn slice_frames(&self, start: usize, count: usize) -> Self {
        Self::from_vec(
            count,
            self.width,
            self.data[start * self.width..(start + count) * self.width].to_vec(),
        )
    }

    pub fn max(&self) -> f64 {
        self.data.iter().cloned().fold(0.0, f64::max)
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            0.0
        } else {
            self.data.iter().sum::<f64>() / self.data.len() as f64
        }
    }
}
