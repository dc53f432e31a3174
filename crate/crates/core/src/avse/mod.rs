//! Audio-visual speech enhancement: a spectral-masking encoder/decoder with an
//! attention fusion block at the bottleneck, and visual feature handling.

pub mod enhancer;
pub mod visual;

pub use enhancer::{
    apply_mask, bottleneck_visual, compress_magnitudes, enhance, fusion_block, positional_encoding, Enhanced,
    EnhancerNetwork, FusionConfig, FusionMode,
};
pub use visual::{align_visual, read_visf, synth_visual_features, write_visf, VisualFeatureTrack};
