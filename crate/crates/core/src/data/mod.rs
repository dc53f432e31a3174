//! Desk-scale data: pseudo-speech synthesis, seeded noise sources, SNR mixing,
//! manifests and on-disk corpus layout.

mod corpus;
mod manifest;
mod noise;
mod speech;

pub use corpus::{build_corpus, synth_corpus, write_atomic, CorpusConfig};
pub use manifest::{Manifest, ManifestEntry, Split, Utterance, VisualSettings, MANIFEST_FORMAT};
pub use noise::{generate_noise, mix_at_snr, Mixture, NoiseType};
pub use speech::{pseudo_speech, SpeechConfig};
