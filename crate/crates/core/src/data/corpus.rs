use std::path::Path;

use serde::{Deserialize, Serialize};

use super::manifest::{check_protocol, Manifest, ManifestEntry, Split, VisualSettings, MANIFEST_FORMAT};
use super::noise::{generate_noise, mix_at_snr, NoiseType};
use super::speech::{pseudo_speech, SpeechConfig};
use crate::avse::visual::{encode_visf, synth_visual_features, DEFAULT_DV, DEFAULT_FPS, DEFAULT_NOISE_SIGMA};
use crate::error::{Error, Result};
use crate::signal::wav::encode_wav_f32;
use crate::signal::{Waveform, SAMPLE_RATE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusConfig {
    pub seed: u64,
    pub n_train: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub train_noises: Vec<NoiseType>,
    pub test_noises: Vec<NoiseType>,
    pub train_snrs_db: Vec<f64>,
    pub test_snrs_db: Vec<f64>,
    pub min_duration_s: f64,
    pub max_duration_s: f64,
    pub visual_dim: usize,
    pub visual_fps: f64,
    pub visual_noise_sigma: f64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_train: 60,
            n_val: 8,
            n_test: 40,
            train_noises: vec![NoiseType::White, NoiseType::Brown, NoiseType::Babble],
            test_noises: vec![NoiseType::Pink, NoiseType::Engine],
            train_snrs_db: vec![-12.0, -6.0, 0.0, 6.0, 12.0],
            test_snrs_db: vec![-1.0, -4.0, -7.0, -10.0],
            min_duration_s: 2.0,
            max_duration_s: 4.0,
            visual_dim: DEFAULT_DV,
            visual_fps: DEFAULT_FPS,
            visual_noise_sigma: DEFAULT_NOISE_SIGMA,
        }
    }
}

/// Deterministic clean utterances `(id, waveform)` for `prefix-000 ..`.
pub fn synth_corpus(n_utts: usize, seed_value: u64, prefix: &str, speech: &SpeechConfig) -> Result<Vec<(String, Waveform)>> {
    if n_utts == 0 {
        return Err(Error::Config("corpus needs at least one utterance".into()));
    }
    Ok((0..n_utts)
        .map(|i| {
            let id = format!("{prefix}-{i:03}");
            let w = pseudo_speech(seed_value, &id, speech);
            (id, w)
        })
        .collect())
}

/// Write `bytes` to a temporary sibling and rename it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
    let tmp = path.with_file_name(format!(".{name}.tmp"));
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

/// Synthesize the corpus under `root` (`clean/`, `noise/`, `noisy/`, `visual/`,
/// `manifest.json`) and return the manifest.
pub fn build_corpus(root: &Path, cfg: &CorpusConfig) -> Result<Manifest> {
    check_protocol(&cfg.train_noises, &cfg.test_noises, &cfg.train_snrs_db, &cfg.test_snrs_db)?;
    if cfg.train_noises.is_empty() || cfg.test_noises.is_empty() || cfg.train_snrs_db.is_empty() || cfg.test_snrs_db.is_empty() {
        return Err(Error::Config("noise and SNR lists must be nonempty".into()));
    }
    let speech = SpeechConfig {
        min_duration_s: cfg.min_duration_s,
        max_duration_s: cfg.max_duration_s,
    };
    let mut entries = Vec::new();
    for (split, n, noises, snrs) in [
        (Split::Train, cfg.n_train, &cfg.train_noises, &cfg.train_snrs_db),
        (Split::Val, cfg.n_val, &cfg.train_noises, &cfg.train_snrs_db),
        (Split::Test, cfg.n_test, &cfg.test_noises, &cfg.test_snrs_db),
    ] {
        if n == 0 {
            continue;
        }
        for (i, (id, clean)) in synth_corpus(n, cfg.seed, &split.to_string(), &speech)?.into_iter().enumerate() {
            // every (noise, SNR) pair is visited before any repeats
            let noise_type = noises[i % noises.len()];
            let snr_db = snrs[(i / noises.len()) % snrs.len()];
            let clean = clean.round_to_f32();
            let noise = generate_noise(noise_type, clean.len() + SAMPLE_RATE as usize, cfg.seed, &id).round_to_f32();
            let mix = mix_at_snr(&clean, &noise, snr_db, cfg.seed, &id)?;
            let noisy = mix.noisy.round_to_f32();
            let visual = synth_visual_features(&clean, cfg.visual_dim, cfg.visual_fps, cfg.visual_noise_sigma, cfg.seed, &id)?;
            let entry = ManifestEntry {
                id: id.clone(),
                split,
                clean_path: format!("clean/{id}.wav"),
                noise_path: format!("noise/{id}.wav"),
                noisy_path: format!("noisy/{id}.wav"),
                visual_path: format!("visual/{id}.visf"),
                noise_type,
                snr_db,
                noise_offset: mix.offset,
                noise_gain: mix.gain,
                mix_scale: mix.scale,
                duration_s: clean.duration_s(),
            };
            write_atomic(&root.join(&entry.clean_path), &encode_wav_f32(&clean))?;
            write_atomic(&root.join(&entry.noise_path), &encode_wav_f32(&noise))?;
            write_atomic(&root.join(&entry.noisy_path), &encode_wav_f32(&noisy))?;
            write_atomic(&root.join(&entry.visual_path), &encode_visf(&visual))?;
            entries.push(entry);
        }
    }
    let mut manifest = Manifest {
        format: MANIFEST_FORMAT.into(),
        version: 1,
        seed: cfg.seed,
        sample_rate_hz: SAMPLE_RATE,
        train_noises: cfg.train_noises.clone(),
        test_noises: cfg.test_noises.clone(),
        train_snrs_db: cfg.train_snrs_db.clone(),
        test_snrs_db: cfg.test_snrs_db.clone(),
        visual: VisualSettings {
            dim: cfg.visual_dim,
            fps: cfg.visual_fps,
            noise_sigma: cfg.visual_noise_sigma,
        },
        entries,
        root: root.to_path_buf(),
    };
    manifest.validate()?;
    write_atomic(&root.join("manifest.json"), &manifest.to_json())?;
    manifest.root = root.to_path_buf();
    Ok(manifest)
}
