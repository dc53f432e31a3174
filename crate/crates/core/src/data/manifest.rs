use std::collections::BTreeSet;
use std::fmt;
use std::path::{Component, Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::NoiseType;
use crate::avse::{read_visf, VisualFeatureTrack};
use crate::error::{Error, Result};
use crate::signal::{read_wav, Waveform};

pub const MANIFEST_FORMAT: &str = "avse-ci-manifest";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    pub split: Split,
    pub clean_path: String,
    pub noise_path: String,
    pub noisy_path: String,
    pub visual_path: String,
    pub noise_type: NoiseType,
    pub snr_db: f64,
    pub noise_offset: usize,
    pub noise_gain: f64,
    /// Peak-rescaling factor applied to the mixture; the clean signal as it
    /// appears inside `noisy` is `mix_scale · clean`.
    pub mix_scale: f64,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualSettings {
    pub dim: usize,
    pub fps: f64,
    pub noise_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    pub sample_rate_hz: u32,
    pub train_noises: Vec<NoiseType>,
    pub test_noises: Vec<NoiseType>,
    pub train_snrs_db: Vec<f64>,
    pub test_snrs_db: Vec<f64>,
    pub visual: VisualSettings,
    pub entries: Vec<ManifestEntry>,
    /// Directory the relative paths resolve against.
    #[serde(skip)]
    pub root: PathBuf,
}

/// One resolved manifest entry with its audio loaded.
#[derive(Debug, Clone)]
pub struct Utterance {
    pub entry: ManifestEntry,
    pub clean: Waveform,
    pub noisy: Waveform,
}

impl Utterance {
    /// Clean speech at the level it has inside the stored mixture.
    pub fn clean_in_mixture(&self) -> Waveform {
        Waveform::new(
            self.clean.samples.iter().map(|v| v * self.entry.mix_scale).collect(),
            self.clean.sample_rate_hz,
        )
    }
}

fn safe_relative(p: &str) -> bool {
    let path = Path::new(p);
    !p.is_empty() && path.components().all(|c| matches!(c, Component::Normal(_)))
}

pub(crate) fn check_protocol(train: &[NoiseType], test: &[NoiseType], train_snr: &[f64], test_snr: &[f64]) -> Result<()> {
    if let Some(n) = train.iter().find(|n| test.contains(n)) {
        return Err(Error::Protocol(format!("noise type `{n}` appears in both train and test")));
    }
    if let Some(s) = train_snr.iter().find(|s| test_snr.contains(s)) {
        return Err(Error::Protocol(format!("SNR {s} dB appears in both train and test")));
    }
    Ok(())
}

impl Manifest {
    /// Parse and validate manifest JSON. `root` is left empty.
    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let m: Manifest = serde_json::from_slice(bytes).map_err(|e| Error::Format(format!("manifest: {e}")))?;
        m.validate()?;
        Ok(m)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let mut m = Self::parse(&bytes)?;
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn to_json(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("manifest serializes");
        out.push(b'\n');
        out
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != MANIFEST_FORMAT || self.version != 1 {
            return Err(Error::Format(format!("manifest: unsupported format {} v{}", self.format, self.version)));
        }
        let mut ids = BTreeSet::new();
        for e in &self.entries {
            if !safe_relative(&e.id) || e.id.contains(['/', '\\']) {
                return Err(Error::Format(format!("manifest: invalid id `{}`", e.id)));
            }
            if !ids.insert(e.id.as_str()) {
                return Err(Error::Format(format!("manifest: duplicate id `{}`", e.id)));
            }
            for p in [&e.clean_path, &e.noise_path, &e.noisy_path, &e.visual_path] {
                if !safe_relative(p) {
                    return Err(Error::Format(format!("manifest: unsafe path `{p}` for `{}`", e.id)));
                }
            }
            if !(e.snr_db.is_finite() && e.mix_scale > 0.0 && e.mix_scale <= 1.0) {
                return Err(Error::Format(format!("manifest: invalid SNR or mix scale for `{}`", e.id)));
            }
        }
        check_protocol(&self.train_noises, &self.test_noises, &self.train_snrs_db, &self.test_snrs_db)?;
        let seen = |split_test: bool| -> (BTreeSet<NoiseType>, Vec<f64>) {
            let es = self.entries.iter().filter(|e| (e.split == Split::Test) == split_test);
            let types = es.clone().map(|e| e.noise_type).collect();
            let snrs = es.map(|e| e.snr_db).collect();
            (types, snrs)
        };
        let (train_types, train_snrs) = seen(false);
        let (test_types, test_snrs) = seen(true);
        let train_types: Vec<_> = train_types.into_iter().collect();
        let test_types: Vec<_> = test_types.into_iter().collect();
        check_protocol(&train_types, &test_types, &train_snrs, &test_snrs)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn entry(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    pub fn load_utterance(&self, e: &ManifestEntry) -> Result<Utterance> {
        let clean = read_wav(self.resolve(&e.clean_path))?.to_pipeline_rate();
        let noisy = read_wav(self.resolve(&e.noisy_path))?.to_pipeline_rate();
        if clean.len() != noisy.len() {
            return Err(Error::Data(format!(
                "`{}`: clean has {} samples, noisy {}",
                e.id,
                clean.len(),
                noisy.len()
            )));
        }
        Ok(Utterance {
            entry: e.clone(),
            clean,
            noisy,
        })
    }

    /// The visual track for an entry; a missing file is a data error naming the utterance.
    pub fn load_visual(&self, e: &ManifestEntry) -> Result<VisualFeatureTrack> {
        let path = self.resolve(&e.visual_path);
        if !path.is_file() {
            return Err(Error::MissingVisual(e.id.clone()));
        }
        let mut t = read_visf(&path).map_err(|err| Error::Data(format!("`{}`: {err}", e.id)))?;
        t.source_id = e.id.clone();
        Ok(t)
    }
}
