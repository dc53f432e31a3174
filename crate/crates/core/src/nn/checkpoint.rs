//! Checkpoints: a JSON manifest plus one raw little-endian f32 blob per tensor.
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/000_layer1.weight.f32
//! <dir>/001_layer1.bias.f32
//! ...
//! ```
//!
//! Values are rounded to f32 when a checkpoint is created, so an in-memory
//! checkpoint and one reloaded from disk hold identical parameters.

use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Adam, AdamConfig, ParamStore, Tensor};
use crate::error::{Error, Result};
use crate::seed::sha256_hex;

pub const MANIFEST_FILE: &str = "manifest.json";
const FORMAT_TAG: &str = "avse-ci-checkpoint";
const MAX_TENSOR_VALUES: usize = 1 << 28;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerEntry {
    pub step: u64,
    pub config: AdamConfig,
    pub first_moments: Vec<TensorEntry>,
    pub second_moments: Vec<TensorEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub version: u32,
    pub kind: String,
    pub seed: u64,
    pub corpus_peak: f64,
    pub config: Value,
    pub config_hash: String,
    pub tensors: Vec<TensorEntry>,
    #[serde(default)]
    pub optimizer: Option<OptimizerEntry>,
    #[serde(default)]
    pub history: Value,
}

fn safe_file_name(name: &str) -> bool {
    !name.is_empty()
        && name != "."
        && name != ".."
        && name.chars().all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'))
}

fn check_entry(e: &TensorEntry) -> Result<()> {
    if !safe_file_name(&e.file) || e.file == MANIFEST_FILE {
        return Err(Error::Format(format!("checkpoint: unsafe blob file name `{}`", e.file)));
    }
    let n = e
        .shape
        .iter()
        .try_fold(1usize, |acc, d| acc.checked_mul(*d))
        .filter(|n| *n <= MAX_TENSOR_VALUES);
    if n.is_none() {
        return Err(Error::Format(format!("checkpoint: tensor `{}` shape {:?} too large", e.name, e.shape)));
    }
    Ok(())
}

/// Parse and validate a manifest without touching any blob.
pub fn parse_manifest(bytes: &[u8]) -> Result<CheckpointManifest> {
    let m: CheckpointManifest =
        serde_json::from_slice(bytes).map_err(|e| Error::Format(format!("checkpoint manifest: {e}")))?;
    if m.format != FORMAT_TAG || m.version != 1 {
        return Err(Error::Format(format!("checkpoint: unsupported format {} v{}", m.format, m.version)));
    }
    if !m.corpus_peak.is_finite() || m.corpus_peak <= 0.0 {
        return Err(Error::Format("checkpoint: corpus_peak must be positive".into()));
    }
    let mut all: Vec<&TensorEntry> = m.tensors.iter().collect();
    if let Some(o) = &m.optimizer {
        if o.first_moments.len() != m.tensors.len() || o.second_moments.len() != m.tensors.len() {
            return Err(Error::Format("checkpoint: optimizer moments do not match tensors".into()));
        }
        all.extend(o.first_moments.iter().chain(&o.second_moments));
    }
    let mut files = std::collections::BTreeSet::new();
    for e in &all {
        check_entry(e)?;
        if !files.insert(e.file.as_str()) {
            return Err(Error::Format(format!("checkpoint: blob `{}` listed twice", e.file)));
        }
    }
    let mut names = std::collections::BTreeSet::new();
    for e in &m.tensors {
        if !names.insert(e.name.as_str()) {
            return Err(Error::Format(format!("checkpoint: tensor `{}` listed twice", e.name)));
        }
    }
    Ok(m)
}

/// Decode one blob against its manifest entry.
pub fn decode_blob(entry: &TensorEntry, bytes: &[u8]) -> Result<Tensor> {
    let n: usize = entry.shape.iter().product();
    if bytes.len() != n * 4 {
        return Err(Error::Format(format!(
            "checkpoint: blob `{}` has {} bytes, expected {}",
            entry.file,
            bytes.len(),
            n * 4
        )));
    }
    if sha256_hex(bytes) != entry.sha256 {
        return Err(Error::Format(format!("checkpoint: blob `{}` hash mismatch", entry.file)));
    }
    let data: Vec<f64> = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::Format(format!("checkpoint: blob `{}` holds non-finite values", entry.file)));
    }
    Tensor::new(&entry.shape, data)
}

fn encode_blob(t: &Tensor) -> Vec<u8> {
    t.data.iter().flat_map(|v| (*v as f32).to_le_bytes()).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub seed: u64,
    pub corpus_peak: f64,
    pub config: Value,
    pub params: ParamStore,
    pub optimizer: Option<Adam>,
    pub history: Value,
}

fn blob_name(prefix: &str, i: usize, name: &str) -> String {
    let clean: String = name
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '_' { c } else { '_' })
        .collect();
    format!("{prefix}{i:03}_{clean}.f32")
}

impl Checkpoint {
    pub fn new(kind: &str, seed: u64, corpus_peak: f64, config: Value, mut params: ParamStore, optimizer: Option<Adam>, history: Value) -> Self {
        params.round_to_f32();
        let optimizer = optimizer.map(|mut a| {
            for t in a.m.iter_mut().chain(a.v.iter_mut()) {
                t.data.iter_mut().for_each(|v| *v = *v as f32 as f64);
            }
            a
        });
        Self {
            kind: kind.to_string(),
            seed,
            corpus_peak,
            config,
            params,
            optimizer,
            history,
        }
    }

    /// SHA-256 of the canonical (sorted-key) JSON of the config.
    pub fn config_hash(&self) -> String {
        sha256_hex(serde_json::to_string(&self.config).expect("config serializes").as_bytes())
    }

    fn blobs(&self) -> (CheckpointManifest, Vec<(String, Vec<u8>)>) {
        let mut files = Vec::new();
        let mut entry = |prefix: &str, i: usize, name: &str, t: &Tensor| {
            let bytes = encode_blob(t);
            let e = TensorEntry {
                name: name.to_string(),
                shape: t.shape.clone(),
                file: blob_name(prefix, i, name),
                sha256: sha256_hex(&bytes),
            };
            files.push((e.file.clone(), bytes));
            e
        };
        let tensors: Vec<TensorEntry> = self.params.iter().enumerate().map(|(i, (n, t))| entry("", i, n, t)).collect();
        let optimizer = self.optimizer.as_ref().map(|a| OptimizerEntry {
            step: a.step,
            config: a.config,
            first_moments: a.m.iter().enumerate().map(|(i, t)| entry("adam_m_", i, self.params.name(i), t)).collect(),
            second_moments: a.v.iter().enumerate().map(|(i, t)| entry("adam_v_", i, self.params.name(i), t)).collect(),
        });
        let manifest = CheckpointManifest {
            format: FORMAT_TAG.into(),
            version: 1,
            kind: self.kind.clone(),
            seed: self.seed,
            corpus_peak: self.corpus_peak,
            config: self.config.clone(),
            config_hash: self.config_hash(),
            tensors,
            optimizer,
            history: self.history.clone(),
        };
        (manifest, files)
    }

    pub fn manifest_bytes(&self) -> Vec<u8> {
        serde_json::to_vec_pretty(&self.blobs().0).expect("manifest serializes")
    }

    /// Content hash: covers config, history and every blob (through their hashes).
    pub fn content_hash(&self) -> String {
        sha256_hex(&self.manifest_bytes())
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let (manifest, files) = self.blobs();
        for (name, bytes) in files {
            let p = dir.join(name);
            std::fs::write(&p, bytes).map_err(|e| Error::io(p, e))?;
        }
        let p = dir.join(MANIFEST_FILE);
        let tmp = dir.join(".manifest.json.tmp");
        std::fs::write(&tmp, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&tmp, e))?;
        std::fs::rename(&tmp, &p).map_err(|e| Error::io(p, e))
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let mp = dir.join(MANIFEST_FILE);
        let bytes = std::fs::read(&mp).map_err(|e| Error::io(&mp, e))?;
        let m = parse_manifest(&bytes)?;
        let read = |e: &TensorEntry| -> Result<Tensor> {
            let p = dir.join(&e.file);
            let b = std::fs::read(&p).map_err(|err| Error::io(p, err))?;
            decode_blob(e, &b)
        };
        let mut params = ParamStore::new();
        for e in &m.tensors {
            params.add(e.name.clone(), read(e)?);
        }
        let optimizer = match &m.optimizer {
            None => None,
            Some(o) => Some(Adam {
                config: o.config,
                step: o.step,
                m: o.first_moments.iter().map(read).collect::<Result<_>>()?,
                v: o.second_moments.iter().map(read).collect::<Result<_>>()?,
            }),
        };
        let ck = Self {
            kind: m.kind,
            seed: m.seed,
            corpus_peak: m.corpus_peak,
            config: m.config,
            params,
            optimizer,
            history: m.history,
        };
        if ck.config_hash() != m.config_hash {
            return Err(Error::Format("checkpoint: config hash mismatch".into()));
        }
        Ok(ck)
    }
}
