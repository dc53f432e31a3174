use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use avse_ci::Error;
use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

/// Hash of every pipeline source file at build time.
pub const CODE_HASH: &str = env!("AVSE_CI_CODE_HASH");

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        Error::Numeric(_) => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

/// SHA-256 of a file, or of `manifest.json` for corpus and checkpoint directories.
pub fn hash_input(path: &Path) -> String {
    let target = if path.is_dir() { path.join("manifest.json") } else { path.to_path_buf() };
    match std::fs::read(&target) {
        Ok(bytes) => hex::encode(Sha256::digest(bytes)),
        Err(_) => "unreadable".into(),
    }
}

/// What `run.json` records about one invocation.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub command: String,
    pub argv: Vec<String>,
    pub seed: u64,
    pub config: Value,
    pub version: String,
    pub code_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: Vec<String>,
    pub status: String,
    pub exit_code: i32,
    pub error: Option<String>,
}

impl RunRecord {
    pub fn new(command: &str, argv: Vec<String>, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            argv,
            seed,
            config: Value::Null,
            version: env!("CARGO_PKG_VERSION").to_string(),
            code_hash: CODE_HASH.to_string(),
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
            status: "running".into(),
            exit_code: EXIT_OK,
            error: None,
        }
    }

    pub fn input(&mut self, path: &Path) {
        self.inputs.insert(path.display().to_string(), hash_input(path));
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.display().to_string());
    }

    pub fn finish(&mut self, result: &avse_ci::Result<()>) {
        match result {
            Ok(()) => {
                self.status = "ok".into();
                self.exit_code = EXIT_OK;
            }
            Err(e) => {
                self.status = "error".into();
                self.exit_code = exit_code(e);
                self.error = Some(e.to_string());
            }
        }
    }

    pub fn write(&self, dir: &Path) -> avse_ci::Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let p = dir.join("run.json");
        let mut bytes = serde_json::to_vec_pretty(self)?;
        bytes.push(b'\n');
        std::fs::write(&p, bytes).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    }
}
