use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use recfuse::learner::MODEL_FORMAT_VERSION;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    model_format_version: u32,
    command: &'a str,
    seed: u64,
    config_hash: String,
    config: &'a RunConfig,
    outputs: Vec<OutputFile>,
}

#[derive(Serialize)]
struct OutputFile {
    file: String,
    sha256: String,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

/// SHA-256 of the resolved configuration's canonical JSON form.
pub fn config_hash(cfg: &RunConfig) -> Result<String> {
    Ok(sha256(serde_json::to_string(cfg)?.as_bytes()))
}

/// Writes `manifest.json` into `dir`, hashing each output (paths recorded relative to `dir`).
pub fn write(dir: &Path, command: &str, cfg: &RunConfig, outputs: &[PathBuf]) -> Result<PathBuf> {
    let mut files = Vec::with_capacity(outputs.len());
    for p in outputs {
        let bytes = std::fs::read(p).with_context(|| format!("hashing {}", p.display()))?;
        let rel = p.strip_prefix(dir).unwrap_or(p);
        files.push(OutputFile {
            file: rel.to_string_lossy().replace('\\', "/"),
            sha256: sha256(&bytes),
        });
    }
    let m = Manifest {
        tool: "recfuse",
        version: env!("CARGO_PKG_VERSION"),
        model_format_version: MODEL_FORMAT_VERSION,
        command,
        seed: cfg.seed,
        config_hash: config_hash(cfg)?,
        config: cfg,
        outputs: files,
    };
    let path = dir.join(MANIFEST_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&m)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_digest() {
        assert_eq!(
            sha256(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn hash_tracks_config() {
        let a = RunConfig::default();
        let mut b = a.clone();
        assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        b.train.stages = 3;
        assert_ne!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
    }
}
