//! Run configuration: a TOML file with one section per module, then flag overrides.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use recfuse::augment::AugmentConfig;
use recfuse::eval::{BenchmarkSpec, ExperimentConfig};
use recfuse::{FeatureConfig, TrainConfig};
use serde::{Deserialize, Serialize};

pub const SEED_ENV: &str = "RECFUSE_SEED";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Global seed; training, augmentation, benchmark and experiment seeds derive from it.
    pub seed: u64,
    pub input: InputConfig,
    pub output: OutputConfig,
    pub features: FeatureConfig,
    pub train: TrainConfig,
    pub augment: AugmentConfig,
    pub experiment: ExperimentSection,
    pub benchmark: BenchmarkSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub data: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub constraints: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub delimiter: String,
}

impl Default for InputConfig {
    fn default() -> Self {
        Self {
            data: None,
            labels: None,
            constraints: None,
            model: None,
            delimiter: ",".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: Option<PathBuf>,
    /// Add an `<attribute>__confidence` column to fused output.
    pub confidence: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            confidence: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub train_fraction: f64,
    pub validation_fraction: f64,
    /// Number of seeds; they run as `seed, seed + 1, …`.
    pub seeds: u64,
    pub contested_only: bool,
    pub ablate_models: bool,
    pub ablate_contexts: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        let d = ExperimentConfig::default();
        Self {
            train_fraction: d.train_fraction,
            validation_fraction: d.validation_fraction,
            seeds: d.seeds.len() as u64,
            contested_only: d.contested_only,
            ablate_models: d.ablate_models,
            ablate_contexts: d.ablate_contexts,
        }
    }
}

impl RunConfig {
    /// Reads `path` (if any), applies `key=value` overrides, and checks the result.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let mut table = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                text.parse::<toml::Table>()
                    .with_context(|| format!("parsing config {}", p.display()))?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .context("invalid configuration")?;
        cfg.delimiter()?;
        Ok(cfg)
    }

    pub fn delimiter(&self) -> Result<u8> {
        match self.input.delimiter.as_bytes() {
            [b] => Ok(*b),
            _ => bail!("delimiter must be a single byte, got {:?}", self.input.delimiter),
        }
    }

    /// Pushes the global seed into every seeded section.
    pub fn propagate_seed(&mut self) {
        self.train.seed = self.seed;
        self.augment.seed = self.seed;
    }

    pub fn experiment(&self) -> ExperimentConfig {
        let e = &self.experiment;
        ExperimentConfig {
            train_fraction: e.train_fraction,
            validation_fraction: e.validation_fraction,
            seeds: (0..e.seeds).map(|i| self.seed.wrapping_add(i)).collect(),
            contested_only: e.contested_only,
            ablate_models: e.ablate_models,
            ablate_contexts: e.ablate_contexts,
            train: self.train.clone(),
            features: self.features.clone(),
            augment: self.augment,
        }
    }
}

/// Seed precedence: flag, then `RECFUSE_SEED`, then the config file.
pub fn resolve_seed(file: u64, env: Option<&str>, flag: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match env {
        Some(v) if !v.trim().is_empty() => v
            .trim()
            .parse()
            .map_err(|_| anyhow!("{SEED_ENV}={v:?} is not an unsigned integer")),
        _ => Ok(file),
    }
}

/// `section.key=value`; the value is read as TOML, falling back to a bare string.
pub fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| anyhow!("override `{spec}` is not of the form key=value"))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|p| p.is_empty()) {
        bail!("override key `{key}` has an empty component");
    }
    let value = parse_value(raw.trim());
    let (last, parents) = path.split_last().expect("split yields at least one part");
    let mut cur = table;
    for p in parents {
        let entry = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| anyhow!("override `{key}`: `{p}` is not a section"))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
