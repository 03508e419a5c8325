use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::stagewise::{run_stages, StageOutcome};
use super::{SoftmaxStage, TrainConfig};
use crate::candidates::ORDERING_KEY;
use crate::constraints::{parse_constraints, DenialConstraint};
use crate::dataset::GroundTruth;
use crate::error::{FusionError, Result};
use crate::features::{FeatureLayout, Featurizer};

pub const MODEL_FORMAT_VERSION: u32 = 1;

/// Header file of a model directory; each attribute's stages live in their own file.
pub const MODEL_HEADER_FILE: &str = "model.json";

/// File name holding attribute `j` inside a model directory.
pub fn attribute_file(j: usize) -> String {
    format!("attr-{j:03}.json")
}

#[derive(Serialize, Deserialize)]
struct ModelHeader {
    format_version: u32,
    ordering_key: String,
    layout: FeatureLayout,
    constraints: Vec<String>,
    train: TrainConfig,
    attribute_files: Vec<String>,
}

/// Frozen stages h^[0..=T] for one attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeModel {
    pub attribute: usize,
    pub name: String,
    pub b: usize,
    pub rho: usize,
    pub stages: Vec<SoftmaxStage>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionModel {
    pub format_version: u32,
    pub ordering_key: String,
    pub layout: FeatureLayout,
    pub constraints: Vec<String>,
    pub train: TrainConfig,
    pub attributes: Vec<AttributeModel>,
}

impl FusionModel {
    pub fn n_stages(&self) -> usize {
        self.attributes.first().map_or(0, |a| a.stages.len())
    }

    pub fn attribute(&self, name: &str) -> Option<&AttributeModel> {
        self.attributes.iter().find(|a| a.name == name)
    }

    pub fn parse_constraints(&self, schema: &[String]) -> Result<Vec<DenialConstraint>> {
        parse_constraints(&self.constraints.join("\n"), schema)
    }

    fn validate(&self) -> Result<()> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(FusionError::ModelFormat(format!(
                "unsupported model format version {} (expected {MODEL_FORMAT_VERSION})",
                self.format_version
            )));
        }
        if self.ordering_key != ORDERING_KEY {
            return Err(FusionError::ModelFormat(format!(
                "model uses candidate ordering `{}`, this build uses `{ORDERING_KEY}`",
                self.ordering_key
            )));
        }
        if self.attributes.len() != self.layout.schema.len() {
            return Err(FusionError::ModelFormat("attribute count differs from schema".into()));
        }
        let t = self.n_stages();
        for (j, a) in self.attributes.iter().enumerate() {
            if a.stages.len() != t || t == 0 {
                return Err(FusionError::ModelFormat(format!(
                    "attribute `{}` has {} stages, expected {t}",
                    a.name,
                    a.stages.len()
                )));
            }
            let b = self.layout.dim(j);
            let rho = self.layout.rho[j];
            for s in &a.stages {
                if s.b != b
                    || s.rho != rho
                    || s.weights.len() != b * rho
                    || s.bias.len() != rho
                    || !s.is_finite()
                {
                    return Err(FusionError::ModelFormat(format!(
                        "attribute `{}`: stage shape does not match b = {b}, ρ = {rho}",
                        a.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| FusionError::ModelFormat(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self =
            serde_json::from_str(text).map_err(|e| FusionError::ModelFormat(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| FusionError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| FusionError::io(path, e))?;
        Self::from_json(&text)
    }

    /// Writes `model.json` plus one file per attribute into `dir`; returns the files written.
    pub fn save_dir(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| FusionError::io(dir, e))?;
        let files: Vec<String> = (0..self.attributes.len()).map(attribute_file).collect();
        let header = ModelHeader {
            format_version: self.format_version,
            ordering_key: self.ordering_key.clone(),
            layout: self.layout.clone(),
            constraints: self.constraints.clone(),
            train: self.train.clone(),
            attribute_files: files.clone(),
        };
        let mut written = Vec::with_capacity(files.len() + 1);
        let path = dir.join(MODEL_HEADER_FILE);
        write_json(&path, &header)?;
        written.push(path);
        for (a, f) in self.attributes.iter().zip(&files) {
            let path = dir.join(f);
            write_json(&path, a)?;
            written.push(path);
        }
        Ok(written)
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let header: ModelHeader = read_json(&dir.join(MODEL_HEADER_FILE))?;
        let mut attributes = Vec::with_capacity(header.attribute_files.len());
        for f in &header.attribute_files {
            if f.contains(['/', '\\']) || f.starts_with('.') {
                return Err(FusionError::ModelFormat(format!("attribute file `{f}` escapes the model directory")));
            }
            attributes.push(read_json::<AttributeModel>(&dir.join(f))?);
        }
        let m = Self {
            format_version: header.format_version,
            ordering_key: header.ordering_key,
            layout: header.layout,
            constraints: header.constraints,
            train: header.train,
            attributes,
        };
        m.validate()?;
        for (j, a) in m.attributes.iter().enumerate() {
            if a.attribute != j || a.name != m.layout.schema[j] {
                return Err(FusionError::ModelFormat(format!(
                    "attribute file {j} holds `{}`, expected `{}`",
                    a.name, m.layout.schema[j]
                )));
            }
        }
        Ok(m)
    }

    /// Re-runs every stage on the featurizer's dataset, returning each stage's outcome.
    pub fn replay(&self, f: &Featurizer<'_>, truth: &GroundTruth) -> Result<Vec<StageOutcome>> {
        let all: Vec<usize> = (0..self.attributes.len()).collect();
        let (_, outcomes) = run_stages(
            f,
            truth,
            self.n_stages(),
            &all,
            false,
            0.0,
            |t, j, _, _| Ok(self.attributes[j].stages[t].clone()),
            None,
        )?;
        Ok(outcomes)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| FusionError::ModelFormat(e.to_string()))?;
    std::fs::write(path, text + "\n").map_err(|e| FusionError::io(path, e))
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| FusionError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| FusionError::ModelFormat(format!("{}: {e}", path.display())))
}


