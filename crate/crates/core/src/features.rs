//! Per-cell feature vectors: a static block computed once and a dynamic block
//! recomputed from the working label assignment at every stage.
//!
//! Static block: format bigrams (9) | value-embedding distance (1) |
//! neighborhood distance (1) | source one-hot (k_src).
//! Dynamic block: running cluster-value one-hot (ρ_j) | co-occurrence (c − 1) |
//! vote (1) | violation counts (|Σ_j|).

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::candidates::Candidates;
use crate::constraints::{violation_table, ConstraintIndex, PartnerValues, RowView};
use crate::dataset::{Assignment, FusionDataset};
use crate::embeddings::{distance, embed_record, embed_value, EmbeddingSpec};
use crate::error::{FusionError, Result};

pub const BIGRAMS: [&str; 9] = ["AA", "AS", "SA", "SS", "AN", "NA", "NN", "NS", "SN"];

pub fn tokenize_format(value: &str) -> String {
    value
        .chars()
        .map(|c| {
            if c.is_alphabetic() {
                'A'
            } else if c.is_ascii_digit() {
                'N'
            } else {
                'S'
            }
        })
        .collect()
}

fn token_slot(t: u8) -> usize {
    match t {
        b'A' => 0,
        b'S' => 1,
        _ => 2,
    }
}

// Slot of bigram (first, second) in BIGRAMS, addressed by [first][second] over A,S,N.
const BIGRAM_SLOT: [[usize; 3]; 3] = [[0, 1, 4], [2, 3, 8], [5, 7, 6]];

pub fn bigram_counts(tokens: &str) -> [f64; 9] {
    let mut out = [0.0; 9];
    for w in tokens.as_bytes().windows(2) {
        out[BIGRAM_SLOT[token_slot(w[0])][token_slot(w[1])]] += 1.0;
    }
    out
}

/// A representation model that can be switched off as a unit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureModel {
    Format,
    RunningValue,
    AttrEmbedding,
    CoOccurrence,
    Vote,
    Neighborhood,
    Constraints,
    Source,
}

impl FeatureModel {
    pub const ALL: [FeatureModel; 8] = [
        FeatureModel::Format,
        FeatureModel::RunningValue,
        FeatureModel::AttrEmbedding,
        FeatureModel::CoOccurrence,
        FeatureModel::Vote,
        FeatureModel::Neighborhood,
        FeatureModel::Constraints,
        FeatureModel::Source,
    ];

    pub fn name(self) -> &'static str {
        match self {
            FeatureModel::Format => "format",
            FeatureModel::RunningValue => "running-value",
            FeatureModel::AttrEmbedding => "attr-embedding",
            FeatureModel::CoOccurrence => "co-occurrence",
            FeatureModel::Vote => "vote",
            FeatureModel::Neighborhood => "neighborhood",
            FeatureModel::Constraints => "constraints",
            FeatureModel::Source => "source",
        }
    }

    /// Attribute-, record- or dataset-level context.
    pub fn context(self) -> &'static str {
        match self {
            FeatureModel::Format | FeatureModel::RunningValue | FeatureModel::AttrEmbedding => {
                "attribute"
            }
            FeatureModel::CoOccurrence | FeatureModel::Vote => "record",
            FeatureModel::Neighborhood | FeatureModel::Constraints | FeatureModel::Source => {
                "dataset"
            }
        }
    }
}

impl fmt::Display for FeatureModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FeatureModel {
    type Err = FusionError;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.trim().to_ascii_lowercase().replace('_', "-");
        let alias = match norm.as_str() {
            "cooccurrence" => "co-occurrence",
            "running" | "running-cluster-value" => "running-value",
            "embedding" | "attribute-embedding" => "attr-embedding",
            "dc" | "violations" => "constraints",
            other => other,
        };
        FeatureModel::ALL
            .into_iter()
            .find(|m| m.name() == alias)
            .ok_or_else(|| FusionError::InvalidConfig(format!("unknown feature model `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub format: bool,
    pub running_value: bool,
    pub attr_embedding: bool,
    pub cooccurrence: bool,
    pub vote: bool,
    pub neighborhood: bool,
    pub constraints: bool,
    pub source: bool,
    pub embedding: EmbeddingSpec,
    pub partner_values: PartnerValues,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            format: true,
            running_value: true,
            attr_embedding: true,
            cooccurrence: true,
            vote: true,
            neighborhood: true,
            constraints: true,
            source: true,
            embedding: EmbeddingSpec::default(),
            partner_values: PartnerValues::Working,
        }
    }
}

impl FeatureConfig {
    pub fn enabled(&self, model: FeatureModel) -> bool {
        match model {
            FeatureModel::Format => self.format,
            FeatureModel::RunningValue => self.running_value,
            FeatureModel::AttrEmbedding => self.attr_embedding,
            FeatureModel::CoOccurrence => self.cooccurrence,
            FeatureModel::Vote => self.vote,
            FeatureModel::Neighborhood => self.neighborhood,
            FeatureModel::Constraints => self.constraints,
            FeatureModel::Source => self.source,
        }
    }

    pub fn set(&mut self, model: FeatureModel, on: bool) {
        let flag = match model {
            FeatureModel::Format => &mut self.format,
            FeatureModel::RunningValue => &mut self.running_value,
            FeatureModel::AttrEmbedding => &mut self.attr_embedding,
            FeatureModel::CoOccurrence => &mut self.cooccurrence,
            FeatureModel::Vote => &mut self.vote,
            FeatureModel::Neighborhood => &mut self.neighborhood,
            FeatureModel::Constraints => &mut self.constraints,
            FeatureModel::Source => &mut self.source,
        };
        *flag = on;
    }

    pub fn without(mut self, models: &[FeatureModel]) -> Self {
        for &m in models {
            self.set(m, false);
        }
        self
    }

    fn uses_working_labels(&self) -> bool {
        self.cooccurrence || self.constraints
    }
}

/// Dimensions fixed at training time so that new data featurizes identically.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureLayout {
    pub config: FeatureConfig,
    pub schema: Vec<String>,
    /// ρ_j per attribute.
    pub rho: Vec<usize>,
    /// Σ_j: constraint indices per attribute.
    pub sigma: Vec<Vec<usize>>,
    /// Source ids in one-hot order; empty when the data has no sources.
    pub sources: Vec<String>,
}

impl FeatureLayout {
    pub fn for_dataset(ds: &FusionDataset, candidates: &Candidates, config: &FeatureConfig) -> Self {
        let c = ds.n_attributes();
        let index = ConstraintIndex::build(ds.constraints(), c);
        Self {
            config: config.clone(),
            schema: ds.schema().to_vec(),
            rho: (0..c).map(|j| candidates.label_dimension(j)).collect(),
            sigma: (0..c).map(|j| index.for_attribute(j).to_vec()).collect(),
            sources: ds.sources().map(|s| s.ids().to_vec()).unwrap_or_default(),
        }
    }

    fn k_src(&self) -> usize {
        if self.config.source {
            self.sources.len()
        } else {
            0
        }
    }

    /// ν.
    pub fn static_dim(&self) -> usize {
        let cfg = &self.config;
        9 * usize::from(cfg.format)
            + usize::from(cfg.attr_embedding)
            + usize::from(cfg.neighborhood)
            + self.k_src()
    }

    /// ψ for attribute `j`.
    pub fn dynamic_dim(&self, j: usize) -> usize {
        let cfg = &self.config;
        let c = self.schema.len();
        self.rho[j] * usize::from(cfg.running_value)
            + (c - 1) * usize::from(cfg.cooccurrence)
            + usize::from(cfg.vote)
            + self.sigma[j].len() * usize::from(cfg.constraints)
    }

    /// b = ν + ψ.
    pub fn dim(&self, j: usize) -> usize {
        self.static_dim() + self.dynamic_dim(j)
    }
}

/// Row-major `rows × cols` matrix of f64.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }
}

/// One cell's feature vector split into its two blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct CellFeatures {
    pub row: usize,
    pub attribute: usize,
    pub static_block: Vec<f64>,
    pub dynamic_block: Vec<f64>,
}

impl CellFeatures {
    pub fn concat(&self) -> Vec<f64> {
        let mut v = self.static_block.clone();
        v.extend_from_slice(&self.dynamic_block);
        v
    }
}

/// Feature extraction bound to one dataset and a fixed layout.
pub struct Featurizer<'a> {
    ds: &'a FusionDataset,
    candidates: &'a Candidates,
    layout: FeatureLayout,
    /// Static blocks per attribute, `n × ν`.
    statics: Vec<Matrix>,
    /// Source one-hot slot per row, if mapped.
    source_slot: Vec<Option<usize>>,
}

impl<'a> Featurizer<'a> {
    pub fn new(ds: &'a FusionDataset, candidates: &'a Candidates, config: &FeatureConfig) -> Result<Self> {
        let layout = FeatureLayout::for_dataset(ds, candidates, config);
        Self::with_layout(ds, candidates, layout)
    }

    pub fn with_layout(
        ds: &'a FusionDataset,
        candidates: &'a Candidates,
        layout: FeatureLayout,
    ) -> Result<Self> {
        layout.config.embedding.validate()?;
        if layout.schema != ds.schema() {
            return Err(FusionError::SchemaMismatch(format!(
                "model expects columns {:?}, data has {:?}",
                layout.schema,
                ds.schema()
            )));
        }
        let max_constraint = layout.sigma.iter().flatten().copied().max();
        if let Some(m) = max_constraint {
            if m >= ds.constraints().len() {
                return Err(FusionError::SchemaMismatch(format!(
                    "model was trained with at least {} constraints, data has {}",
                    m + 1,
                    ds.constraints().len()
                )));
            }
        }
        let source_slot = match ds.sources() {
            Some(s) => (0..ds.n_rows())
                .map(|i| {
                    let id = &s.ids()[s.of_row(i)];
                    layout.sources.iter().position(|x| x == id)
                })
                .collect(),
            None => vec![None; ds.n_rows()],
        };
        let mut f = Self {
            ds,
            candidates,
            layout,
            statics: Vec::new(),
            source_slot,
        };
        f.statics = (0..ds.n_attributes()).map(|j| f.static_block(j)).collect();
        Ok(f)
    }

    pub fn layout(&self) -> &FeatureLayout {
        &self.layout
    }

    pub fn dataset(&self) -> &FusionDataset {
        self.ds
    }

    pub fn candidates(&self) -> &Candidates {
        self.candidates
    }

    fn static_block(&self, j: usize) -> Matrix {
        let ds = self.ds;
        let cfg = &self.layout.config;
        let spec = &cfg.embedding;
        let n = ds.n_rows();
        let nu = self.layout.static_dim();
        let mut out = Matrix::zeros(n, nu);

        let value_emb: Vec<Vec<f64>> = if cfg.attr_embedding || cfg.neighborhood {
            ds.dictionary(j).iter().map(|v| embed_value(v, spec)).collect()
        } else {
            Vec::new()
        };
        let record_emb: Vec<Vec<f64>> = if cfg.neighborhood {
            ds.rows()
                .par_iter()
                .map(|r| embed_record(ds.schema(), r, spec))
                .collect()
        } else {
            Vec::new()
        };

        for k in 0..ds.n_clusters() {
            let members = ds.members(k);
            let size = members.len() as f64;
            let value_mean = if cfg.attr_embedding || cfg.neighborhood {
                mean(members.iter().map(|&i| value_emb[ds.code(i, j) as usize].as_slice()), spec.m, size)
            } else {
                Vec::new()
            };
            let record_mean = if cfg.neighborhood {
                mean(members.iter().map(|&i| record_emb[i].as_slice()), spec.q, size)
            } else {
                Vec::new()
            };
            for &i in members {
                let row = out.row_mut(i);
                let mut at = 0;
                if cfg.format {
                    row[..9].copy_from_slice(&bigram_counts(&tokenize_format(ds.cell(i, j))));
                    at += 9;
                }
                let own = if value_emb.is_empty() {
                    &[][..]
                } else {
                    value_emb[ds.code(i, j) as usize].as_slice()
                };
                if cfg.attr_embedding {
                    row[at] = distance(own, &value_mean).expect("equal widths");
                    at += 1;
                }
                if cfg.neighborhood {
                    // Distance of the concatenation [record, value] from its cluster mean.
                    let r = distance(&record_emb[i], &record_mean).expect("equal widths");
                    let v = distance(own, &value_mean).expect("equal widths");
                    row[at] = (r * r + v * v).sqrt();
                    at += 1;
                }
                if self.layout.k_src() > 0 {
                    if let Some(slot) = self.source_slot[i] {
                        row[at + slot] = 1.0;
                    }
                    at += self.layout.k_src();
                }
                debug_assert_eq!(at, nu);
            }
        }
        out
    }

    /// Violation counts `[row][constraint]` against the given working assignment.
    pub fn violations(&self, working: &Assignment) -> Option<Vec<Vec<usize>>> {
        let cfg = &self.layout.config;
        if !cfg.constraints || self.ds.constraints().is_empty() {
            return None;
        }
        let view = RowView::new(self.ds, self.candidates, working, cfg.partner_values);
        Some(violation_table(self.ds.constraints(), &view))
    }

    /// Feature matrix of attribute `j`, one row per record.
    ///
    /// `previous` holds the previous stage's predictions (absent at stage 0);
    /// `working` the labels used for co-occurrence and violations.
    pub fn featurize(
        &self,
        j: usize,
        previous: Option<&Assignment>,
        working: &Assignment,
        violations: Option<&[Vec<usize>]>,
    ) -> Matrix {
        let ds = self.ds;
        let cfg = &self.layout.config;
        let n = ds.n_rows();
        let nu = self.layout.static_dim();
        let b = self.layout.dim(j);
        let rho = self.layout.rho[j];
        let mut out = Matrix::zeros(n, b);
        let owned;
        let violations = match violations {
            Some(v) => Some(v),
            None if cfg.constraints && !self.layout.sigma[j].is_empty() => {
                owned = self.violations(working);
                owned.as_deref()
            }
            None => None,
        };

        for k in 0..ds.n_clusters() {
            let members = ds.members(k);
            let size = members.len() as f64;
            let set = self.candidates.get(k, j);
            let cooc = if cfg.cooccurrence {
                self.cooccurrence(k, j, working)
            } else {
                Vec::new()
            };
            for &i in members {
                let row = out.row_mut(i);
                row[..nu].copy_from_slice(self.statics[j].row(i));
                let mut at = nu;
                if cfg.running_value {
                    if let Some(prev) = previous {
                        let idx = prev.get(k, j);
                        if idx < rho {
                            row[at + idx] = 1.0;
                        }
                    }
                    at += rho;
                }
                let pos = self.candidates.position(i, j);
                if cfg.cooccurrence {
                    row[at..at + cooc[pos].len()].copy_from_slice(&cooc[pos]);
                    at += ds.n_attributes() - 1;
                }
                if cfg.vote {
                    row[at] = set.freqs[pos] as f64 / size;
                    at += 1;
                }
                if cfg.constraints {
                    for (slot, &dc) in self.layout.sigma[j].iter().enumerate() {
                        if let Some(v) = violations {
                            row[at + slot] = v[i][dc] as f64;
                        }
                    }
                    at += self.layout.sigma[j].len();
                }
                debug_assert_eq!(at, b);
            }
        }
        out
    }

    /// Co-occurrence ratios per candidate position of attribute `j` in cluster `k`,
    /// against each other attribute's working value.
    fn cooccurrence(&self, k: usize, j: usize, working: &Assignment) -> Vec<Vec<f64>> {
        let ds = self.ds;
        let set = self.candidates.get(k, j);
        let members = ds.members(k);
        let mut out = vec![Vec::with_capacity(ds.n_attributes() - 1); set.len()];
        for jp in (0..ds.n_attributes()).filter(|&x| x != j) {
            let target = self.candidates.get(k, jp).codes[working.get(k, jp)];
            let mut m = 0usize;
            let mut n = vec![0usize; set.len()];
            for &i in members {
                if ds.code(i, jp) == target {
                    m += 1;
                    n[self.candidates.position(i, j)] += 1;
                }
            }
            for (pos, slot) in out.iter_mut().enumerate() {
                slot.push(if m == 0 { 0.0 } else { n[pos] as f64 / m as f64 });
            }
        }
        out
    }

    /// Features of one cell, split into blocks.
    pub fn cell_features(
        &self,
        i: usize,
        j: usize,
        previous: Option<&Assignment>,
        working: &Assignment,
    ) -> CellFeatures {
        let m = self.featurize(j, previous, working, None);
        let nu = self.layout.static_dim();
        CellFeatures {
            row: i,
            attribute: j,
            static_block: m.row(i)[..nu].to_vec(),
            dynamic_block: m.row(i)[nu..].to_vec(),
        }
    }

    /// True when no enabled model reads the working labels.
    pub fn is_stage_independent(&self) -> bool {
        !self.layout.config.running_value && !self.layout.config.uses_working_labels()
    }
}

fn mean<'v>(vs: impl Iterator<Item = &'v [f64]>, dim: usize, count: f64) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    for v in vs {
        for (a, x) in acc.iter_mut().zip(v) {
            *a += x;
        }
    }
    acc.iter_mut().for_each(|a| *a /= count);
    acc
}
