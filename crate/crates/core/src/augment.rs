//! Entity augmentation: synthesize labeled clusters by rewriting the wrong
//! cells of a labeled cluster into formats seen elsewhere in the data.

use std::collections::HashSet;
use std::fmt;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{FusionDataset, GroundTruth};
use crate::error::{FusionError, Result};

/// A format symbol: letter and digit classes, or a literal special character.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Symbol {
    /// One letter.
    S1,
    /// A run of two or more letters.
    S2,
    /// One digit.
    T1,
    /// A run of two or more digits.
    T2,
    Char(char),
}

impl fmt::Display for Symbol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Symbol::S1 => f.write_str("S1"),
            Symbol::S2 => f.write_str("S2"),
            Symbol::T1 => f.write_str("T1"),
            Symbol::T2 => f.write_str("T2"),
            Symbol::Char(c) => write!(f, "{c}"),
        }
    }
}

/// Format string g with τ⁻¹: the source substring behind each symbol.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FormatString {
    pub symbols: Vec<Symbol>,
    pub inverse: Vec<String>,
}

impl FormatString {
    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    /// Concatenated τ⁻¹ over `range`.
    pub fn invert(&self, range: std::ops::Range<usize>) -> String {
        self.inverse[range].concat()
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Class {
    Letter,
    Digit,
    Other(char),
}

fn class(c: char) -> Class {
    if c.is_ascii_alphabetic() {
        Class::Letter
    } else if c.is_ascii_digit() {
        Class::Digit
    } else {
        Class::Other(c)
    }
}

pub fn format_map(s: &str) -> FormatString {
    let mut symbols = Vec::new();
    let mut inverse: Vec<String> = Vec::new();
    let mut prev: Option<Class> = None;
    for c in s.chars() {
        let cl = class(c);
        let extends = matches!(
            (prev, cl),
            (Some(Class::Letter), Class::Letter) | (Some(Class::Digit), Class::Digit)
        );
        if extends {
            let last = symbols.len() - 1;
            symbols[last] = if cl == Class::Letter { Symbol::S2 } else { Symbol::T2 };
            inverse[last].push(c);
        } else {
            symbols.push(match cl {
                Class::Letter => Symbol::S1,
                Class::Digit => Symbol::T1,
                Class::Other(ch) => Symbol::Char(ch),
            });
            inverse.push(c.to_string());
        }
        prev = Some(cl);
    }
    FormatString { symbols, inverse }
}

/// Longest common contiguous symbol run of `g` and `g2`.
///
/// Returns `(start in g, start in g2, length)`; ties go to the leftmost start
/// in `g`, then the leftmost start in `g2`.
pub fn lcs_format(g: &FormatString, g2: &FormatString) -> (usize, usize, usize) {
    let (a, b) = (&g.symbols, &g2.symbols);
    let mut best = (0, 0, 0);
    // run[j] = length of the common suffix ending at a[i-1], b[j-1]
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            cur[j] = if a[i - 1] == b[j - 1] { prev[j - 1] + 1 } else { 0 };
            let len = cur[j];
            if len == 0 {
                continue;
            }
            let (si, sj) = (i - len, j - len);
            let better = len > best.2 || (len == best.2 && (si, sj) < (best.0, best.1));
            if better {
                best = (si, sj, len);
            }
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    best
}

/// The part of `source` whose format is the longest format shared with `target`.
pub fn augment_cell(source: &str, target: &str) -> String {
    let g = format_map(source);
    let (start, _, len) = lcs_format(&g, &format_map(target));
    g.invert(start..start + len)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    /// Synthetic clusters per original cluster.
    pub ratio: f64,
    pub seed: u64,
    pub max_retries: usize,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            ratio: 0.1,
            seed: 0,
            max_retries: 100,
        }
    }
}

/// Synthetic clusters in input-row form, with their labels.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Augmentation {
    pub rows: Vec<Vec<String>>,
    pub clusters: Vec<String>,
    pub sources: Option<Vec<String>>,
    /// (cluster id, attribute index, correct value).
    pub labels: Vec<(String, usize, String)>,
}

impl Augmentation {
    pub fn n_clusters(&self) -> usize {
        self.clusters.iter().collect::<HashSet<_>>().len()
    }

    /// Appends the synthetic clusters and their labels.
    pub fn apply(&self, ds: &FusionDataset, truth: &GroundTruth) -> Result<(FusionDataset, GroundTruth)> {
        let out = ds.with_appended(self.rows.clone(), self.clusters.clone(), self.sources.clone())?;
        let mut t = truth.clone();
        for (id, j, v) in &self.labels {
            let k = out
                .cluster_index(id)
                .ok_or_else(|| FusionError::UnknownCluster(id.clone()))?;
            t.insert(k, *j, v.clone());
        }
        Ok((out, t))
    }
}

/// Builds ⌈ratio · p⌉ synthetic clusters from fully labeled source clusters.
pub fn augment_entities(
    ds: &FusionDataset,
    truth: &GroundTruth,
    cfg: &AugmentConfig,
) -> Result<Augmentation> {
    if !(cfg.ratio >= 0.0 && cfg.ratio.is_finite()) {
        return Err(FusionError::InvalidConfig("augmentation ratio must be ≥ 0".into()));
    }
    let wanted = (cfg.ratio * ds.n_clusters() as f64).ceil() as usize;
    let mut out = Augmentation {
        sources: ds.sources().map(|_| Vec::new()),
        ..Default::default()
    };
    if wanted == 0 {
        return Ok(out);
    }
    let pool = truth.fully_labeled_clusters(ds.n_attributes());
    if pool.is_empty() {
        return Err(FusionError::Augmentation(
            "no fully labeled cluster to use as a source".into(),
        ));
    }
    let taken: HashSet<&str> = ds.cluster_ids().iter().map(String::as_str).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut serial = 0usize;
    let mut made = 0usize;
    let mut failures = 0usize;
    while made < wanted {
        let src = pool[rng.gen_range(0..pool.len())];
        let members = ds.members(src);
        let mut rows: Vec<Vec<String>> = Vec::with_capacity(members.len());
        for &i in members {
            let mut row = Vec::with_capacity(ds.n_attributes());
            for j in 0..ds.n_attributes() {
                let cell = ds.cell(i, j);
                if truth.get(src, j) == Some(cell) {
                    row.push(cell.to_string());
                } else {
                    let tk = rng.gen_range(0..ds.n_clusters());
                    let tm = ds.members(tk);
                    let ti = tm[rng.gen_range(0..tm.len())];
                    row.push(augment_cell(cell, ds.cell(ti, j)));
                }
            }
            rows.push(row);
        }
        let labels_ok = (0..ds.n_attributes()).all(|j| {
            let v = truth.get(src, j).expect("source is fully labeled");
            rows.iter().any(|r| r[j] == v)
        });
        if !labels_ok {
            failures += 1;
            if failures > cfg.max_retries {
                return Err(FusionError::Augmentation(format!(
                    "gave up after {failures} rejected synthetic clusters"
                )));
            }
            continue;
        }
        let id = loop {
            let id = format!("aug_{serial}");
            serial += 1;
            if !taken.contains(id.as_str()) {
                break id;
            }
        };
        for (row, &i) in rows.into_iter().zip(members) {
            out.rows.push(row);
            out.clusters.push(id.clone());
            if let (Some(s), Some(dst)) = (ds.sources(), out.sources.as_mut()) {
                dst.push(s.ids()[s.of_row(i)].clone());
            }
        }
        for j in 0..ds.n_attributes() {
            out.labels.push((id.clone(), j, truth.get(src, j).unwrap().to_string()));
        }
        made += 1;
    }
    Ok(out)
}
