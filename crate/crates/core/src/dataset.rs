//! Relational data model: rows, schema, clustering, optional sources and ground truth.

use std::collections::{BTreeMap, HashMap};

use crate::constraints::DenialConstraint;
use crate::error::{FusionError, Result};

/// Row-level source assignment (`__source_id` column).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Sources {
    of_row: Vec<usize>,
    ids: Vec<String>,
}

impl Sources {
    pub fn of_row(&self, row: usize) -> usize {
        self.of_row[row]
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// A clustered relational table.
///
/// Cells are stored trimmed. Each column is also dictionary-encoded so that
/// equality tests during featurization compare integers rather than strings.
/// Cluster indices are dense and follow order of first appearance.
#[derive(Debug, Clone)]
pub struct FusionDataset {
    schema: Vec<String>,
    rows: Vec<Vec<String>>,
    cluster_of: Vec<usize>,
    cluster_ids: Vec<String>,
    members: Vec<Vec<usize>>,
    sources: Option<Sources>,
    constraints: Vec<DenialConstraint>,
    codes: Vec<Vec<u32>>,
    dictionary: Vec<Vec<String>>,
}

impl FusionDataset {
    pub fn new(
        schema: Vec<String>,
        rows: Vec<Vec<String>>,
        clusters: Vec<String>,
        sources: Option<Vec<String>>,
    ) -> Result<Self> {
        if schema.is_empty() {
            return Err(FusionError::Empty("schema has no attributes"));
        }
        if rows.is_empty() {
            return Err(FusionError::Empty("dataset has no rows"));
        }
        if clusters.len() != rows.len() {
            return Err(FusionError::DimensionMismatch {
                expected: rows.len(),
                found: clusters.len(),
            });
        }
        if let Some(s) = &sources {
            if s.len() != rows.len() {
                return Err(FusionError::DimensionMismatch {
                    expected: rows.len(),
                    found: s.len(),
                });
            }
        }
        let c = schema.len();
        let mut clean = Vec::with_capacity(rows.len());
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != c {
                return Err(FusionError::CellCount {
                    row: i,
                    expected: c,
                    found: row.len(),
                });
            }
            clean.push(row.into_iter().map(|s| trim_owned(s)).collect::<Vec<_>>());
        }

        let (cluster_of, cluster_ids) = intern(clusters.into_iter().map(trim_owned));
        let mut members = vec![Vec::new(); cluster_ids.len()];
        for (i, &k) in cluster_of.iter().enumerate() {
            members[k].push(i);
        }
        let sources = sources.map(|s| {
            let (of_row, ids) = intern(s.into_iter().map(trim_owned));
            Sources { of_row, ids }
        });

        let mut codes = Vec::with_capacity(c);
        let mut dictionary = Vec::with_capacity(c);
        for j in 0..c {
            let (col, dict) = intern(clean.iter().map(|r| r[j].clone()));
            codes.push(col.into_iter().map(|x| x as u32).collect());
            dictionary.push(dict);
        }

        Ok(Self {
            schema: schema.into_iter().map(trim_owned).collect(),
            rows: clean,
            cluster_of,
            cluster_ids,
            members,
            sources,
            constraints: Vec::new(),
            codes,
            dictionary,
        })
    }

    pub fn with_constraints(mut self, constraints: Vec<DenialConstraint>) -> Self {
        self.constraints = constraints;
        self
    }

    /// Returns a new dataset holding these rows followed by `extra` rows.
    /// Extra cluster ids must not collide with existing ones.
    pub fn with_appended(
        &self,
        extra_rows: Vec<Vec<String>>,
        extra_clusters: Vec<String>,
        extra_sources: Option<Vec<String>>,
    ) -> Result<Self> {
        for id in &extra_clusters {
            if self.cluster_index(id).is_some() {
                return Err(FusionError::InvalidConfig(format!(
                    "appended cluster id `{id}` already exists"
                )));
            }
        }
        let mut rows = self.rows.clone();
        rows.extend(extra_rows);
        let mut clusters: Vec<String> = self
            .cluster_of
            .iter()
            .map(|&k| self.cluster_ids[k].clone())
            .collect();
        clusters.extend(extra_clusters);
        let sources = match (&self.sources, extra_sources) {
            (Some(s), Some(extra)) => {
                let mut all: Vec<String> =
                    s.of_row.iter().map(|&x| s.ids[x].clone()).collect();
                all.extend(extra);
                Some(all)
            }
            (None, None) => None,
            _ => {
                return Err(FusionError::InvalidConfig(
                    "appended rows must carry sources iff the dataset does".into(),
                ))
            }
        };
        Ok(FusionDataset::new(self.schema.clone(), rows, clusters, sources)?
            .with_constraints(self.constraints.clone()))
    }

    pub fn schema(&self) -> &[String] {
        &self.schema
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_attributes(&self) -> usize {
        self.schema.len()
    }

    pub fn n_clusters(&self) -> usize {
        self.cluster_ids.len()
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.schema.iter().position(|a| a == name)
    }

    pub fn row(&self, i: usize) -> &[String] {
        &self.rows[i]
    }

    pub fn rows(&self) -> &[Vec<String>] {
        &self.rows
    }

    pub fn cell(&self, i: usize, j: usize) -> &str {
        &self.rows[i][j]
    }

    /// Dictionary code of cell `(i, j)`; equal codes within a column mean equal strings.
    pub fn code(&self, i: usize, j: usize) -> u32 {
        self.codes[j][i]
    }

    pub fn column_codes(&self, j: usize) -> &[u32] {
        &self.codes[j]
    }

    pub fn dictionary(&self, j: usize) -> &[String] {
        &self.dictionary[j]
    }

    pub fn code_of(&self, j: usize, value: &str) -> Option<u32> {
        self.dictionary[j]
            .iter()
            .position(|v| v == value)
            .map(|x| x as u32)
    }

    pub fn cluster_of(&self, i: usize) -> usize {
        self.cluster_of[i]
    }

    pub fn cluster_id(&self, k: usize) -> &str {
        &self.cluster_ids[k]
    }

    pub fn cluster_ids(&self) -> &[String] {
        &self.cluster_ids
    }

    pub fn cluster_index(&self, id: &str) -> Option<usize> {
        self.cluster_ids.iter().position(|c| c == id)
    }

    pub fn members(&self, k: usize) -> &[usize] {
        &self.members[k]
    }

    pub fn sources(&self) -> Option<&Sources> {
        self.sources.as_ref()
    }

    pub fn n_sources(&self) -> usize {
        self.sources.as_ref().map_or(0, Sources::len)
    }

    pub fn constraints(&self) -> &[DenialConstraint] {
        &self.constraints
    }
}

fn trim_owned(s: String) -> String {
    let t = s.trim();
    if t.len() == s.len() {
        s
    } else {
        t.to_string()
    }
}

fn intern(items: impl Iterator<Item = String>) -> (Vec<usize>, Vec<String>) {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut ids = Vec::new();
    let mut out = Vec::new();
    for s in items {
        let next = ids.len();
        let k = *index.entry(s.clone()).or_insert_with(|| {
            ids.push(s);
            next
        });
        out.push(k);
    }
    (out, ids)
}

/// Known correct values for a subset of (cluster, attribute) pairs.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    labels: BTreeMap<(usize, usize), String>,
}

impl GroundTruth {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, cluster: usize, attribute: usize, value: impl Into<String>) {
        self.labels
            .insert((cluster, attribute), value.into().trim().to_string());
    }

    pub fn get(&self, cluster: usize, attribute: usize) -> Option<&str> {
        self.labels.get(&(cluster, attribute)).map(String::as_str)
    }

    pub fn is_labeled(&self, cluster: usize, attribute: usize) -> bool {
        self.labels.contains_key(&(cluster, attribute))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), &str)> {
        self.labels.iter().map(|(&k, v)| (k, v.as_str()))
    }

    /// Clusters that carry a label for every one of `n_attributes` attributes.
    pub fn fully_labeled_clusters(&self, n_attributes: usize) -> Vec<usize> {
        let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
        for &(k, _) in self.labels.keys() {
            *counts.entry(k).or_default() += 1;
        }
        counts
            .into_iter()
            .filter(|&(_, n)| n == n_attributes)
            .map(|(k, _)| k)
            .collect()
    }

    /// Keeps only the labels of the given clusters.
    pub fn restricted_to(&self, clusters: &[usize]) -> GroundTruth {
        let keep: std::collections::HashSet<usize> = clusters.iter().copied().collect();
        GroundTruth {
            labels: self
                .labels
                .iter()
                .filter(|((k, _), _)| keep.contains(k))
                .map(|(k, v)| (*k, v.clone()))
                .collect(),
        }
    }
}

/// One candidate index per (attribute, cluster): a full working assignment or a prediction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Assignment {
    per_attribute: Vec<Vec<usize>>,
}

impl Assignment {
    pub fn zeros(n_attributes: usize, n_clusters: usize) -> Self {
        Self {
            per_attribute: vec![vec![0; n_clusters]; n_attributes],
        }
    }

    pub fn get(&self, cluster: usize, attribute: usize) -> usize {
        self.per_attribute[attribute][cluster]
    }

    pub fn set(&mut self, cluster: usize, attribute: usize, index: usize) {
        self.per_attribute[attribute][cluster] = index;
    }

    pub fn attribute(&self, attribute: usize) -> &[usize] {
        &self.per_attribute[attribute]
    }

    pub fn set_attribute(&mut self, attribute: usize, indices: Vec<usize>) {
        self.per_attribute[attribute] = indices;
    }

    pub fn n_attributes(&self) -> usize {
        self.per_attribute.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: &[&str]) -> Vec<String> {
        v.iter().map(|x| x.to_string()).collect()
    }

    #[test]
    fn partitions_rows_into_clusters() {
        let ds = FusionDataset::new(
            s(&["Name", "City"]),
            vec![s(&["a", " NYC "]), s(&["b", "LA"]), s(&["a", "NYC"])],
            s(&["c1", "c2", "c1"]),
            None,
        )
        .unwrap();
        assert_eq!(ds.n_clusters(), 2);
        assert_eq!(ds.members(0), &[0, 2]);
        assert_eq!(ds.members(1), &[1]);
        assert_eq!(ds.cell(0, 1), "NYC");
        assert_eq!(ds.code(0, 1), ds.code(2, 1));
        assert_ne!(ds.code(0, 1), ds.code(1, 1));
    }

    #[test]
    fn rejects_ragged_rows() {
        let err = FusionDataset::new(
            s(&["A", "B"]),
            vec![s(&["1", "2"]), s(&["1"])],
            s(&["x", "x"]),
            None,
        )
        .unwrap_err();
        assert!(matches!(err, FusionError::CellCount { row: 1, .. }));
    }

    #[test]
    fn appended_rows_form_new_clusters() {
        let ds = FusionDataset::new(s(&["A"]), vec![s(&["1"])], s(&["x"]), None).unwrap();
        let more = ds
            .with_appended(vec![s(&["2"]), s(&["3"])], s(&["aug_0", "aug_0"]), None)
            .unwrap();
        assert_eq!(more.n_clusters(), 2);
        assert_eq!(more.members(1), &[1, 2]);
        assert!(ds
            .with_appended(vec![s(&["2"])], s(&["x"]), None)
            .is_err());
    }
}
