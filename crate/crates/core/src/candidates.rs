//! Candidate sets E_kj, label dimensions and the majority-vote weak labels.

use serde::{Deserialize, Serialize};

use crate::dataset::{Assignment, FusionDataset, GroundTruth};
use crate::error::{FusionError, Result};

/// Name of the candidate ordering recorded in model files.
pub const ORDERING_KEY: &str = "freq-desc/bytes-asc";

/// Distinct values of one attribute within one cluster.
///
/// Values are sorted by descending frequency, ties broken by byte order, so
/// index 0 is always the majority value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    pub cluster: usize,
    pub attribute: usize,
    pub values: Vec<String>,
    pub codes: Vec<u32>,
    pub freqs: Vec<usize>,
}

impl CandidateSet {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn index_of(&self, value: &str) -> Option<usize> {
        self.values.iter().position(|v| v == value)
    }

    pub fn index_of_code(&self, code: u32) -> Option<usize> {
        self.codes.iter().position(|&c| c == code)
    }

    pub fn total(&self) -> usize {
        self.freqs.iter().sum()
    }
}

/// All candidate sets of a dataset, indexed by (attribute, cluster).
#[derive(Debug, Clone)]
pub struct Candidates {
    sets: Vec<Vec<CandidateSet>>,
    rho: Vec<usize>,
    position: Vec<Vec<usize>>,
}

impl Candidates {
    pub fn get(&self, cluster: usize, attribute: usize) -> &CandidateSet {
        &self.sets[attribute][cluster]
    }

    pub fn attribute(&self, attribute: usize) -> &[CandidateSet] {
        &self.sets[attribute]
    }

    /// ρ_j, the widest candidate set of attribute `j`.
    pub fn label_dimension(&self, attribute: usize) -> usize {
        self.rho[attribute]
    }

    /// Index of row `i`'s value for attribute `j` inside its cluster's candidate set.
    pub fn position(&self, row: usize, attribute: usize) -> usize {
        self.position[attribute][row]
    }

    pub fn n_attributes(&self) -> usize {
        self.sets.len()
    }

    /// Value string selected by `index` for (cluster, attribute).
    pub fn value(&self, cluster: usize, attribute: usize, index: usize) -> &str {
        &self.sets[attribute][cluster].values[index]
    }
}

pub fn build_candidate_sets(ds: &FusionDataset) -> Candidates {
    let c = ds.n_attributes();
    let mut sets = Vec::with_capacity(c);
    let mut rho = Vec::with_capacity(c);
    let mut position = Vec::with_capacity(c);
    for j in 0..c {
        let mut col_sets = Vec::with_capacity(ds.n_clusters());
        let mut pos = vec![0usize; ds.n_rows()];
        for k in 0..ds.n_clusters() {
            let mut counts: Vec<(u32, usize)> = Vec::new();
            for &i in ds.members(k) {
                let code = ds.code(i, j);
                match counts.iter_mut().find(|(c, _)| *c == code) {
                    Some((_, n)) => *n += 1,
                    None => counts.push((code, 1)),
                }
            }
            let dict = ds.dictionary(j);
            counts.sort_by(|a, b| {
                b.1.cmp(&a.1)
                    .then_with(|| dict[a.0 as usize].as_bytes().cmp(dict[b.0 as usize].as_bytes()))
            });
            for &i in ds.members(k) {
                let code = ds.code(i, j);
                pos[i] = counts.iter().position(|(c, _)| *c == code).unwrap_or(0);
            }
            col_sets.push(CandidateSet {
                cluster: k,
                attribute: j,
                values: counts.iter().map(|(c, _)| dict[*c as usize].clone()).collect(),
                codes: counts.iter().map(|(c, _)| *c).collect(),
                freqs: counts.iter().map(|(_, n)| *n).collect(),
            });
        }
        rho.push(col_sets.iter().map(CandidateSet::len).max().unwrap_or(1));
        sets.push(col_sets);
        position.push(pos);
    }
    Candidates {
        sets,
        rho,
        position,
    }
}

pub fn label_dimension(candidates: &Candidates, attribute: usize) -> usize {
    candidates.label_dimension(attribute)
}

/// One-hot label over the first ρ_j positions of a candidate set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelVector {
    pub dim: usize,
    pub hot_index: usize,
}

impl LabelVector {
    pub fn new(dim: usize, hot_index: usize) -> Self {
        debug_assert!(hot_index < dim);
        Self { dim, hot_index }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        v[self.hot_index] = 1.0;
        v
    }
}

/// Checks that every labeled value is a member of its candidate set.
pub fn validate_truth(
    ds: &FusionDataset,
    candidates: &Candidates,
    truth: &GroundTruth,
) -> Result<()> {
    for ((k, j), value) in truth.iter() {
        if k >= ds.n_clusters() || j >= ds.n_attributes() {
            return Err(FusionError::UnknownCluster(format!("#{k}")));
        }
        if candidates.get(k, j).index_of(value).is_none() {
            return Err(FusionError::TruthNotCandidate {
                cluster: ds.cluster_id(k).to_string(),
                attribute: ds.schema()[j].clone(),
                value: value.to_string(),
            });
        }
    }
    Ok(())
}

/// Majority vote for unlabeled pairs (index 0 by the candidate ordering);
/// labeled pairs take their ground-truth index.
pub fn weak_labels(candidates: &Candidates, truth: &GroundTruth) -> Result<Assignment> {
    let c = candidates.n_attributes();
    let p = candidates.attribute(0).len();
    let mut out = Assignment::zeros(c, p);
    for ((k, j), value) in truth.iter() {
        let set = candidates.get(k, j);
        let idx = set.index_of(value).ok_or_else(|| FusionError::TruthNotCandidate {
            cluster: format!("#{k}"),
            attribute: format!("#{j}"),
            value: value.to_string(),
        })?;
        out.set(k, j, idx);
    }
    Ok(out)
}

/// Overwrites every labeled pair of `assignment` with its ground-truth index.
pub fn pin_truth(
    assignment: &mut Assignment,
    candidates: &Candidates,
    truth: &GroundTruth,
) -> Result<()> {
    for ((k, j), value) in truth.iter() {
        let idx = candidates
            .get(k, j)
            .index_of(value)
            .ok_or_else(|| FusionError::TruthNotCandidate {
                cluster: format!("#{k}"),
                attribute: format!("#{j}"),
                value: value.to_string(),
            })?;
        assignment.set(k, j, idx);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dataset(rows: &[(&str, &[&str])]) -> FusionDataset {
        let width = rows[0].1.len();
        FusionDataset::new(
            (0..width).map(|j| format!("A{j}")).collect(),
            rows.iter()
                .map(|(_, r)| r.iter().map(|s| s.to_string()).collect())
                .collect(),
            rows.iter().map(|(c, _)| c.to_string()).collect(),
            None,
        )
        .unwrap()
    }

    #[test]
    fn orders_by_frequency_then_bytes() {
        let ds = dataset(&[("k", &["a"]), ("k", &["b"]), ("k", &["a"])]);
        let c = build_candidate_sets(&ds);
        let set = c.get(0, 0);
        assert_eq!(set.values, vec!["a", "b"]);
        assert_eq!(set.freqs, vec![2, 1]);
        assert_eq!(c.position(1, 0), 1);
    }

    #[test]
    fn singleton_cluster() {
        let ds = dataset(&[("k", &["x"])]);
        let c = build_candidate_sets(&ds);
        assert_eq!(c.get(0, 0).values, vec!["x"]);
        assert_eq!(c.get(0, 0).freqs, vec![1]);
        assert_eq!(c.label_dimension(0), 1);
    }

    #[test]
    fn conflicting_claims_are_both_candidates() {
        let ds = dataset(&[
            ("c3", &["WA"]),
            ("c3", &["WA"]),
            ("c3", &["New York"]),
        ]);
        let c = build_candidate_sets(&ds);
        let vals = &c.get(0, 0).values;
        assert!(vals.contains(&"WA".to_string()));
        assert!(vals.contains(&"New York".to_string()));
    }

    #[test]
    fn label_dimension_is_max_over_clusters() {
        let ds = dataset(&[
            ("a", &["1"]),
            ("a", &["2"]),
            ("b", &["1"]),
            ("b", &["2"]),
            ("b", &["3"]),
            ("c", &["9"]),
        ]);
        let c = build_candidate_sets(&ds);
        assert_eq!(label_dimension(&c, 0), 3);
    }

    #[test]
    fn unanimous_attribute_has_dimension_one() {
        let ds = dataset(&[("a", &["1"]), ("a", &["1"]), ("b", &["2"])]);
        assert_eq!(build_candidate_sets(&ds).label_dimension(0), 1);
    }

    #[test]
    fn weak_labels_take_majority_and_ties_go_first() {
        let ds = dataset(&[
            ("a", &["x"]),
            ("a", &["x"]),
            ("a", &["x"]),
            ("a", &["y"]),
            ("b", &["q"]),
            ("b", &["p"]),
            ("b", &["p"]),
            ("b", &["q"]),
        ]);
        let c = build_candidate_sets(&ds);
        let w = weak_labels(&c, &GroundTruth::new()).unwrap();
        assert_eq!(w.get(0, 0), 0);
        assert_eq!(w.get(1, 0), 0);
        // tie 2/2 → byte order puts "p" first
        assert_eq!(c.get(1, 0).values[0], "p");
    }

    #[test]
    fn ground_truth_overrides_frequency() {
        let ds = dataset(&[("a", &["x"]), ("a", &["x"]), ("a", &["y"])]);
        let c = build_candidate_sets(&ds);
        let mut t = GroundTruth::new();
        t.insert(0, 0, "y");
        let w = weak_labels(&c, &t).unwrap();
        assert_eq!(w.get(0, 0), 1);
    }

    #[test]
    fn truth_outside_candidates_is_rejected() {
        let ds = dataset(&[("a", &["x"])]);
        let c = build_candidate_sets(&ds);
        let mut t = GroundTruth::new();
        t.insert(0, 0, "z");
        assert!(matches!(
            validate_truth(&ds, &c, &t),
            Err(FusionError::TruthNotCandidate { .. })
        ));
    }
}
