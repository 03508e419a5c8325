//! Cluster-level fusion of per-cell predictions.

use crate::candidates::{build_candidate_sets, Candidates};
use crate::dataset::{Assignment, FusionDataset, GroundTruth};
use crate::error::{FusionError, Result};
use crate::features::{Featurizer, Matrix};
use crate::learner::{AttributeModel, FusionModel};

/// Distribution over ρ_j positions, of which the first `candidate_count` are real values.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionDistribution {
    pub probs: Vec<f64>,
    pub candidate_count: usize,
}

impl PredictionDistribution {
    pub fn chosen(&self) -> usize {
        argmax_prefix(&self.probs, self.candidate_count)
    }

    /// Probability of the chosen index after renormalizing over the real candidates.
    pub fn confidence(&self) -> f64 {
        let k = self.candidate_count.min(self.probs.len());
        let mass: f64 = self.probs[..k].iter().sum();
        if mass > 0.0 {
            self.probs[self.chosen()] / mass
        } else {
            1.0 / k.max(1) as f64
        }
    }
}

fn argmax_prefix(v: &[f64], k: usize) -> usize {
    let mut best = 0;
    for i in 1..k.min(v.len()) {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// Final-stage distribution for one cell's feature vector.
pub fn predict_cell(
    model: &AttributeModel,
    features: &[f64],
    candidate_count: usize,
) -> Result<PredictionDistribution> {
    let stage = model
        .stages
        .last()
        .ok_or_else(|| FusionError::MissingModel(model.name.clone()))?;
    Ok(PredictionDistribution {
        probs: stage.forward(features)?,
        candidate_count: candidate_count.min(stage.rho),
    })
}

/// Averages the cluster's distributions and picks the best of the first
/// `candidate_count` indices; ties go to the lowest index.
pub fn fuse_cluster(distributions: &[Vec<f64>], candidate_count: usize) -> Result<usize> {
    let mean = average(distributions.iter().map(Vec::as_slice))?;
    Ok(argmax_prefix(&mean, candidate_count))
}

fn average<'a>(mut rows: impl Iterator<Item = &'a [f64]>) -> Result<Vec<f64>> {
    let first = rows.next().ok_or(FusionError::Empty("distribution list"))?;
    let mut acc = first.to_vec();
    let mut n = 1.0;
    for r in rows {
        if r.len() != acc.len() {
            return Err(FusionError::DimensionMismatch {
                expected: acc.len(),
                found: r.len(),
            });
        }
        for (a, v) in acc.iter_mut().zip(r) {
            *a += v;
        }
        n += 1.0;
    }
    acc.iter_mut().for_each(|a| *a /= n);
    Ok(acc)
}

/// Per-cluster averaged distributions of attribute `j` from per-row distributions.
pub fn cluster_distributions(
    ds: &FusionDataset,
    candidates: &Candidates,
    j: usize,
    rows: &Matrix,
) -> Vec<PredictionDistribution> {
    (0..ds.n_clusters())
        .map(|k| {
            let probs = average(ds.members(k).iter().map(|&i| rows.row(i)))
                .expect("clusters are nonempty");
            PredictionDistribution {
                candidate_count: candidates.get(k, j).len().min(rows.cols),
                probs,
            }
        })
        .collect()
}

/// One fused record per cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct FusedTable {
    pub schema: Vec<String>,
    pub cluster_ids: Vec<String>,
    pub values: Vec<Vec<String>>,
    pub confidence: Vec<Vec<f64>>,
    /// Chosen candidate index per (attribute, cluster).
    pub assignment: Assignment,
}

/// Replays every stage of `model` on `ds` and fuses each cluster.
/// Labeled pairs are emitted verbatim.
pub fn fuse_dataset(model: &FusionModel, ds: &FusionDataset, truth: &GroundTruth) -> Result<FusedTable> {
    let candidates = build_candidate_sets(ds);
    let ds_checked;
    let ds = if ds.constraints().is_empty() && !model.constraints.is_empty() {
        ds_checked = ds.clone().with_constraints(model.parse_constraints(ds.schema())?);
        &ds_checked
    } else {
        ds
    };
    let featurizer = Featurizer::with_layout(ds, &candidates, model.layout.clone())?;
    let run = model.replay(&featurizer, truth)?;
    let last = run.last().expect("at least one stage");
    let p = ds.n_clusters();
    let c = ds.n_attributes();
    let mut values = vec![Vec::with_capacity(c); p];
    let mut confidence = vec![Vec::with_capacity(c); p];
    let mut assignment = last.predictions.clone();
    for j in 0..c {
        for k in 0..p {
            let (idx, conf) = match truth.get(k, j) {
                Some(v) => {
                    let idx = candidates.get(k, j).index_of(v).ok_or_else(|| {
                        FusionError::TruthNotCandidate {
                            cluster: ds.cluster_id(k).to_string(),
                            attribute: ds.schema()[j].clone(),
                            value: v.to_string(),
                        }
                    })?;
                    (idx, 1.0)
                }
                None => (last.predictions.get(k, j), last.distributions[j][k].confidence()),
            };
            assignment.set(k, j, idx);
            values[k].push(candidates.value(k, j, idx).to_string());
            confidence[k].push(conf);
        }
    }
    Ok(FusedTable {
        schema: ds.schema().to_vec(),
        cluster_ids: ds.cluster_ids().to_vec(),
        values,
        confidence,
        assignment,
    })
}
