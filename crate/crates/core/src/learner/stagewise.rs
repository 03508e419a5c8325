use rayon::prelude::*;

use super::model::{AttributeModel, FusionModel, MODEL_FORMAT_VERSION};
use super::{train_stage, SoftmaxStage, Targets, TrainConfig};
use crate::candidates::{pin_truth, validate_truth, weak_labels, Candidates, ORDERING_KEY};
use crate::dataset::{Assignment, FusionDataset, GroundTruth};
use crate::embeddings::splitmix64;
use crate::error::{FusionError, Result};
use crate::features::{FeatureConfig, Featurizer, Matrix};
use crate::inference::{cluster_distributions, PredictionDistribution};

/// Predictions of one stage.
#[derive(Debug, Clone)]
pub struct StageOutcome {
    /// Fused argmax per (cluster, attribute), before ground-truth pinning.
    pub predictions: Assignment,
    /// Averaged distribution per `[attribute][cluster]`.
    pub distributions: Vec<Vec<PredictionDistribution>>,
}

/// What an observer sees after stage `stage` is trained and applied.
pub struct StageEvent<'e> {
    pub stage: usize,
    /// X^[t] per attribute.
    pub features: &'e [Matrix],
    /// y^[t]: the labels stage `t` was trained on.
    pub labels: &'e Assignment,
    pub outcome: &'e StageOutcome,
    /// Every stage trained so far, per attribute (empty for attributes not being trained).
    pub history: &'e [Vec<SoftmaxStage>],
}

/// Seed for attribute `j` at stage `t`.
pub fn stage_seed(seed: u64, t: usize, j: usize) -> u64 {
    splitmix64(seed ^ splitmix64(((t as u64) << 32) | j as u64))
}

fn targets(
    ds: &FusionDataset,
    candidates: &Candidates,
    truth: &GroundTruth,
    j: usize,
    rho: usize,
    labels: &Assignment,
    soft: Option<&[PredictionDistribution]>,
    weak_weight: f64,
) -> Targets {
    let n = ds.n_rows();
    let mut dist = Matrix::zeros(n, rho);
    let mut weight = vec![1.0; n];
    for i in 0..n {
        let k = ds.cluster_of(i);
        let row = dist.row_mut(i);
        let label = labels.get(k, j);
        if truth.is_labeled(k, j) {
            if label < rho {
                row[label] = 1.0;
            }
            continue;
        }
        weight[i] = weak_weight;
        match soft {
            Some(s) => {
                let d = &s[k];
                let count = candidates.get(k, j).len().min(rho);
                let mass: f64 = d.probs[..count].iter().sum();
                for (r, p) in row[..count].iter_mut().zip(&d.probs) {
                    *r = p / mass;
                }
            }
            None if label < rho => row[label] = 1.0,
            None => {}
        }
    }
    Targets {
        dist,
        weight: Some(weight),
    }
}

/// Shared stage loop for training and replay.
///
/// `fit(t, j, X, targets)` returns the classifier for attribute `j` at stage `t`;
/// attributes outside `active` keep their weak labels throughout.
pub(crate) fn run_stages<F>(
    f: &Featurizer<'_>,
    truth: &GroundTruth,
    n_stages: usize,
    active: &[usize],
    soft_labels: bool,
    weak_weight: f64,
    fit: F,
    mut observer: Option<&mut dyn FnMut(&StageEvent<'_>)>,
) -> Result<(Vec<Vec<SoftmaxStage>>, Vec<StageOutcome>)>
where
    F: Fn(usize, usize, &Matrix, &Targets) -> Result<SoftmaxStage> + Sync,
{
    let ds = f.dataset();
    let candidates = f.candidates();
    let c = ds.n_attributes();
    let layout = f.layout().clone();
    let weak = weak_labels(candidates, truth)?;
    let mut labels = weak.clone();
    // Dynamic features read an unpinned assignment for every cluster, so labeled
    // clusters look like unlabeled ones: majority vote first, then predictions.
    let mut observed = weak_labels(candidates, &GroundTruth::new())?;
    let mut previous: Option<Assignment> = None;
    let mut previous_dist: Option<Vec<Vec<PredictionDistribution>>> = None;
    let mut history: Vec<Vec<SoftmaxStage>> = vec![Vec::new(); c];
    let mut outcomes = Vec::with_capacity(n_stages);

    for t in 0..n_stages {
        let violations = f.violations(&observed);
        let xs: Vec<Matrix> = (0..c)
            .into_par_iter()
            .map(|j| f.featurize(j, previous.as_ref(), &observed, violations.as_deref()))
            .collect();
        let trained: Vec<Option<SoftmaxStage>> = (0..c)
            .into_par_iter()
            .map(|j| {
                if !active.contains(&j) {
                    return Ok(None);
                }
                let soft = if soft_labels {
                    previous_dist.as_ref().map(|d| d[j].as_slice())
                } else {
                    None
                };
                let tg = targets(ds, candidates, truth, j, layout.rho[j], &labels, soft, weak_weight);
                fit(t, j, &xs[j], &tg).map(Some)
            })
            .collect::<Result<_>>()?;

        let mut predictions = observed.clone();
        let mut distributions = Vec::with_capacity(c);
        for j in 0..c {
            match &trained[j] {
                Some(stage) => {
                    let rows = stage.forward_batch(&xs[j])?;
                    let dists = cluster_distributions(ds, candidates, j, &rows);
                    predictions.set_attribute(j, dists.iter().map(PredictionDistribution::chosen).collect());
                    distributions.push(dists);
                    history[j].push(stage.clone());
                }
                None => {
                    let rho = layout.rho[j];
                    distributions.push(
                        (0..ds.n_clusters())
                            .map(|k| {
                                let mut probs = vec![0.0; rho];
                                probs[observed.get(k, j).min(rho - 1)] = 1.0;
                                PredictionDistribution {
                                    probs,
                                    candidate_count: candidates.get(k, j).len().min(rho),
                                }
                            })
                            .collect(),
                    );
                }
            }
        }
        let outcome = StageOutcome {
            predictions,
            distributions,
        };
        if let Some(obs) = observer.as_deref_mut() {
            obs(&StageEvent {
                stage: t,
                features: &xs,
                labels: &labels,
                outcome: &outcome,
                history: &history,
            });
        }
        let mut next = outcome.predictions.clone();
        pin_truth(&mut next, candidates, truth)?;
        previous = Some(outcome.predictions.clone());
        observed = outcome.predictions.clone();
        previous_dist = Some(outcome.distributions.clone());
        labels = next;
        outcomes.push(outcome);
    }
    Ok((history, outcomes))
}

fn fit_fn<'c>(
    cfg: &'c TrainConfig,
    schema: &'c [String],
) -> impl Fn(usize, usize, &Matrix, &Targets) -> Result<SoftmaxStage> + Sync + 'c {
    move |t, j, x, tg| {
        train_stage(x, tg, cfg, stage_seed(cfg.seed, t, j))
            .map(|fit| fit.stage)
            .map_err(|e| match e {
                FusionError::NonFiniteLoss { epoch, loss, .. } => FusionError::NonFiniteLoss {
                    stage: t,
                    attribute: schema[j].clone(),
                    epoch,
                    loss,
                },
                other => other,
            })
    }
}

/// Trains every attribute stage by stage in lockstep, so stage `t` of each
/// attribute sees all attributes' stage `t − 1` predictions.
pub fn train(
    ds: &FusionDataset,
    candidates: &Candidates,
    truth: &GroundTruth,
    features: &FeatureConfig,
    cfg: &TrainConfig,
    observer: Option<&mut dyn FnMut(&StageEvent<'_>)>,
) -> Result<(FusionModel, Vec<StageOutcome>)> {
    cfg.validate()?;
    validate_truth(ds, candidates, truth)?;
    let f = Featurizer::new(ds, candidates, features)?;
    let all: Vec<usize> = (0..ds.n_attributes()).collect();
    let (history, outcomes) = run_stages(
        &f,
        truth,
        cfg.stages + 1,
        &all,
        cfg.soft_labels,
        cfg.weak_label_weight,
        fit_fn(cfg, ds.schema()),
        observer,
    )?;
    let layout = f.layout().clone();
    let attributes = history
        .into_iter()
        .enumerate()
        .map(|(j, stages)| AttributeModel {
            attribute: j,
            name: ds.schema()[j].clone(),
            b: layout.dim(j),
            rho: layout.rho[j],
            stages,
        })
        .collect();
    let model = FusionModel {
        format_version: MODEL_FORMAT_VERSION,
        ordering_key: ORDERING_KEY.to_string(),
        constraints: ds.constraints().iter().map(ToString::to_string).collect(),
        layout,
        train: cfg.clone(),
        attributes,
    };
    Ok((model, outcomes))
}

/// Trains attribute `j` alone; every other attribute stays at its weak label.
pub fn train_attribute(
    ds: &FusionDataset,
    candidates: &Candidates,
    j: usize,
    truth: &GroundTruth,
    features: &FeatureConfig,
    cfg: &TrainConfig,
) -> Result<AttributeModel> {
    cfg.validate()?;
    if j >= ds.n_attributes() {
        return Err(FusionError::UnknownAttribute(format!("#{j}")));
    }
    validate_truth(ds, candidates, truth)?;
    let f = Featurizer::new(ds, candidates, features)?;
    let (mut history, _) = run_stages(
        &f,
        truth,
        cfg.stages + 1,
        &[j],
        cfg.soft_labels,
        cfg.weak_label_weight,
        fit_fn(cfg, ds.schema()),
        None,
    )?;
    Ok(AttributeModel {
        attribute: j,
        name: ds.schema()[j].clone(),
        b: f.layout().dim(j),
        rho: f.layout().rho[j],
        stages: std::mem::take(&mut history[j]),
    })
}
