use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::baselines::{counts, majority_vote};
use super::metrics::{precision, split, summarize, Summary};
use crate::augment::{augment_entities, AugmentConfig};
use crate::candidates::{build_candidate_sets, Candidates};
use crate::dataset::{FusionDataset, GroundTruth};
use crate::embeddings::splitmix64;
use crate::error::{FusionError, Result};
use crate::features::{FeatureConfig, FeatureModel};
use crate::learner::{train, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub train_fraction: f64,
    pub validation_fraction: f64,
    pub seeds: Vec<u64>,
    /// Score only pairs whose candidate set has more than one value.
    pub contested_only: bool,
    /// Add one variant per disabled representation model.
    pub ablate_models: bool,
    /// Add one variant per disabled context group.
    pub ablate_contexts: bool,
    pub train: TrainConfig,
    pub features: FeatureConfig,
    pub augment: AugmentConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            train_fraction: 0.05,
            validation_fraction: 0.05,
            seeds: (0..50).collect(),
            contested_only: true,
            ablate_models: false,
            ablate_contexts: false,
            train: TrainConfig::default(),
            features: FeatureConfig::default(),
            augment: AugmentConfig::default(),
        }
    }
}

/// Outcome of one seed for one variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    /// Precision of the final stage.
    pub precision: f64,
    /// Precision after each stage t = 0..=T.
    pub stage_precision: Vec<f64>,
    pub eval_pairs: usize,
    pub train_clusters: usize,
    pub synthetic_clusters: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariantKind {
    Full,
    WithoutModel,
    WithoutContext,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub name: String,
    pub kind: VariantKind,
    pub disabled: Vec<FeatureModel>,
    pub seeds: Vec<SeedResult>,
    pub summary: Summary,
}

impl VariantReport {
    /// Median precision after stage `t` across seeds.
    pub fn stage_median(&self, t: usize) -> f64 {
        let v: Vec<f64> = self.seeds.iter().filter_map(|s| s.stage_precision.get(t).copied()).collect();
        summarize(&v).median
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineReport {
    pub name: String,
    pub seeds: Vec<(u64, f64)>,
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub variants: Vec<VariantReport>,
    pub baselines: Vec<BaselineReport>,
}

impl ExperimentReport {
    pub fn full(&self) -> &VariantReport {
        self.variants
            .iter()
            .find(|v| v.kind == VariantKind::Full)
            .expect("full variant always runs")
    }

    pub fn variant(&self, name: &str) -> Option<&VariantReport> {
        self.variants.iter().find(|v| v.name == name)
    }

    pub fn baseline(&self, name: &str) -> Option<&BaselineReport> {
        self.baselines.iter().find(|b| b.name == name)
    }
}

/// Seed for a named sub-task of experiment seed `seed`.
fn derive(seed: u64, salt: u64) -> u64 {
    splitmix64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ salt)
}

const SPLIT_SALT: u64 = 1;
const AUGMENT_SALT: u64 = 2;
const TRAIN_SALT: u64 = 3;

struct Prepared {
    seed: u64,
    dataset: FusionDataset,
    candidates: Candidates,
    labels: GroundTruth,
    eval: Vec<(usize, usize)>,
    train_clusters: usize,
    synthetic_clusters: usize,
    mv: f64,
    counts: Option<f64>,
}

fn prepare(ds: &FusionDataset, truth: &GroundTruth, cfg: &ExperimentConfig, seed: u64) -> Result<Prepared> {
    let s = split(
        ds.n_clusters(),
        cfg.train_fraction,
        cfg.validation_fraction,
        derive(seed, SPLIT_SALT),
    )?;
    let labels = truth.restricted_to(&s.train);
    let aug_cfg = AugmentConfig {
        seed: derive(seed, AUGMENT_SALT),
        ..cfg.augment
    };
    let aug = augment_entities(ds, &labels, &aug_cfg)?;
    let synthetic_clusters = aug.n_clusters();
    let (dataset, labels) = aug.apply(ds, &labels)?;
    let candidates = build_candidate_sets(&dataset);
    let eval: Vec<(usize, usize)> = s
        .test
        .iter()
        .flat_map(|&k| (0..ds.n_attributes()).map(move |j| (k, j)))
        .filter(|&(k, j)| truth.is_labeled(k, j))
        .filter(|&(k, j)| !cfg.contested_only || candidates.get(k, j).len() > 1)
        .collect();
    if eval.is_empty() {
        return Err(FusionError::EmptyEvalSet);
    }
    let mv = precision(&majority_vote(&candidates), &candidates, truth, &eval)?;
    let counts = match dataset.sources() {
        Some(_) => Some(precision(
            &counts(&dataset, &candidates, &labels)?,
            &candidates,
            truth,
            &eval,
        )?),
        None => None,
    };
    Ok(Prepared {
        seed,
        dataset,
        candidates,
        labels,
        eval,
        train_clusters: s.train.len(),
        synthetic_clusters,
        mv,
        counts,
    })
}

fn run_one(p: &Prepared, truth: &GroundTruth, cfg: &ExperimentConfig, features: &FeatureConfig) -> Result<SeedResult> {
    let tc = TrainConfig {
        seed: derive(p.seed, TRAIN_SALT),
        ..cfg.train.clone()
    };
    let (_, outcomes) = train(&p.dataset, &p.candidates, &p.labels, features, &tc, None)?;
    let stage_precision = outcomes
        .iter()
        .map(|o| precision(&o.predictions, &p.candidates, truth, &p.eval))
        .collect::<Result<Vec<_>>>()?;
    Ok(SeedResult {
        seed: p.seed,
        precision: *stage_precision.last().expect("at least one stage"),
        stage_precision,
        eval_pairs: p.eval.len(),
        train_clusters: p.train_clusters,
        synthetic_clusters: p.synthetic_clusters,
    })
}

/// Whether model `m` contributes any coordinate on `ds`.
fn applies(m: FeatureModel, ds: &FusionDataset) -> bool {
    match m {
        FeatureModel::Source => ds.sources().is_some(),
        FeatureModel::Constraints => !ds.constraints().is_empty(),
        _ => true,
    }
}

/// Variants an experiment runs on `ds`: the full model, then the requested ablations.
/// Models that contribute nothing on `ds` are not ablated.
pub fn variants(cfg: &ExperimentConfig, ds: &FusionDataset) -> Vec<(String, VariantKind, Vec<FeatureModel>)> {
    let mut out = vec![("full".to_string(), VariantKind::Full, Vec::new())];
    if cfg.ablate_models {
        for m in FeatureModel::ALL {
            if cfg.features.enabled(m) && applies(m, ds) {
                out.push((format!("-{m}"), VariantKind::WithoutModel, vec![m]));
            }
        }
    }
    if cfg.ablate_contexts {
        for ctx in ["attribute", "record", "dataset"] {
            let group: Vec<FeatureModel> = FeatureModel::ALL
                .into_iter()
                .filter(|m| m.context() == ctx && cfg.features.enabled(*m) && applies(*m, ds))
                .collect();
            if !group.is_empty() {
                out.push((format!("-{ctx}-context"), VariantKind::WithoutContext, group));
            }
        }
    }
    out
}

/// Runs every seed of every variant on `ds`, scoring held-out clusters against `truth`.
pub fn run_experiment(ds: &FusionDataset, truth: &GroundTruth, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    if cfg.seeds.is_empty() {
        return Err(FusionError::InvalidConfig("experiment needs at least one seed".into()));
    }
    let prepared: Vec<Prepared> = cfg
        .seeds
        .par_iter()
        .map(|&s| prepare(ds, truth, cfg, s))
        .collect::<Result<_>>()?;
    let plan = variants(cfg, ds);
    let jobs: Vec<(usize, usize)> = (0..plan.len())
        .flat_map(|v| (0..prepared.len()).map(move |s| (v, s)))
        .collect();
    let results: Vec<SeedResult> = jobs
        .par_iter()
        .map(|&(v, s)| {
            let features = cfg.features.clone().without(&plan[v].2);
            run_one(&prepared[s], truth, cfg, &features)
        })
        .collect::<Result<_>>()?;

    let mut variants = Vec::with_capacity(plan.len());
    for (v, (name, kind, disabled)) in plan.into_iter().enumerate() {
        let seeds: Vec<SeedResult> = results[v * prepared.len()..(v + 1) * prepared.len()].to_vec();
        let summary = summarize(&seeds.iter().map(|s| s.precision).collect::<Vec<_>>());
        variants.push(VariantReport {
            name,
            kind,
            disabled,
            seeds,
            summary,
        });
    }
    let mut baselines = Vec::new();
    let mv: Vec<(u64, f64)> = prepared.iter().map(|p| (p.seed, p.mv)).collect();
    baselines.push(BaselineReport {
        name: "majority-vote".into(),
        summary: summarize(&mv.iter().map(|x| x.1).collect::<Vec<_>>()),
        seeds: mv,
    });
    if prepared.iter().all(|p| p.counts.is_some()) {
        let c: Vec<(u64, f64)> = prepared.iter().map(|p| (p.seed, p.counts.unwrap())).collect();
        baselines.push(BaselineReport {
            name: "counts".into(),
            summary: summarize(&c.iter().map(|x| x.1).collect::<Vec<_>>()),
            seeds: c,
        });
    }
    Ok(ExperimentReport { variants, baselines })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eval::generator::{generate_benchmark, BenchmarkSpec};

    fn tiny() -> (FusionDataset, GroundTruth) {
        let spec = BenchmarkSpec {
            clusters: 40,
            clusters_per_key: 4,
            sources: 3,
            ..Default::default()
        };
        let b = generate_benchmark(&spec, 1).unwrap();
        (b.dataset, b.truth)
    }

    #[test]
    fn smoke_single_seed() {
        let (ds, truth) = tiny();
        let cfg = ExperimentConfig {
            seeds: vec![0],
            train_fraction: 0.2,
            train: TrainConfig { stages: 0, epochs: 3, ..Default::default() },
            augment: AugmentConfig { ratio: 0.0, ..Default::default() },
            ..Default::default()
        };
        let r = run_experiment(&ds, &truth, &cfg).unwrap();
        assert_eq!(r.variants.len(), 1);
        assert_eq!(r.full().seeds.len(), 1);
        assert_eq!(r.full().seeds[0].stage_precision.len(), 1);
        assert!(r.baseline("counts").is_some());
        assert!((0.0..=1.0).contains(&r.full().summary.median));
    }

    #[test]
    fn ablation_plan_shape() {
        let cfg = ExperimentConfig {
            ablate_models: true,
            ablate_contexts: true,
            ..Default::default()
        };
        let (ds, _) = tiny();
        let plan = variants(&cfg, &ds);
        assert_eq!(plan.len(), 1 + 8 + 3);
        let bare = ds.clone().with_constraints(Vec::new());
        assert_eq!(variants(&cfg, &bare).len(), 1 + 7 + 3);
        assert_eq!(plan[0].1, VariantKind::Full);
    }

    #[test]
    fn five_seeds_median_is_middle_value() {
        let (ds, truth) = tiny();
        let cfg = ExperimentConfig {
            seeds: (0..5).collect(),
            train_fraction: 0.2,
            train: TrainConfig { stages: 0, epochs: 2, ..Default::default() },
            augment: AugmentConfig { ratio: 0.0, ..Default::default() },
            ..Default::default()
        };
        let r = run_experiment(&ds, &truth, &cfg).unwrap();
        let mut p: Vec<f64> = r.full().seeds.iter().map(|s| s.precision).collect();
        p.sort_by(f64::total_cmp);
        assert_eq!(r.full().summary.median, p[2]);
    }
}
