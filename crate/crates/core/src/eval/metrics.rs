use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::candidates::Candidates;
use crate::dataset::{Assignment, GroundTruth};
use crate::error::{FusionError, Result};

/// Fraction of `eval_set` pairs whose predicted value equals the truth.
pub fn precision(
    predictions: &Assignment,
    candidates: &Candidates,
    truth: &GroundTruth,
    eval_set: &[(usize, usize)],
) -> Result<f64> {
    if eval_set.is_empty() {
        return Err(FusionError::EmptyEvalSet);
    }
    let mut hits = 0usize;
    for &(k, j) in eval_set {
        let want = truth
            .get(k, j)
            .ok_or_else(|| FusionError::UnknownCluster(format!("#{k} has no held-out truth")))?;
        if candidates.value(k, j, predictions.get(k, j)) == want {
            hits += 1;
        }
    }
    Ok(hits as f64 / eval_set.len() as f64)
}

/// Cluster indices of a seeded three-way split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

/// Shuffles cluster indices with `seed` and cuts contiguous train/validation/test blocks.
pub fn split(n_clusters: usize, train: f64, validation: f64, seed: u64) -> Result<Split> {
    let ok = |f: f64| (0.0..=1.0).contains(&f);
    if !ok(train) || !ok(validation) || train + validation >= 1.0 {
        return Err(FusionError::InvalidConfig(format!(
            "split fractions ({train}, {validation}) must lie in [0, 1] and sum to less than 1"
        )));
    }
    let n_train = (train * n_clusters as f64).round() as usize;
    let n_val = (validation * n_clusters as f64).round() as usize;
    if n_train + n_val >= n_clusters {
        return Err(FusionError::SplitTooSmall {
            clusters: n_clusters,
            train,
            validation,
        });
    }
    let mut ids: Vec<usize> = (0..n_clusters).collect();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test = ids.split_off(n_train + n_val);
    let mut validation = ids.split_off(n_train);
    let mut train = ids;
    train.sort_unstable();
    validation.sort_unstable();
    test.sort_unstable();
    Ok(Split {
        train,
        validation,
        test,
    })
}

/// Median, mean and standard error (sample standard deviation over √n).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub n: usize,
    pub median: f64,
    pub mean: f64,
    pub stderr: f64,
}

pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len();
    if n == 0 {
        return Summary {
            n,
            median: f64::NAN,
            mean: f64::NAN,
            stderr: f64::NAN,
        };
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    };
    let mean = values.iter().sum::<f64>() / n as f64;
    let stderr = if n > 1 {
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
        var.sqrt() / (n as f64).sqrt()
    } else {
        0.0
    };
    Summary {
        n,
        median,
        mean,
        stderr,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn split_sizes() {
        let s = split(4, 0.5, 0.0, 1).unwrap();
        assert_eq!((s.train.len(), s.validation.len(), s.test.len()), (2, 0, 2));
        assert_eq!(s, split(4, 0.5, 0.0, 1).unwrap());
        assert!(split(4, 0.6, 0.5, 1).is_err());
        assert!(matches!(split(2, 0.5, 0.25, 0), Err(FusionError::SplitTooSmall { .. })));
    }

    #[test]
    fn summary_by_hand() {
        let s = summarize(&[0.2, 0.9, 0.5, 0.4, 0.6]);
        assert_eq!(s.median, 0.5);
        assert!((s.mean - 0.52).abs() < 1e-12);
        // squared deviations: .1024 + .1444 + .0004 + .0144 + .0064 = .268
        assert!((s.stderr - (0.268f64 / 4.0).sqrt() / 5f64.sqrt()).abs() < 1e-12);
        assert_eq!(summarize(&[1.0, 3.0]).median, 2.0);
    }

    proptest! {
        #[test]
        fn split_partitions(n in 3usize..200, tr in 0.0f64..0.45, va in 0.0f64..0.45, seed in any::<u64>()) {
            if let Ok(s) = split(n, tr, va, seed) {
                let mut all: Vec<usize> = s.train.iter().chain(&s.validation).chain(&s.test).copied().collect();
                all.sort_unstable();
                prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
                prop_assert!(!s.test.is_empty());
            }
        }
    }
}
