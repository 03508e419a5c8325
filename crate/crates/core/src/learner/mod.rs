//! Softmax classifiers trained with mini-batch ADAM, stacked stage by stage.

mod adam;
mod model;
mod softmax;
mod stagewise;

pub use adam::{Adam, AdamConfig};
pub use model::{attribute_file, AttributeModel, FusionModel, MODEL_FORMAT_VERSION, MODEL_HEADER_FILE};
pub use softmax::{gradient, loss, softmax, softmax_in_place, SoftmaxStage, Targets};
pub use stagewise::{stage_seed, train, train_attribute, StageEvent, StageOutcome};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{FusionError, Result};
use crate::features::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// T: stages after the first, so T + 1 classifiers are trained.
    pub stages: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    /// λ in the L2 penalty λ‖W‖².
    pub l2: f64,
    pub seed: u64,
    /// Sample weight of unlabeled cells (weak or pseudo-labels); labeled cells weigh 1.
    pub weak_label_weight: f64,
    /// Train unlabeled cells on the previous stage's averaged distribution instead of its argmax.
    pub soft_labels: bool,
    /// Standardize feature columns before optimizing; the scaling is folded back into W and bias.
    pub standardize: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            stages: 15,
            epochs: 500,
            batch_size: 10,
            adam: AdamConfig::default(),
            l2: 1e-4,
            seed: 0,
            weak_label_weight: 0.0,
            soft_labels: false,
            standardize: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(FusionError::InvalidConfig(
                "epochs and batch size must be at least 1".into(),
            ));
        }
        if !(self.weak_label_weight >= 0.0 && self.weak_label_weight.is_finite()) {
            return Err(FusionError::InvalidConfig(
                "weak_label_weight must be a finite nonnegative number".into(),
            ));
        }
        if !(self.l2 >= 0.0) || !(self.adam.lr > 0.0) {
            return Err(FusionError::InvalidConfig(
                "l2 must be nonnegative and the learning rate positive".into(),
            ));
        }
        Ok(())
    }
}

/// Result of fitting one stage.
#[derive(Debug, Clone)]
pub struct Fit {
    pub stage: SoftmaxStage,
    /// Mean minibatch loss per epoch.
    pub epoch_losses: Vec<f64>,
}

struct Standardizer {
    mean: Vec<f64>,
    scale: Vec<f64>,
}

impl Standardizer {
    fn fit(x: &Matrix) -> Self {
        let n = x.rows.max(1) as f64;
        let mut mean = vec![0.0; x.cols];
        for i in 0..x.rows {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; x.cols];
        for i in 0..x.rows {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let scale = var
            .iter()
            .map(|s| {
                let sd = (s / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, scale }
    }

    fn apply(&self, x: &Matrix) -> Matrix {
        let mut out = x.clone();
        for i in 0..out.rows {
            for ((v, m), s) in out.row_mut(i).iter_mut().zip(&self.mean).zip(&self.scale) {
                *v = (*v - m) / s;
            }
        }
        out
    }

    /// Maps a stage trained on standardized inputs to one taking raw inputs.
    fn fold(&self, mut st: SoftmaxStage) -> SoftmaxStage {
        for f in 0..st.b {
            for r in 0..st.rho {
                let w = st.weights[f * st.rho + r] / self.scale[f];
                st.weights[f * st.rho + r] = w;
                st.bias[r] -= self.mean[f] * w;
            }
        }
        st
    }
}

/// Fits one softmax stage by mini-batch ADAM over seeded shuffles.
pub fn train_stage(x: &Matrix, targets: &Targets, cfg: &TrainConfig, seed: u64) -> Result<Fit> {
    cfg.validate()?;
    if x.rows != targets.len() {
        return Err(FusionError::DimensionMismatch {
            expected: x.rows,
            found: targets.len(),
        });
    }
    if x.rows == 0 {
        return Err(FusionError::Empty("training set"));
    }
    let rho = targets.dist.cols;
    let mut stage = SoftmaxStage::zeros(x.cols, rho);
    if rho <= 1 {
        // A single class is always predicted with probability 1; zero weights minimize the penalty.
        return Ok(Fit {
            stage,
            epoch_losses: vec![0.0; cfg.epochs],
        });
    }
    let standardizer = cfg.standardize.then(|| Standardizer::fit(x));
    let scaled;
    let xs = match &standardizer {
        Some(s) => {
            scaled = s.apply(x);
            &scaled
        }
        None => x,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Zero-weight rows contribute nothing but would dilute every batch mean.
    let mut order: Vec<usize> = (0..x.rows).filter(|&i| targets.weight(i) > 0.0).collect();
    if order.is_empty() {
        return Ok(Fit {
            stage: SoftmaxStage::zeros(x.cols, rho),
            epoch_losses: vec![0.0; cfg.epochs],
        });
    }
    let mut opt = Adam::new(cfg.adam, stage.weights.len() + stage.bias.len());
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (gw, gb, l) = gradient(&stage, xs, targets, batch, cfg.l2);
            total += l * batch.len() as f64;
            let SoftmaxStage { weights, bias, .. } = &mut stage;
            opt.step(
                weights.iter_mut().chain(bias.iter_mut()),
                gw.into_iter().chain(gb),
            );
        }
        let mean = total / order.len() as f64;
        if !mean.is_finite() || !stage.is_finite() {
            return Err(FusionError::NonFiniteLoss {
                stage: 0,
                attribute: String::new(),
                epoch,
                loss: mean,
            });
        }
        epoch_losses.push(mean);
    }
    let stage = match &standardizer {
        Some(s) => s.fold(stage),
        None => stage,
    };
    Ok(Fit {
        stage,
        epoch_losses,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable() -> (Matrix, Vec<usize>) {
        let pts = [
            ([2.0, 1.0], 0),
            ([1.5, 2.0], 0),
            ([3.0, 0.5], 0),
            ([-1.0, -2.0], 1),
            ([-2.5, -0.5], 1),
            ([-1.0, -1.0], 1),
        ];
        let mut x = Matrix::zeros(pts.len(), 2);
        for (i, (p, _)) in pts.iter().enumerate() {
            x.row_mut(i).copy_from_slice(p);
        }
        (x, pts.iter().map(|p| p.1).collect())
    }

    fn accuracy(st: &SoftmaxStage, x: &Matrix, y: &[usize]) -> f64 {
        let p = st.forward_batch(x).unwrap();
        let hits = (0..x.rows)
            .filter(|&i| {
                let r = p.row(i);
                let arg = if r[0] >= r[1] { 0 } else { 1 };
                arg == y[i]
            })
            .count();
        hits as f64 / x.rows as f64
    }

    #[test]
    fn separable_toy_set_is_learned() {
        let (x, y) = separable();
        for standardize in [false, true] {
            let cfg = TrainConfig {
                standardize,
                ..Default::default()
            };
            let fit = train_stage(&x, &Targets::hard(&y, 2), &cfg, 7).unwrap();
            assert_eq!(accuracy(&fit.stage, &x, &y), 1.0);
        }
    }

    #[test]
    fn full_batch_loss_decreases() {
        let (x, y) = separable();
        let cfg = TrainConfig {
            batch_size: 64,
            epochs: 200,
            standardize: false,
            ..Default::default()
        };
        let fit = train_stage(&x, &Targets::hard(&y, 2), &cfg, 0).unwrap();
        assert!(fit.epoch_losses.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn one_sample_one_class_converges() {
        let mut x = Matrix::zeros(1, 2);
        x.row_mut(0).copy_from_slice(&[1.0, 0.5]);
        let cfg = TrainConfig {
            epochs: 3000,
            l2: 0.0,
            adam: AdamConfig {
                lr: 0.05,
                ..Default::default()
            },
            standardize: false,
            ..Default::default()
        };
        let fit = train_stage(&x, &Targets::hard(&[1], 3), &cfg, 0).unwrap();
        let p = fit.stage.forward(x.row(0)).unwrap();
        assert!(p[1] > 0.99);
        assert!(*fit.epoch_losses.last().unwrap() < 0.01);
    }

    #[test]
    fn seeded_training_is_deterministic() {
        let (x, y) = separable();
        let cfg = TrainConfig {
            epochs: 20,
            batch_size: 2,
            ..Default::default()
        };
        let a = train_stage(&x, &Targets::hard(&y, 2), &cfg, 3).unwrap();
        let b = train_stage(&x, &Targets::hard(&y, 2), &cfg, 3).unwrap();
        assert_eq!(a.stage, b.stage);
    }

    #[test]
    fn standardization_fold_preserves_outputs() {
        let (x, _) = separable();
        let s = Standardizer::fit(&x);
        let mut st = SoftmaxStage::zeros(2, 2);
        st.weights = vec![0.4, -0.2, 1.1, 0.3];
        st.bias = vec![0.05, -0.5];
        let xs = s.apply(&x);
        let folded = s.fold(st.clone());
        for i in 0..x.rows {
            let a = st.forward(xs.row(i)).unwrap();
            let b = folded.forward(x.row(i)).unwrap();
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn non_finite_input_is_reported() {
        let mut x = Matrix::zeros(2, 1);
        x.row_mut(0)[0] = f64::INFINITY;
        let cfg = TrainConfig {
            epochs: 2,
            standardize: false,
            ..Default::default()
        };
        let err = train_stage(&x, &Targets::hard(&[0, 1], 2), &cfg, 0).unwrap_err();
        assert!(matches!(err, FusionError::NonFiniteLoss { .. }));
    }
}
