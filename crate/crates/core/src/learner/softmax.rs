use serde::{Deserialize, Serialize};

use crate::error::{FusionError, Result};
use crate::features::Matrix;

/// One stage h^[t]: logits = Wᵀx + bias with W stored `b × ρ` row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxStage {
    pub b: usize,
    pub rho: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl SoftmaxStage {
    pub fn zeros(b: usize, rho: usize) -> Self {
        Self {
            b,
            rho,
            weights: vec![0.0; b * rho],
            bias: vec![0.0; rho],
        }
    }

    pub fn w(&self, feature: usize, class: usize) -> f64 {
        self.weights[feature * self.rho + class]
    }

    fn logits_into(&self, x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.bias);
        for (f, &xf) in x.iter().enumerate() {
            if xf != 0.0 {
                let row = &self.weights[f * self.rho..(f + 1) * self.rho];
                for (o, w) in out.iter_mut().zip(row) {
                    *o += xf * w;
                }
            }
        }
    }

    pub fn logits(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let mut out = vec![0.0; self.rho];
        self.logits_into(x, &mut out);
        Ok(out)
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut z = self.logits(x)?;
        softmax_in_place(&mut z);
        Ok(z)
    }

    /// Distributions for every row of `x`.
    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols != self.b {
            return Err(FusionError::DimensionMismatch {
                expected: self.b,
                found: x.cols,
            });
        }
        let mut out = Matrix::zeros(x.rows, self.rho);
        for i in 0..x.rows {
            let o = out.row_mut(i);
            self.logits_into(x.row(i), o);
            softmax_in_place(o);
        }
        Ok(out)
    }

    pub fn is_finite(&self) -> bool {
        self.weights.iter().chain(&self.bias).all(|v| v.is_finite())
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.b {
            return Err(FusionError::DimensionMismatch {
                expected: self.b,
                found: x.len(),
            });
        }
        Ok(())
    }
}

pub fn softmax_in_place(z: &mut [f64]) {
    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in z.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in z.iter_mut() {
        *v /= sum;
    }
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let mut out = z.to_vec();
    softmax_in_place(&mut out);
    out
}

/// Training targets: one distribution per sample, with an optional sample weight.
#[derive(Debug, Clone, PartialEq)]
pub struct Targets {
    pub dist: Matrix,
    pub weight: Option<Vec<f64>>,
}

impl Targets {
    pub fn hard(labels: &[usize], rho: usize) -> Self {
        let mut dist = Matrix::zeros(labels.len(), rho);
        for (i, &y) in labels.iter().enumerate() {
            dist.row_mut(i)[y] = 1.0;
        }
        Self { dist, weight: None }
    }

    pub fn with_weights(mut self, w: Vec<f64>) -> Self {
        self.weight = Some(w);
        self
    }

    pub fn len(&self) -> usize {
        self.dist.rows
    }

    pub fn is_empty(&self) -> bool {
        self.dist.rows == 0
    }

    pub(crate) fn weight(&self, i: usize) -> f64 {
        self.weight.as_ref().map_or(1.0, |w| w[i])
    }
}

/// Mean weighted cross-entropy over `rows` plus λ‖W‖².
pub fn loss(stage: &SoftmaxStage, x: &Matrix, t: &Targets, rows: &[usize], lambda: f64) -> f64 {
    let mut z = vec![0.0; stage.rho];
    let mut total = 0.0;
    for &i in rows {
        stage.logits_into(x.row(i), &mut z);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let ce: f64 = t
            .dist
            .row(i)
            .iter()
            .zip(&z)
            .filter(|(q, _)| **q > 0.0)
            .map(|(q, zi)| q * (lse - zi))
            .sum();
        total += t.weight(i) * ce;
    }
    total / rows.len() as f64 + lambda * stage.weights.iter().map(|w| w * w).sum::<f64>()
}

/// Gradient of [`loss`] with respect to (W, bias). Also returns the loss.
pub fn gradient(
    stage: &SoftmaxStage,
    x: &Matrix,
    t: &Targets,
    rows: &[usize],
    lambda: f64,
) -> (Vec<f64>, Vec<f64>, f64) {
    let rho = stage.rho;
    let mut gw: Vec<f64> = stage.weights.iter().map(|w| 2.0 * lambda * w).collect();
    let mut gb = vec![0.0; rho];
    let mut z = vec![0.0; rho];
    let mut delta = vec![0.0; rho];
    let scale = 1.0 / rows.len() as f64;
    let mut ce_total = 0.0;
    for &i in rows {
        let xi = x.row(i);
        stage.logits_into(xi, &mut z);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        let q = t.dist.row(i);
        let wi = t.weight(i);
        let qsum: f64 = q.iter().sum();
        for r in 0..rho {
            let p = (z[r] - lse).exp();
            delta[r] = wi * scale * (qsum * p - q[r]);
            if q[r] > 0.0 {
                ce_total += wi * q[r] * (lse - z[r]);
            }
        }
        for (g, d) in gb.iter_mut().zip(&delta) {
            *g += d;
        }
        for (f, &xf) in xi.iter().enumerate() {
            if xf != 0.0 {
                for (g, d) in gw[f * rho..(f + 1) * rho].iter_mut().zip(&delta) {
                    *g += xf * d;
                }
            }
        }
    }
    let reg = lambda * stage.weights.iter().map(|w| w * w).sum::<f64>();
    (gw, gb, ce_total * scale + reg)
}
