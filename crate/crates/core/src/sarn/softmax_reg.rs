//! Multiclass logistic (softmax) regression with weight decay.
//!
//! `Θ` is `C × (f+1)`; the last column multiplies an implicit constant 1 and
//! is left out of the weight-decay penalty.

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::attention::softmax;
use super::head::PROB_FLOOR;
use crate::error::{Error, Result};

fn logits(x: ArrayView1<f64>, theta: &Array2<f64>) -> Result<Vec<f64>> {
    let f = x.len();
    if theta.ncols() != f + 1 {
        return Err(Error::invalid(format!(
            "theta has {} columns, expected {} for {f} features",
            theta.ncols(),
            f + 1
        )));
    }
    Ok(theta
        .rows()
        .into_iter()
        .map(|row| row.slice(ndarray::s![..f]).dot(&x) + row[f])
        .collect())
}

/// `p(y=j|x) = exp(θ_jᵀx̃) / Σ_l exp(θ_lᵀx̃)` with `x̃ = [x, 1]`.
pub fn softmax_reg_forward(x: ArrayView1<f64>, theta: &Array2<f64>) -> Result<Array1<f64>> {
    Ok(Array1::from(softmax(&logits(x, theta)?)))
}

/// Squared norm of `Θ` without the bias column.
pub fn weight_penalty(theta: &Array2<f64>) -> f64 {
    let f = theta.ncols() - 1;
    theta.slice(ndarray::s![.., ..f]).iter().map(|v| v * v).sum()
}

fn check_batch(x: &Array2<f64>, labels: &[usize], theta: &Array2<f64>) -> Result<()> {
    if x.nrows() == 0 {
        return Err(Error::invalid("empty batch"));
    }
    if labels.len() != x.nrows() {
        return Err(Error::invalid("label count differs from row count"));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= theta.nrows()) {
        return Err(Error::invalid(format!("label {bad} outside 0..{}", theta.nrows())));
    }
    Ok(())
}

/// Mean cross-entropy plus `(λ/2)·‖Θ‖²` over non-bias weights.
pub fn softmax_reg_cost(x: &Array2<f64>, labels: &[usize], theta: &Array2<f64>, lambda: f64) -> Result<f64> {
    check_batch(x, labels, theta)?;
    let mut total = 0.0;
    for (row, &y) in x.rows().into_iter().zip(labels) {
        let p = softmax_reg_forward(row, theta)?;
        total -= p[y].max(PROB_FLOOR).ln();
    }
    Ok(total / x.nrows() as f64 + 0.5 * lambda * weight_penalty(theta))
}

/// Gradient of [`softmax_reg_cost`] with respect to `Θ`.
pub fn softmax_reg_gradient(x: &Array2<f64>, labels: &[usize], theta: &Array2<f64>, lambda: f64) -> Result<Array2<f64>> {
    check_batch(x, labels, theta)?;
    let f = x.ncols();
    let mut grad = Array2::zeros(theta.dim());
    for (row, &y) in x.rows().into_iter().zip(labels) {
        let mut p = softmax_reg_forward(row, theta)?;
        p[y] -= 1.0;
        for (j, &pj) in p.iter().enumerate() {
            for c in 0..f {
                grad[[j, c]] += pj * row[c];
            }
            grad[[j, f]] += pj;
        }
    }
    grad /= x.nrows() as f64;
    for j in 0..theta.nrows() {
        for c in 0..f {
            grad[[j, c]] += lambda * theta[[j, c]];
        }
    }
    Ok(grad)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SoftmaxRegConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub lambda: f64,
    pub seed: u64,
}

impl Default for SoftmaxRegConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.1,
            batch_size: 32,
            lambda: 1e-4,
            seed: 0,
        }
    }
}

/// Standalone softmax-regression classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxRegression {
    pub theta: Array2<f64>,
}

impl SoftmaxRegression {
    pub fn zeros(n_features: usize, n_classes: usize) -> Self {
        Self {
            theta: Array2::zeros((n_classes, n_features + 1)),
        }
    }

    /// Mini-batch gradient descent from zero weights. Returns the model and
    /// the per-epoch full-batch cost.
    pub fn fit(x: &Array2<f64>, labels: &[usize], n_classes: usize, cfg: &SoftmaxRegConfig) -> Result<(Self, Vec<f64>)> {
        if cfg.batch_size == 0 || !(cfg.learning_rate > 0.0) {
            return Err(Error::Config("batch_size and learning_rate must be positive".into()));
        }
        let mut model = Self::zeros(x.ncols(), n_classes);
        check_batch(x, labels, &model.theta)?;
        let mut rng = crate::rng::seeded(cfg.seed);
        let mut order: Vec<usize> = (0..x.nrows()).collect();
        let mut history = Vec::with_capacity(cfg.epochs);
        for _ in 0..cfg.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(cfg.batch_size) {
                let xb = x.select(ndarray::Axis(0), chunk);
                let yb: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
                let g = softmax_reg_gradient(&xb, &yb, &model.theta, cfg.lambda)?;
                model.theta.scaled_add(-cfg.learning_rate, &g);
            }
            let cost = softmax_reg_cost(x, labels, &model.theta, cfg.lambda)?;
            if !cost.is_finite() {
                return Err(Error::numerical("softmax regression cost became non-finite"));
            }
            history.push(cost);
        }
        Ok((model, history))
    }

    pub fn predict_proba(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        let mut out = Array2::zeros((x.nrows(), self.theta.nrows()));
        for (i, row) in x.rows().into_iter().enumerate() {
            out.row_mut(i).assign(&softmax_reg_forward(row, &self.theta)?);
        }
        Ok(out)
    }

    pub fn predict(&self, x: &Array2<f64>) -> Result<Vec<usize>> {
        Ok(super::argmax_rows(&self.predict_proba(x)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn zero_theta_is_uniform() {
        let theta = Array2::zeros((3, 3));
        let p = softmax_reg_forward(array![1.0, -2.0].view(), &theta).unwrap();
        assert!(p.iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        let x = array![[1.0, 2.0], [0.0, -1.0]];
        let c = softmax_reg_cost(&x, &[0, 2], &theta, 0.0).unwrap();
        assert!((c - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn two_classes_reduce_to_sigmoid() {
        let theta = array![[0.4, -0.3, 0.2], [-0.1, 0.5, 0.05]];
        let x = array![0.7, 1.3];
        let p = softmax_reg_forward(x.view(), &theta).unwrap();
        let z: f64 = (0.4 + 0.1) * 0.7 + (-0.3 - 0.5) * 1.3 + (0.2 - 0.05);
        assert!((p[0] - 1.0 / (1.0 + (-z).exp())).abs() < 1e-12);
    }

    #[test]
    fn shift_invariance() {
        let theta = array![[0.4, -0.3, 0.2], [-0.1, 0.5, 0.05], [1.0, 0.0, -1.0]];
        let shifted = &theta + &array![[0.25, -1.5, 3.0]];
        let x = array![0.5, 0.25];
        let a = softmax_reg_forward(x.view(), &theta).unwrap();
        let b = softmax_reg_forward(x.view(), &shifted).unwrap();
        assert!(a.iter().zip(b.iter()).all(|(u, v)| (u - v).abs() < 1e-14));
    }

    #[test]
    fn zero_input_gradient_closed_form() {
        let x = Array2::zeros((4, 2));
        let labels = [0, 1, 1, 2];
        let g = softmax_reg_gradient(&x, &labels, &Array2::zeros((3, 3)), 0.0).unwrap();
        for j in 0..3 {
            let frac = labels.iter().filter(|&&l| l == j).count() as f64 / 4.0;
            assert!((g[[j, 2]] - (1.0 / 3.0 - frac)).abs() < 1e-15);
            assert_eq!(g[[j, 0]], 0.0);
        }
    }

    #[test]
    fn penalty_gradient_is_lambda_theta() {
        let x = array![[0.3, -0.2], [1.0, 0.5]];
        let theta = array![[0.4, -0.3, 0.2], [-0.1, 0.5, 0.05]];
        let g0 = softmax_reg_gradient(&x, &[0, 1], &theta, 0.0).unwrap();
        let g1 = softmax_reg_gradient(&x, &[0, 1], &theta, 0.5).unwrap();
        let diff = &g1 - &g0;
        for j in 0..2 {
            assert!((diff[[j, 0]] - 0.5 * theta[[j, 0]]).abs() < 1e-15);
            assert!((diff[[j, 1]] - 0.5 * theta[[j, 1]]).abs() < 1e-15);
            assert_eq!(diff[[j, 2]], 0.0);
        }
        let c0 = softmax_reg_cost(&x, &[0, 1], &theta, 0.0).unwrap();
        assert!(softmax_reg_cost(&x, &[0, 1], &theta, 0.5).unwrap() > c0);
    }

    #[test]
    fn gradient_matches_fd() {
        let x = array![[0.3, -0.2], [1.0, 0.5], [-0.7, 0.1]];
        let labels = [0, 1, 2];
        let theta = array![[0.4, -0.3, 0.2], [-0.1, 0.5, 0.05], [0.2, 0.2, -0.3]];
        let g = softmax_reg_gradient(&x, &labels, &theta, 0.1).unwrap();
        for idx in 0..9 {
            let (r, c) = (idx / 3, idx % 3);
            let mut a = theta.clone();
            let mut b = theta.clone();
            a[[r, c]] += 1e-6;
            b[[r, c]] -= 1e-6;
            let fd = (softmax_reg_cost(&x, &labels, &a, 0.1).unwrap()
                - softmax_reg_cost(&x, &labels, &b, 0.1).unwrap())
                / 2e-6;
            assert!((fd - g[[r, c]]).abs() < 1e-8);
        }
    }
}
