//! Output head and the symmetric KL training loss.

use ndarray::{Array1, Array2};

use super::attention::softmax;
use crate::error::{Error, Result};

/// Lower clamp applied to probabilities inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct HeadOutput {
    /// Tanh activations of the first layer.
    pub hidden: Array1<f64>,
    pub logits: Array1<f64>,
    pub probs: Array1<f64>,
}

/// `softmax(Vᵀ·tanh(W_oᵀ·x + b_o) + b_v)` where `x` is the flattened gated map.
pub fn output_head(
    flat: &Array1<f64>,
    w_o: &Array2<f64>,
    b_o: &Array1<f64>,
    v: &Array2<f64>,
    b_v: &Array1<f64>,
) -> Result<HeadOutput> {
    if w_o.nrows() != flat.len() || b_o.len() != w_o.ncols() || v.nrows() != w_o.ncols() || b_v.len() != v.ncols() {
        return Err(Error::invalid(format!(
            "head shapes: input {}, W_o {:?}, b_o {}, V {:?}, b_v {}",
            flat.len(),
            w_o.dim(),
            b_o.len(),
            v.dim(),
            b_v.len()
        )));
    }
    let hidden = (w_o.t().dot(flat) + b_o).mapv(f64::tanh);
    let logits = v.t().dot(&hidden) + b_v;
    let probs = Array1::from(softmax(logits.as_slice().expect("contiguous")));
    Ok(HeadOutput { hidden, logits, probs })
}

fn check_dist(y: &[f64], yp: &[f64]) -> Result<()> {
    if y.len() != yp.len() {
        return Err(Error::invalid(format!("distribution lengths {} and {}", y.len(), yp.len())));
    }
    if y.is_empty() {
        return Err(Error::invalid("empty distribution"));
    }
    Ok(())
}

/// `Σ yᵢ·ln(yᵢ/ypᵢ)` with `yp` clamped to `PROB_FLOOR` and `0·ln 0 = 0`.
pub fn kl(y: &[f64], yp: &[f64]) -> Result<f64> {
    check_dist(y, yp)?;
    Ok(y.iter()
        .zip(yp)
        .filter(|(&a, _)| a > 0.0)
        .map(|(&a, &b)| a * (a / b.max(PROB_FLOOR)).ln())
        .sum())
}

/// `½KL(y‖yp) + ½KL(yp‖y)`. Both arguments are clamped so the result is
/// symmetric bit-for-bit.
pub fn dkl(y: &[f64], yp: &[f64]) -> Result<f64> {
    check_dist(y, yp)?;
    let total: f64 = y
        .iter()
        .zip(yp)
        .map(|(&a, &b)| {
            let (a, b) = (a.max(PROB_FLOOR), b.max(PROB_FLOOR));
            (a - b) * (a.ln() - b.ln())
        })
        .sum();
    Ok(0.5 * total)
}

/// Gradient of `dkl(y, p)` with respect to `p`.
pub fn dkl_grad(y: &[f64], p: &[f64]) -> Vec<f64> {
    y.iter()
        .zip(p)
        .map(|(&a, &b)| {
            if b < PROB_FLOOR {
                return 0.0;
            }
            let a = a.max(PROB_FLOOR);
            0.5 * (1.0 - a / b + (b / a).ln())
        })
        .collect()
}

/// `(1-ε)·onehot + ε/C`.
pub fn smooth_label(label: usize, n_classes: usize, eps: f64) -> Vec<f64> {
    let mut y = vec![eps / n_classes as f64; n_classes];
    y[label] += 1.0 - eps;
    y
}

/// Mean DKL over a batch plus `(λ/2)·penalty_sq`, where `penalty_sq` is the
/// squared norm of the penalized parameters.
pub fn loss(y_batch: &[Vec<f64>], yp_batch: &[Vec<f64>], penalty_sq: f64, lambda: f64) -> Result<f64> {
    if y_batch.is_empty() {
        return Err(Error::invalid("empty batch"));
    }
    if y_batch.len() != yp_batch.len() {
        return Err(Error::invalid("target and prediction batch sizes differ"));
    }
    let mut total = 0.0;
    for (y, yp) in y_batch.iter().zip(yp_batch) {
        total += dkl(y, yp)?;
    }
    Ok(total / y_batch.len() as f64 + 0.5 * lambda * penalty_sq)
}
