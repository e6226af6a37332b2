//! Masked per-position attention over the convolution output.

use ndarray::{Array1, Array2};
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::rng::Rng;

/// Numerically stable softmax; `-inf` entries get exactly zero weight.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return vec![0.0; logits.len()];
    }
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Per-position multipliers for inverted dropout: `0` with probability
/// `rate`, otherwise `1/(1-rate)`.
pub fn dropout_mask(len: usize, rate: f64, rng: &mut Rng) -> Vec<f64> {
    if rate <= 0.0 {
        return vec![1.0; len];
    }
    let keep = 1.0 / (1.0 - rate);
    (0..len)
        .map(|_| if rng.random::<f64>() < rate { 0.0 } else { keep })
        .collect()
}

/// Pointwise convolution over `[Ĥ | Ĥ_t]`: `A_p = Σ_c w[c]·Ĥ(p,c) + Σ_c w[n+c]·h_t(c)`.
pub fn pointwise_scores(h: &Array2<f64>, w_pw: &Array1<f64>, h_target: &Array1<f64>) -> Result<Array1<f64>> {
    let n = h.ncols();
    if w_pw.len() != 2 * n || h_target.len() != n {
        return Err(Error::invalid(format!(
            "attention parameters sized {}/{} for hidden width {n}",
            w_pw.len(),
            h_target.len()
        )));
    }
    let target: f64 = (0..n).map(|c| w_pw[n + c] * h_target[c]).sum();
    Ok(Array1::from_shape_fn(h.nrows(), |p| {
        (0..n).map(|c| w_pw[c] * h[[p, c]]).sum::<f64>() + target
    }))
}

/// Scores after scaling by `s`, masking beyond `mask_len` and dropout.
pub fn masked_scores(a: &Array1<f64>, s_vec: &Array1<f64>, mask_len: usize, dropout: Option<&[f64]>) -> Result<Vec<f64>> {
    let len = a.len();
    if s_vec.len() != len {
        return Err(Error::invalid(format!("score scale has {} entries for {len} positions", s_vec.len())));
    }
    if mask_len == 0 || mask_len > len {
        return Err(Error::invalid(format!("mask length {mask_len} outside 1..={len}")));
    }
    if let Some(d) = dropout {
        if d.len() != len {
            return Err(Error::invalid("dropout mask length mismatch"));
        }
    }
    Ok((0..len)
        .map(|p| {
            if p >= mask_len {
                f64::NEG_INFINITY
            } else {
                a[p] * s_vec[p] * dropout.map_or(1.0, |d| d[p])
            }
        })
        .collect())
}

#[derive(Debug, Clone)]
pub struct AttentionOutput {
    /// Raw pointwise scores `A`.
    pub raw: Array1<f64>,
    /// Attention weights `a`.
    pub weights: Array1<f64>,
    /// Gated hidden matrix `H° = a ⊙ Ĥ`.
    pub gated: Array2<f64>,
}

/// Full attention block. `dropout` holds per-position multipliers (training)
/// or `None` (inference).
pub fn sparse_attention(
    h: &Array2<f64>,
    w_pw: &Array1<f64>,
    h_target: &Array1<f64>,
    s_vec: &Array1<f64>,
    mask_len: usize,
    dropout: Option<&[f64]>,
) -> Result<AttentionOutput> {
    let raw = pointwise_scores(h, w_pw, h_target)?;
    let scores = masked_scores(&raw, s_vec, mask_len, dropout)?;
    let weights = Array1::from(softmax(&scores));
    let mut gated = h.clone();
    for (mut row, &a) in gated.rows_mut().into_iter().zip(weights.iter()) {
        row *= a;
    }
    Ok(AttentionOutput { raw, weights, gated })
}
