//! The full network: factorized conv → attention → head, with backprop.

use std::path::Path;

use ndarray::{Array1, Array2, Array3, Array4};
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::attention::{dropout_mask, sparse_attention};
use super::conv::{sparse_forward_full, ConvSpec, FactorizedKernel};
use super::head::{dkl, dkl_grad, output_head, smooth_label, PROB_FLOOR};
use super::softmax_reg::softmax_reg_forward;
use crate::error::{Error, Result};

pub const MODEL_FORMAT: &str = "ummaso-sarn";
pub const MODEL_VERSION: u32 = 1;

/// Which head produces class probabilities and drives training.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadKind {
    /// Two dense layers and softmax, trained with symmetric KL.
    #[default]
    DklHead,
    /// Softmax regression on the first dense layer, trained with cross-entropy.
    SoftmaxReg,
}

/// Architecture and regularization settings independent of the data shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArchConfig {
    pub kernel_width: usize,
    pub channels: usize,
    pub rank: usize,
    pub hidden: usize,
    /// Number of unmasked attention positions; `None` keeps all.
    pub mask_len: Option<usize>,
    pub dropout: f64,
    pub reg_lambda: f64,
    pub label_smoothing: f64,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            kernel_width: 3,
            channels: 8,
            rank: 2,
            hidden: 16,
            mask_len: None,
            dropout: 0.1,
            reg_lambda: 1e-4,
            label_smoothing: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SarnArch {
    pub spec: ConvSpec,
    pub hidden: usize,
    pub n_classes: usize,
    pub mask_len: usize,
    pub dropout: f64,
    pub reg_lambda: f64,
    pub label_smoothing: f64,
}

impl SarnArch {
    /// Resolves a config against an input width, shrinking the kernel and
    /// rank when the input is narrower than the configured kernel.
    pub fn resolve(cfg: &ArchConfig, input_width: usize, n_classes: usize) -> Result<Self> {
        if input_width == 0 {
            return Err(Error::invalid("input width must be positive"));
        }
        if n_classes < 2 {
            return Err(Error::invalid("at least two classes are required"));
        }
        if cfg.kernel_width == 0 || cfg.channels == 0 || cfg.rank == 0 || cfg.hidden == 0 {
            return Err(Error::Config("kernel_width, channels, rank and hidden must be positive".into()));
        }
        if !(0.0..1.0).contains(&cfg.dropout) {
            return Err(Error::Config(format!("dropout {} outside [0, 1)", cfg.dropout)));
        }
        if !(cfg.reg_lambda >= 0.0) || !cfg.reg_lambda.is_finite() {
            return Err(Error::Config("reg_lambda must be finite and non-negative".into()));
        }
        if !(0.0..1.0).contains(&cfg.label_smoothing) {
            return Err(Error::Config("label_smoothing outside [0, 1)".into()));
        }
        let kw = cfg.kernel_width.min(input_width);
        let rank = cfg.rank.min(kw).min(cfg.channels);
        let spec = ConvSpec::tabular(input_width, kw, cfg.channels, rank);
        spec.validate()?;
        let positions = spec.positions();
        let mask_len = cfg.mask_len.unwrap_or(positions);
        if mask_len == 0 || mask_len > positions {
            return Err(Error::Config(format!("mask_len {mask_len} outside 1..={positions}")));
        }
        Ok(Self {
            spec,
            hidden: cfg.hidden,
            n_classes,
            mask_len,
            dropout: cfg.dropout,
            reg_lambda: cfg.reg_lambda,
            label_smoothing: cfg.label_smoothing,
        })
    }

    pub fn input_width(&self) -> usize {
        self.spec.width
    }

    pub fn positions(&self) -> usize {
        self.spec.positions()
    }
}

/// Parameter tensor names in flattening order.
pub const PARAM_NAMES: [&str; 11] = ["P", "S", "Q", "W_pw", "H_t", "s", "W_o", "b_o", "V", "b_v", "Theta"];

#[derive(Debug, Clone, PartialEq)]
pub struct SarnModel {
    pub arch: SarnArch,
    pub head: HeadKind,
    pub conv: FactorizedKernel,
    /// Pointwise-conv weights over `[Ĥ | Ĥ_t]`, length `2n`.
    pub w_pw: Array1<f64>,
    /// Learned target hidden row, broadcast across positions.
    pub h_target: Array1<f64>,
    /// Per-position score scale.
    pub s_vec: Array1<f64>,
    /// `(positions·n) × f`
    pub w_o: Array2<f64>,
    pub b_o: Array1<f64>,
    /// `f × C`
    pub v: Array2<f64>,
    pub b_v: Array1<f64>,
    /// `C × (f+1)`, bias last.
    pub theta: Array2<f64>,
}

/// Gradients in [`PARAM_NAMES`] order, each flattened row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub tensors: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn flatten(&self) -> Vec<f64> {
        self.tensors.concat()
    }
}

/// Per-sample forward intermediates.
struct Trace {
    input: Array3<f64>,
    mixed: Array3<f64>,
    basis: Array4<f64>,
    h: Array2<f64>,
    raw: Array1<f64>,
    weights: Array1<f64>,
    flat: Array1<f64>,
    hidden: Array1<f64>,
    probs: Array1<f64>,
    drop: Option<Vec<f64>>,
}

fn normal_array<D: ndarray::Dimension, Sh: ndarray::ShapeBuilder<Dim = D>>(
    shape: Sh,
    std: f64,
    rng: &mut crate::rng::Rng,
) -> ndarray::Array<f64, D> {
    let dist = Normal::new(0.0, std).expect("positive std");
    ndarray::Array::from_shape_simple_fn(shape, || dist.sample(rng))
}

impl SarnModel {
    /// Seeded initialization. `P` starts near the identity; `S`/`Q` come from
    /// a truncated SVD of a random initial kernel.
    pub fn init(arch: SarnArch, seed: u64) -> Result<Self> {
        let spec = arch.spec;
        let (m, n, f, c, l) = (spec.in_channels, spec.out_channels, arch.hidden, arch.n_classes, spec.positions());
        let mut rng = crate::rng::seeded(seed);
        let fan_in = (spec.kernel_height * spec.kernel_width * m) as f64;
        let kernel: Array4<f64> = normal_array(
            (spec.kernel_height, spec.kernel_width, m, n),
            1.0 / fan_in.sqrt(),
            &mut rng,
        );
        let p = Array2::from_shape_fn((m, m), |(i, j)| {
            let noise = rng.random_range(-1e-2..1e-2);
            if i == j { 1.0 + noise } else { noise }
        });
        let conv = FactorizedKernel::from_kernel(&kernel, p, spec.rank)?;
        Ok(Self {
            conv,
            w_pw: normal_array(2 * n, 1.0 / ((2 * n) as f64).sqrt(), &mut rng),
            h_target: normal_array(n, 0.1, &mut rng),
            s_vec: Array1::ones(l),
            w_o: normal_array((l * n, f), 1.0 / ((l * n) as f64).sqrt(), &mut rng),
            b_o: Array1::zeros(f),
            v: normal_array((f, c), 1.0 / (f as f64).sqrt(), &mut rng),
            b_v: Array1::zeros(c),
            theta: normal_array((c, f + 1), 1.0 / (f as f64).sqrt(), &mut rng),
            head: HeadKind::default(),
            arch,
        })
    }

    pub fn n_classes(&self) -> usize {
        self.arch.n_classes
    }

    pub fn input_width(&self) -> usize {
        self.arch.input_width()
    }

    pub fn params(&self) -> [&[f64]; 11] {
        fn sl(a: Option<&[f64]>) -> &[f64] {
            a.expect("standard layout")
        }
        [
            sl(self.conv.p.as_slice()),
            sl(self.conv.s.as_slice()),
            sl(self.conv.q.as_slice()),
            sl(self.w_pw.as_slice()),
            sl(self.h_target.as_slice()),
            sl(self.s_vec.as_slice()),
            sl(self.w_o.as_slice()),
            sl(self.b_o.as_slice()),
            sl(self.v.as_slice()),
            sl(self.b_v.as_slice()),
            sl(self.theta.as_slice()),
        ]
    }

    pub fn params_mut(&mut self) -> [&mut [f64]; 11] {
        fn sl(a: Option<&mut [f64]>) -> &mut [f64] {
            a.expect("standard layout")
        }
        [
            sl(self.conv.p.as_slice_mut()),
            sl(self.conv.s.as_slice_mut()),
            sl(self.conv.q.as_slice_mut()),
            sl(self.w_pw.as_slice_mut()),
            sl(self.h_target.as_slice_mut()),
            sl(self.s_vec.as_slice_mut()),
            sl(self.w_o.as_slice_mut()),
            sl(self.b_o.as_slice_mut()),
            sl(self.v.as_slice_mut()),
            sl(self.b_v.as_slice_mut()),
            sl(self.theta.as_slice_mut()),
        ]
    }

    fn shapes(&self) -> [Vec<usize>; 11] {
        [
            self.conv.p.shape().to_vec(),
            self.conv.s.shape().to_vec(),
            self.conv.q.shape().to_vec(),
            self.w_pw.shape().to_vec(),
            self.h_target.shape().to_vec(),
            self.s_vec.shape().to_vec(),
            self.w_o.shape().to_vec(),
            self.b_o.shape().to_vec(),
            self.v.shape().to_vec(),
            self.b_v.shape().to_vec(),
            self.theta.shape().to_vec(),
        ]
    }

    /// Whether tensor `idx` (in [`PARAM_NAMES`] order) is trained by the active head.
    pub fn is_trainable(&self, idx: usize) -> bool {
        match self.head {
            HeadKind::DklHead => idx != 10,
            HeadKind::SoftmaxReg => idx != 8 && idx != 9,
        }
    }

    pub fn flat_params(&self) -> Vec<f64> {
        self.params().concat()
    }

    pub fn set_flat_params(&mut self, values: &[f64]) -> Result<()> {
        let total: usize = self.params().iter().map(|p| p.len()).sum();
        if values.len() != total {
            return Err(Error::invalid(format!("expected {total} parameters, got {}", values.len())));
        }
        let mut offset = 0;
        for t in self.params_mut() {
            let len = t.len();
            t.copy_from_slice(&values[offset..offset + len]);
            offset += len;
        }
        Ok(())
    }

    /// Squared norm of all penalized parameters: every trainable tensor,
    /// except that the softmax-regression bias column is exempt.
    pub fn penalty_sq(&self) -> f64 {
        let mut total = 0.0;
        for (idx, t) in self.params().iter().enumerate() {
            if !self.is_trainable(idx) {
                continue;
            }
            if idx == 10 {
                total += super::softmax_reg::weight_penalty(&self.theta);
            } else {
                total += t.iter().map(|v| v * v).sum::<f64>();
            }
        }
        total
    }

    fn check_row(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_width() {
            return Err(Error::invalid(format!(
                "model expects {} features, got {}",
                self.input_width(),
                x.len()
            )));
        }
        Ok(())
    }

    fn forward(&self, x: &[f64], drop: Option<Vec<f64>>) -> Result<Trace> {
        self.check_row(x)?;
        let spec = self.arch.spec;
        let input = Array3::from_shape_fn((spec.height, spec.width, spec.in_channels), |(y, c, _)| x[y * spec.width + c]);
        let sf = sparse_forward_full(&input, &self.conv)?;
        let (oh, ow, n) = sf.output.dim();
        let h = sf.output.into_shape_with_order((oh * ow, n)).map_err(|e| Error::numerical(e.to_string()))?;
        let att = sparse_attention(&h, &self.w_pw, &self.h_target, &self.s_vec, self.arch.mask_len, drop.as_deref())?;
        let flat = Array1::from_iter(att.gated.iter().cloned());
        let (hidden, probs) = match self.head {
            HeadKind::DklHead => {
                let out = output_head(&flat, &self.w_o, &self.b_o, &self.v, &self.b_v)?;
                (out.hidden, out.probs)
            }
            HeadKind::SoftmaxReg => {
                let hidden = (self.w_o.t().dot(&flat) + &self.b_o).mapv(f64::tanh);
                let probs = softmax_reg_forward(hidden.view(), &self.theta)?;
                (hidden, probs)
            }
        };
        Ok(Trace {
            input,
            mixed: sf.mixed,
            basis: sf.basis,
            h,
            raw: att.raw,
            weights: att.weights,
            flat,
            hidden,
            probs,
            drop,
        })
    }

    /// Class probabilities for one row (inference mode).
    pub fn predict_row(&self, x: &[f64]) -> Result<Array1<f64>> {
        Ok(self.forward(x, None)?.probs)
    }

    /// Per-sample data loss for the active head.
    fn sample_loss(&self, probs: &Array1<f64>, label: usize) -> Result<f64> {
        match self.head {
            HeadKind::DklHead => {
                let y = smooth_label(label, self.n_classes(), self.arch.label_smoothing);
                dkl(&y, probs.as_slice().expect("contiguous"))
            }
            HeadKind::SoftmaxReg => Ok(-probs[label].max(PROB_FLOOR).ln()),
        }
    }

    fn check_batch(&self, x: &Array2<f64>, labels: &[usize]) -> Result<()> {
        if x.nrows() == 0 {
            return Err(Error::invalid("empty batch"));
        }
        if x.nrows() != labels.len() {
            return Err(Error::invalid("label count differs from row count"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= self.n_classes()) {
            return Err(Error::invalid(format!("label {bad} outside 0..{}", self.n_classes())));
        }
        Ok(())
    }

    /// Regularized loss in inference mode (no dropout).
    pub fn loss(&self, x: &Array2<f64>, labels: &[usize]) -> Result<f64> {
        self.loss_with_dropout(x, labels, None)
    }

    /// Loss with the given per-sample dropout multipliers (`None` = off).
    pub fn loss_with_dropout(&self, x: &Array2<f64>, labels: &[usize], drops: Option<&[Vec<f64>]>) -> Result<f64> {
        self.check_batch(x, labels)?;
        let mut total = 0.0;
        for (i, (row, &y)) in x.rows().into_iter().zip(labels).enumerate() {
            let row: Vec<f64> = row.iter().cloned().collect();
            let t = self.forward(&row, drops.map(|d| d[i].clone()))?;
            total += self.sample_loss(&t.probs, y)?;
        }
        Ok(total / x.nrows() as f64 + 0.5 * self.arch.reg_lambda * self.penalty_sq())
    }

    /// Draws one dropout mask per row.
    pub fn draw_dropout(&self, rows: usize, rng: &mut crate::rng::Rng) -> Option<Vec<Vec<f64>>> {
        if self.arch.dropout <= 0.0 {
            return None;
        }
        Some((0..rows).map(|_| dropout_mask(self.arch.positions(), self.arch.dropout, rng)).collect())
    }

    /// Loss and exact gradients for a batch with fixed dropout masks.
    pub fn gradients(&self, x: &Array2<f64>, labels: &[usize], drops: Option<&[Vec<f64>]>) -> Result<(f64, Gradients)> {
        self.check_batch(x, labels)?;
        let spec = self.arch.spec;
        let (m, n, q1) = (spec.in_channels, spec.out_channels, spec.rank);
        let (kh, kw) = (spec.kernel_height, spec.kernel_width);
        let (oh, ow) = (spec.output_height(), spec.output_width());
        let (f, c, l) = (self.arch.hidden, self.n_classes(), spec.positions());
        let batch = x.nrows() as f64;

        let mut d_p = Array2::<f64>::zeros(self.conv.p.dim());
        let mut d_s = Array3::<f64>::zeros(self.conv.s.dim());
        let mut d_q = Array4::<f64>::zeros(self.conv.q.dim());
        let mut d_wpw = Array1::<f64>::zeros(2 * n);
        let mut d_ht = Array1::<f64>::zeros(n);
        let mut d_svec = Array1::<f64>::zeros(l);
        let mut d_wo = Array2::<f64>::zeros((l * n, f));
        let mut d_bo = Array1::<f64>::zeros(f);
        let mut d_v = Array2::<f64>::zeros((f, c));
        let mut d_bv = Array1::<f64>::zeros(c);
        let mut d_theta = Array2::<f64>::zeros((c, f + 1));
        let mut data_loss = 0.0;

        for (idx, (row, &label)) in x.rows().into_iter().zip(labels).enumerate() {
            let row: Vec<f64> = row.iter().cloned().collect();
            let t = self.forward(&row, drops.map(|d| d[idx].clone()))?;
            let sample = self.sample_loss(&t.probs, label)?;
            if !sample.is_finite() {
                return Err(Error::numerical(format!("non-finite loss in output layer (row {idx})")));
            }
            data_loss += sample;

            // Output layer.
            let probs = t.probs.as_slice().expect("contiguous");
            let d_hidden: Array1<f64> = match self.head {
                HeadKind::DklHead => {
                    let y = smooth_label(label, c, self.arch.label_smoothing);
                    let g: Vec<f64> = dkl_grad(&y, probs).into_iter().map(|v| v / batch).collect();
                    let pg: f64 = probs.iter().zip(&g).map(|(p, g)| p * g).sum();
                    let dz = Array1::from_shape_fn(c, |j| probs[j] * (g[j] - pg));
                    for a in 0..f {
                        for j in 0..c {
                            d_v[[a, j]] += t.hidden[a] * dz[j];
                        }
                    }
                    d_bv += &dz;
                    self.v.dot(&dz)
                }
                HeadKind::SoftmaxReg => {
                    let mut dz = t.probs.clone();
                    dz[label] -= 1.0;
                    dz /= batch;
                    for j in 0..c {
                        for a in 0..f {
                            d_theta[[j, a]] += dz[j] * t.hidden[a];
                        }
                        d_theta[[j, f]] += dz[j];
                    }
                    Array1::from_shape_fn(f, |a| (0..c).map(|j| dz[j] * self.theta[[j, a]]).sum())
                }
            };

            // First dense layer.
            let d_pre = &d_hidden * &t.hidden.mapv(|h| 1.0 - h * h);
            for r in 0..l * n {
                let fr = t.flat[r];
                if fr != 0.0 {
                    for a in 0..f {
                        d_wo[[r, a]] += fr * d_pre[a];
                    }
                }
            }
            d_bo += &d_pre;
            let d_flat = self.w_o.dot(&d_pre);

            // Attention.
            let mut d_h = Array2::<f64>::zeros((l, n));
            let mut d_a = Array1::<f64>::zeros(l);
            for p in 0..l {
                for ch in 0..n {
                    let g = d_flat[p * n + ch];
                    d_a[p] += g * t.h[[p, ch]];
                    d_h[[p, ch]] += t.weights[p] * g;
                }
            }
            let mean: f64 = (0..l).map(|p| t.weights[p] * d_a[p]).sum();
            for p in 0..self.arch.mask_len {
                let d_score = t.weights[p] * (d_a[p] - mean);
                let r = t.drop.as_ref().map_or(1.0, |d| d[p]);
                let d_raw = d_score * self.s_vec[p] * r;
                d_svec[p] += d_score * t.raw[p] * r;
                for ch in 0..n {
                    d_wpw[ch] += d_raw * t.h[[p, ch]];
                    d_wpw[n + ch] += d_raw * self.h_target[ch];
                    d_ht[ch] += d_raw * self.w_pw[n + ch];
                    d_h[[p, ch]] += d_raw * self.w_pw[ch];
                }
            }

            // Factorized convolution.
            let mut d_t = Array4::<f64>::zeros((m, oh, ow, q1));
            for y in 0..oh {
                for xx in 0..ow {
                    let p = y * ow + xx;
                    for j in 0..n {
                        let g = d_h[[p, j]];
                        for i in 0..m {
                            for k in 0..q1 {
                                d_s[[i, k, j]] += g * t.basis[[i, y, xx, k]];
                                d_t[[i, y, xx, k]] += g * self.conv.s[[i, k, j]];
                            }
                        }
                    }
                }
            }
            let mut d_j = Array3::<f64>::zeros(t.mixed.dim());
            for i in 0..m {
                for y in 0..oh {
                    for xx in 0..ow {
                        for k in 0..q1 {
                            let g = d_t[[i, y, xx, k]];
                            for u in 0..kh {
                                for v in 0..kw {
                                    d_q[[i, u, v, k]] += g * t.mixed[[y + u, xx + v, i]];
                                    d_j[[y + u, xx + v, i]] += g * self.conv.q[[i, u, v, k]];
                                }
                            }
                        }
                    }
                }
            }
            let (h_in, w_in, _) = t.input.dim();
            for y in 0..h_in {
                for xx in 0..w_in {
                    for i in 0..m {
                        for k in 0..m {
                            d_p[[i, k]] += d_j[[y, xx, i]] * t.input[[y, xx, k]];
                        }
                    }
                }
            }
        }

        let mut tensors = vec![
            d_p.into_raw_vec_and_offset().0,
            d_s.into_raw_vec_and_offset().0,
            d_q.into_raw_vec_and_offset().0,
            d_wpw.to_vec(),
            d_ht.to_vec(),
            d_svec.to_vec(),
            d_wo.into_raw_vec_and_offset().0,
            d_bo.to_vec(),
            d_v.into_raw_vec_and_offset().0,
            d_bv.to_vec(),
            d_theta.into_raw_vec_and_offset().0,
        ];
        // Weight decay.
        let lambda = self.arch.reg_lambda;
        let params = self.params();
        for (idx, g) in tensors.iter_mut().enumerate() {
            if !self.is_trainable(idx) {
                g.iter_mut().for_each(|v| *v = 0.0);
                continue;
            }
            for (pos, (gv, &pv)) in g.iter_mut().zip(params[idx]).enumerate() {
                if idx == 10 && pos % (f + 1) == f {
                    continue;
                }
                *gv += lambda * pv;
            }
        }
        let loss = data_loss / batch + 0.5 * lambda * self.penalty_sq();
        if !loss.is_finite() {
            return Err(Error::numerical("non-finite batch loss"));
        }
        Ok((loss, Gradients { tensors }))
    }

    /// In-place gradient step on trainable tensors.
    pub fn apply_gradients(&mut self, grads: &Gradients, lr: f64) {
        let head = self.head;
        for (idx, (p, g)) in self.params_mut().into_iter().zip(&grads.tensors).enumerate() {
            let trainable = match head {
                HeadKind::DklHead => idx != 10,
                HeadKind::SoftmaxReg => idx != 8 && idx != 9,
            };
            if trainable {
                for (pv, gv) in p.iter_mut().zip(g) {
                    *pv -= lr * gv;
                }
            }
        }
    }

    pub fn predict_proba(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        if x.ncols() != self.input_width() {
            return Err(Error::invalid(format!(
                "model expects {} features, got {}",
                self.input_width(),
                x.ncols()
            )));
        }
        let mut out = Array2::zeros((x.nrows(), self.n_classes()));
        for (i, row) in x.rows().into_iter().enumerate() {
            let row: Vec<f64> = row.iter().cloned().collect();
            out.row_mut(i).assign(&self.predict_row(&row)?);
        }
        Ok(out)
    }

    /// Probabilities and argmax labels (ties go to the lowest class index).
    pub fn predict(&self, x: &Array2<f64>) -> Result<(Array2<f64>, Vec<usize>)> {
        let probs = self.predict_proba(x)?;
        let labels = super::argmax_rows(&probs);
        Ok((probs, labels))
    }

    pub fn to_json(&self) -> Result<String> {
        let shapes = self.shapes();
        let doc = ModelDoc {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            arch: self.arch.clone(),
            head: self.head,
            reconstruction_error: self.conv.reconstruction_error.clone(),
            tensors: PARAM_NAMES
                .iter()
                .zip(self.params())
                .zip(shapes)
                .map(|((name, data), shape)| TensorDoc {
                    name: name.to_string(),
                    shape,
                    data: data.to_vec(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).map_err(|e| Error::invalid(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(text).map_err(|e| Error::Schema(format!("model document: {e}")))?;
        if doc.format != MODEL_FORMAT {
            return Err(Error::Schema(format!("unexpected model format {:?}", doc.format)));
        }
        if doc.version != MODEL_VERSION {
            return Err(Error::Schema(format!("unsupported model version {}", doc.version)));
        }
        let spec = doc.arch.spec;
        spec.validate().map_err(|e| Error::Schema(e.to_string()))?;
        if doc.arch.n_classes < 2 || doc.arch.hidden == 0 || doc.arch.mask_len == 0 || doc.arch.mask_len > spec.positions() {
            return Err(Error::Schema("inconsistent architecture".into()));
        }
        if spec.height != 1 || spec.in_channels != 1 || spec.kernel_height != 1 {
            return Err(Error::Schema("only tabular (1-row, 1-channel) models are supported".into()));
        }
        let mut model = Self::zeroed(doc.arch, doc.head);
        model.conv.reconstruction_error = doc.reconstruction_error;
        if doc.tensors.len() != PARAM_NAMES.len() {
            return Err(Error::Schema(format!("expected {} tensors, found {}", PARAM_NAMES.len(), doc.tensors.len())));
        }
        let shapes = model.shapes();
        for ((t, name), shape) in doc.tensors.iter().zip(PARAM_NAMES).zip(shapes.iter()) {
            if t.name != name || &t.shape != shape || t.data.len() != shape.iter().product::<usize>() {
                return Err(Error::Schema(format!("tensor {name}: expected shape {shape:?}")));
            }
            if t.data.iter().any(|v| !v.is_finite()) {
                return Err(Error::Schema(format!("tensor {name} contains non-finite values")));
            }
        }
        for (dst, t) in model.params_mut().into_iter().zip(&doc.tensors) {
            dst.copy_from_slice(&t.data);
        }
        Ok(model)
    }

    fn zeroed(arch: SarnArch, head: HeadKind) -> Self {
        let spec = arch.spec;
        let (m, n, f, c, l) = (spec.in_channels, spec.out_channels, arch.hidden, arch.n_classes, spec.positions());
        Self {
            conv: FactorizedKernel {
                p: Array2::zeros((m, m)),
                s: Array3::zeros((m, spec.rank, n)),
                q: Array4::zeros((m, spec.kernel_height, spec.kernel_width, spec.rank)),
                reconstruction_error: vec![0.0; m],
            },
            w_pw: Array1::zeros(2 * n),
            h_target: Array1::zeros(n),
            s_vec: Array1::zeros(l),
            w_o: Array2::zeros((l * n, f)),
            b_o: Array1::zeros(f),
            v: Array2::zeros((f, c)),
            b_v: Array1::zeros(c),
            theta: Array2::zeros((c, f + 1)),
            head,
            arch,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorDoc {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    format: String,
    version: u32,
    arch: SarnArch,
    head: HeadKind,
    reconstruction_error: Vec<f64>,
    tensors: Vec<TensorDoc>,
}
