//! Sparse attention regression network for tabular rows.
//!
//! A row of `w` features is treated as a `1 × w × 1` map. The network applies
//! a factorized `1 × s` convolution ([`conv`]), masked attention over the
//! resulting positions ([`attention`]) and either a two-layer softmax head
//! trained with symmetric KL ([`head`]) or a softmax-regression head
//! ([`softmax_reg`]).

pub mod attention;
pub mod conv;
pub mod head;
pub mod model;
pub mod softmax_reg;
pub mod train;

use ndarray::Array2;

pub use attention::{softmax, sparse_attention};
pub use conv::{direct_conv, factorize_kernel, sparse_forward, ConvSpec, FactorizedKernel};
pub use head::{dkl, kl, output_head};
pub use model::{ArchConfig, Gradients, HeadKind, SarnArch, SarnModel, PARAM_NAMES};
pub use softmax_reg::{softmax_reg_cost, softmax_reg_forward, softmax_reg_gradient, SoftmaxRegConfig, SoftmaxRegression};
pub use train::{train, EpochRecord, TrainConfig, TrainHistory};

/// Row-wise argmax; ties go to the lowest index.
pub fn argmax_rows(probs: &Array2<f64>) -> Vec<usize> {
    probs
        .rows()
        .into_iter()
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};
    use rand::Rng;

    fn tiny(seed: u64, head: HeadKind, dropout: f64) -> (SarnModel, Array2<f64>, Vec<usize>) {
        let cfg = ArchConfig {
            kernel_width: 3,
            channels: 4,
            rank: 2,
            hidden: 8,
            dropout,
            reg_lambda: 1e-2,
            ..ArchConfig::default()
        };
        let arch = SarnArch::resolve(&cfg, 8, 3).unwrap();
        let mut model = SarnModel::init(arch, seed).unwrap();
        model.head = head;
        let mut rng = crate::rng::seeded(seed + 100);
        let x = Array2::from_shape_fn((5, 8), |_| rng.random_range(-1.5..1.5));
        let y = vec![0, 1, 2, 1, 0];
        (model, x, y)
    }

    fn check_gradients(model: &SarnModel, x: &Array2<f64>, y: &[usize], drops: Option<&[Vec<f64>]>) -> f64 {
        let (_, g) = model.gradients(x, y, drops).unwrap();
        let analytic = g.flatten();
        let base = model.flat_params();
        let mut worst: f64 = 0.0;
        let mut m = model.clone();
        for i in 0..base.len() {
            let mut p = base.clone();
            p[i] = base[i] + 1e-5;
            m.set_flat_params(&p).unwrap();
            let up = m.loss_with_dropout(x, y, drops).unwrap();
            p[i] = base[i] - 1e-5;
            m.set_flat_params(&p).unwrap();
            let down = m.loss_with_dropout(x, y, drops).unwrap();
            let numeric = (up - down) / 2e-5;
            let owner = {
                let mut acc = 0;
                model.params().iter().position(|t| { acc += t.len(); i < acc }).unwrap()
            };
            let numeric = if model.is_trainable(owner) { numeric } else { 0.0 };
            let denom = analytic[i].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((analytic[i] - numeric).abs() / denom);
        }
        worst
    }

    #[test]
    fn gradient_check_dkl_head() {
        for seed in 0..2 {
            let (model, x, y) = tiny(seed, HeadKind::DklHead, 0.0);
            let err = check_gradients(&model, &x, &y, None);
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    #[test]
    fn gradient_check_softmax_head_with_fixed_dropout() {
        let (model, x, y) = tiny(3, HeadKind::SoftmaxReg, 0.3);
        let mut rng = crate::rng::seeded(9);
        let drops = model.draw_dropout(x.nrows(), &mut rng).unwrap();
        let err = check_gradients(&model, &x, &y, Some(&drops));
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn gradient_check_with_mask() {
        let (mut model, x, y) = tiny(4, HeadKind::DklHead, 0.0);
        model.arch.mask_len = 3;
        assert!(check_gradients(&model, &x, &y, None) < 1e-4);
    }

    #[test]
    fn penalty_gradient_is_lambda_times_param() {
        let (mut model, x, y) = tiny(1, HeadKind::DklHead, 0.0);
        let (_, g1) = model.gradients(&x, &y, None).unwrap();
        model.arch.reg_lambda = 0.0;
        let (_, g0) = model.gradients(&x, &y, None).unwrap();
        let params = model.flat_params();
        let (a, b) = (g1.flatten(), g0.flatten());
        let theta_start = params.len() - model.theta.len();
        for i in 0..theta_start {
            assert!((a[i] - b[i] - 1e-2 * params[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn predictions_normalized_and_pure() {
        let (model, x, _) = tiny(2, HeadKind::DklHead, 0.1);
        let mut dup = x.clone();
        dup.row_mut(1).assign(&x.row(0));
        let (probs, labels) = model.predict(&dup).unwrap();
        for row in probs.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
        }
        assert_eq!(probs.row(0), probs.row(1));
        assert_eq!(labels[0], labels[1]);
        assert!(model.predict(&Array2::zeros((2, 7))).is_err());
    }

    #[test]
    fn argmax_ties_lowest() {
        assert_eq!(argmax_rows(&array![[0.5, 0.5, 0.0], [0.2, 0.3, 0.5]]), vec![0, 2]);
    }

    #[test]
    fn json_round_trip_is_exact() {
        let (model, x, _) = tiny(6, HeadKind::SoftmaxReg, 0.1);
        let back = SarnModel::from_json(&model.to_json().unwrap()).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.predict(&x).unwrap().0, model.predict(&x).unwrap().0);
        assert!(SarnModel::from_json("{}").is_err());
        let broken = model.to_json().unwrap().replace("\"version\": 1", "\"version\": 9");
        assert!(SarnModel::from_json(&broken).is_err());
    }

    #[test]
    fn zero_epochs_returns_init() {
        let (model, x, y) = tiny(0, HeadKind::DklHead, 0.1);
        let cfg = TrainConfig { epochs: 0, ..TrainConfig::default() };
        let (out, hist) = train(&x, &y, None, model.clone(), &cfg).unwrap();
        assert_eq!(out, model);
        assert!(hist.is_empty());
    }

    #[test]
    fn training_is_deterministic_and_consistent() {
        let (model, _, _) = tiny(0, HeadKind::DklHead, 0.1);
        let mut rng = crate::rng::seeded(77);
        let y: Vec<usize> = (0..60).map(|i| i % 3).collect();
        let x = Array2::from_shape_fn((60, 8), |(i, j)| (y[i] as f64 - 1.0) * (j as f64 * 0.3 - 1.0) + rng.random_range(-0.3..0.3));
        let cfg = TrainConfig { epochs: 30, batch_size: 8, learning_rate: 0.2, ..TrainConfig::default() };
        let val = (x.slice(ndarray::s![..10, ..]).to_owned(), y[..10].to_vec());
        let (m1, h1) = train(&x, &y, Some((&val.0, &val.1)), model.clone(), &cfg).unwrap();
        let (m2, h2) = train(&x, &y, Some((&val.0, &val.1)), model, &cfg).unwrap();
        assert_eq!(h1, h2);
        assert_eq!(m1, m2);
        assert_eq!(h1.len(), 30);
        assert!(h1.epochs[9].train_loss < h1.epochs[0].train_loss);
        let (_, pred) = m1.predict(&x).unwrap();
        assert_eq!(train::accuracy(&pred, &y), h1.epochs[29].train_acc);
        assert!(m1.conv.s.iter().all(|v| *v == 0.0 || v.abs() >= train::PRUNE_THRESHOLD));
    }

    #[test]
    fn history_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("history.csv");
        let hist = TrainHistory {
            epochs: vec![EpochRecord { epoch: 1, train_loss: 0.5, train_acc: 0.25, val_loss: f64::NAN, val_acc: 1.0 / 3.0 }],
        };
        hist.write_csv(&path).unwrap();
        let back = TrainHistory::read_csv(&path).unwrap();
        assert_eq!(back.epochs[0].train_loss, 0.5);
        assert!(back.epochs[0].val_loss.is_nan());
        assert_eq!(back.epochs[0].val_acc, 1.0 / 3.0);
    }
}
