//! Mini-batch gradient descent with per-epoch history.

use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::model::{HeadKind, SarnModel};
use crate::error::{Error, Result};

/// Entries of `S` below this magnitude are zeroed after the last epoch.
pub const PRUNE_THRESHOLD: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
    pub loss_head: HeadKind,
    pub record_history: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 200,
            learning_rate: 0.05,
            batch_size: 32,
            seed: 0,
            loss_head: HeadKind::DklHead,
            record_history: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning_rate must be positive and finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    /// NaN when no validation data was given.
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainHistory {
    pub epochs: Vec<EpochRecord>,
}

impl TrainHistory {
    pub fn len(&self) -> usize {
        self.epochs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.epochs.is_empty()
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(["epoch", "train_loss", "train_acc", "val_loss", "val_acc"])
            .map_err(|e| csv_err(path, e))?;
        for r in &self.epochs {
            w.write_record([
                r.epoch.to_string(),
                r.train_loss.to_string(),
                r.train_acc.to_string(),
                r.val_loss.to_string(),
                r.val_acc.to_string(),
            ])
            .map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
        let header = r.headers().map_err(|e| csv_err(path, e))?.clone();
        if header.iter().collect::<Vec<_>>() != ["epoch", "train_loss", "train_acc", "val_loss", "val_acc"] {
            return Err(Error::Schema(format!("{}: unexpected history header", path.display())));
        }
        let mut epochs = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| csv_err(path, e))?;
            let field = |c: usize| -> Result<f64> {
                rec.get(c).and_then(|v| v.parse::<f64>().ok()).ok_or_else(|| Error::Parse {
                    path: path.to_path_buf(),
                    row: i + 2,
                    column: c + 1,
                    message: "expected a number".into(),
                })
            };
            let epoch = rec.get(0).and_then(|v| v.parse::<usize>().ok()).ok_or_else(|| Error::Parse {
                path: path.to_path_buf(),
                row: i + 2,
                column: 1,
                message: "expected an epoch number".into(),
            })?;
            epochs.push(EpochRecord {
                epoch,
                train_loss: field(1)?,
                train_acc: field(2)?,
                val_loss: field(3)?,
                val_acc: field(4)?,
            });
        }
        Ok(Self { epochs })
    }
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Schema(format!("{}: {other:?}", path.display())),
    }
}

pub fn accuracy(pred: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return f64::NAN;
    }
    pred.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

fn evaluate(model: &SarnModel, x: &Array2<f64>, y: &[usize]) -> Result<(f64, f64)> {
    let loss = model.loss(x, y)?;
    let (_, pred) = model.predict(x)?;
    Ok((loss, accuracy(&pred, y)))
}

/// Trains `model_init` with the active head set from `config.loss_head`.
/// `val` is only used for the recorded history.
pub fn train(
    x: &Array2<f64>,
    labels: &[usize],
    val: Option<(&Array2<f64>, &[usize])>,
    model_init: SarnModel,
    config: &TrainConfig,
) -> Result<(SarnModel, TrainHistory)> {
    config.validate()?;
    let mut model = model_init;
    if x.nrows() == 0 {
        return Err(Error::invalid("empty training set"));
    }
    if x.nrows() != labels.len() {
        return Err(Error::invalid("label count differs from row count"));
    }
    if x.ncols() != model.input_width() {
        return Err(Error::invalid(format!(
            "model expects {} features, got {}",
            model.input_width(),
            x.ncols()
        )));
    }
    if let Some((vx, vy)) = val {
        if vx.nrows() != vy.len() || vx.ncols() != x.ncols() {
            return Err(Error::invalid("validation data shape mismatch"));
        }
    }
    let mut history = TrainHistory::default();
    if config.epochs == 0 {
        return Ok((model, history));
    }
    model.head = config.loss_head;
    let mut rng = crate::rng::seeded(config.seed);
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    for epoch in 1..=config.epochs {
        order.shuffle(&mut rng);
        for (b, chunk) in order.chunks(config.batch_size).enumerate() {
            let xb = x.select(Axis(0), chunk);
            let yb: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let drops = model.draw_dropout(chunk.len(), &mut rng);
            let (loss, grads) = model
                .gradients(&xb, &yb, drops.as_deref())
                .map_err(|e| match e {
                    Error::Numerical(m) => Error::numerical(format!("epoch {epoch}, batch {b}: {m}")),
                    other => other,
                })?;
            if !loss.is_finite() {
                return Err(Error::numerical(format!("non-finite loss at epoch {epoch}, batch {b}")));
            }
            model.apply_gradients(&grads, config.learning_rate);
        }
        if epoch == config.epochs {
            let zeroed = model.conv.prune(PRUNE_THRESHOLD);
            log::debug!("pruned {zeroed} entries of S");
        }
        if config.record_history {
            let (train_loss, train_acc) = evaluate(&model, x, labels)?;
            let (val_loss, val_acc) = match val {
                Some((vx, vy)) if vx.nrows() > 0 => evaluate(&model, vx, vy)?,
                _ => (f64::NAN, f64::NAN),
            };
            log::debug!("epoch {epoch}: train_loss={train_loss:.5} train_acc={train_acc:.4}");
            history.epochs.push(EpochRecord {
                epoch,
                train_loss,
                train_acc,
                val_loss,
                val_acc,
            });
        }
    }
    Ok((model, history))
}
