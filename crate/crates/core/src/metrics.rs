//! Multi-class evaluation: confusion matrix, accuracy, macro-averaged
//! precision and recall, and Cohen's kappa.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let c = counts.len();
        if c == 0 || counts.iter().any(|r| r.len() != c) {
            return Err(Error::invalid("confusion matrix must be square and non-empty"));
        }
        Ok(Self { counts })
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|c| self.counts[c][c]).sum()
    }

    pub fn row_sum(&self, c: usize) -> u64 {
        self.counts[c].iter().sum()
    }

    pub fn col_sum(&self, c: usize) -> u64 {
        self.counts.iter().map(|r| r[c]).sum()
    }
}

/// Tallies `counts[true][pred]`.
pub fn confusion(true_labels: &[usize], pred_labels: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    if true_labels.len() != pred_labels.len() {
        return Err(Error::invalid(format!(
            "{} true labels vs {} predictions",
            true_labels.len(),
            pred_labels.len()
        )));
    }
    if true_labels.is_empty() {
        return Err(Error::invalid("no samples to evaluate"));
    }
    if n_classes == 0 {
        return Err(Error::invalid("n_classes must be positive"));
    }
    let mut counts = vec![vec![0u64; n_classes]; n_classes];
    for (&t, &p) in true_labels.iter().zip(pred_labels) {
        if t >= n_classes || p >= n_classes {
            return Err(Error::invalid(format!(
                "label {} out of range for {n_classes} classes",
                t.max(p)
            )));
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision_macro: f64,
    pub recall_macro: f64,
    pub kappa: f64,
    pub precision_per_class: Vec<f64>,
    pub recall_per_class: Vec<f64>,
    /// Classes never predicted (precision reported as 0).
    pub empty_prediction_classes: Vec<usize>,
    /// Classes absent from the true labels (recall reported as 0).
    pub empty_true_classes: Vec<usize>,
    /// Set when chance agreement is 1 but observed agreement is not, which
    /// leaves kappa undefined; kappa is then reported as 0.
    pub kappa_undefined: bool,
    pub confusion: ConfusionMatrix,
}

pub fn report(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::invalid("confusion matrix is empty"));
    }
    let c = cm.n_classes();
    let n = total as f64;
    let mut precision = Vec::with_capacity(c);
    let mut recall = Vec::with_capacity(c);
    let mut empty_pred = Vec::new();
    let mut empty_true = Vec::new();
    let mut p_e = 0.0;
    for k in 0..c {
        let diag = cm.counts[k][k] as f64;
        let (row, col) = (cm.row_sum(k), cm.col_sum(k));
        if col == 0 {
            empty_pred.push(k);
            precision.push(0.0);
        } else {
            precision.push(diag / col as f64);
        }
        if row == 0 {
            empty_true.push(k);
            recall.push(0.0);
        } else {
            recall.push(diag / row as f64);
        }
        p_e += (row as f64 * col as f64) / (n * n);
    }
    let accuracy = cm.trace() as f64 / n;
    let (kappa, kappa_undefined) = if (1.0 - p_e).abs() < 1e-15 {
        if accuracy == 1.0 {
            (1.0, false)
        } else {
            (0.0, true)
        }
    } else {
        ((accuracy - p_e) / (1.0 - p_e), false)
    };
    Ok(MetricsReport {
        accuracy,
        precision_macro: precision.iter().sum::<f64>() / c as f64,
        recall_macro: recall.iter().sum::<f64>() / c as f64,
        kappa,
        precision_per_class: precision,
        recall_per_class: recall,
        empty_prediction_classes: empty_pred,
        empty_true_classes: empty_true,
        kappa_undefined,
        confusion: cm.clone(),
    })
}

/// Convenience: `report(confusion(..))`.
pub fn evaluate(true_labels: &[usize], pred_labels: &[usize], n_classes: usize) -> Result<MetricsReport> {
    report(&confusion(true_labels, pred_labels, n_classes)?)
}

impl MetricsReport {
    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_pretty() + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::InvalidInput(format!("{}: {e}", path.display())))
    }

    /// Bar-chart data: `metric,value` for the headline metrics followed by
    /// `precision_class_c` / `recall_class_c` rows.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        writeln!(out, "metric,value").map_err(io)?;
        for (name, v) in [
            ("accuracy", self.accuracy),
            ("precision_macro", self.precision_macro),
            ("recall_macro", self.recall_macro),
            ("kappa", self.kappa),
        ] {
            writeln!(out, "{name},{v}").map_err(io)?;
        }
        for (c, v) in self.precision_per_class.iter().enumerate() {
            writeln!(out, "precision_class_{c},{v}").map_err(io)?;
        }
        for (c, v) in self.recall_per_class.iter().enumerate() {
            writeln!(out, "recall_class_{c},{v}").map_err(io)?;
        }
        out.flush().map_err(io)
    }

    /// One-line summary with four decimals.
    pub fn summary_line(&self) -> String {
        format!(
            "accuracy={:.4} precision={:.4} recall={:.4} kappa={:.4}",
            self.accuracy, self.precision_macro, self.recall_macro, self.kappa
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn hand_tally() {
        let cm = confusion(&[0, 0, 1, 2], &[0, 1, 1, 2], 3).unwrap();
        assert_eq!(cm.counts, vec![vec![1, 1, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        assert!(confusion(&[], &[], 3).is_err());
        assert!(confusion(&[0, 3], &[0, 1], 3).is_err());
        assert!(confusion(&[0], &[0, 1], 3).is_err());
    }

    #[test]
    fn perfect_predictor() {
        let y = [0, 1, 2, 2, 1, 0, 0];
        let r = evaluate(&y, &y, 3).unwrap();
        assert_eq!((r.accuracy, r.precision_macro, r.recall_macro, r.kappa), (1.0, 1.0, 1.0, 1.0));
        let cm = &r.confusion.counts;
        assert!((0..3).all(|i| (0..3).all(|j| i == j || cm[i][j] == 0)));
    }

    #[test]
    fn two_by_two_kappa() {
        let cm = ConfusionMatrix::from_counts(vec![vec![2, 1], vec![1, 2]]).unwrap();
        let r = report(&cm).unwrap();
        assert!((r.accuracy - 4.0 / 6.0).abs() < 1e-15);
        assert!((r.precision_per_class[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.precision_per_class[1] - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.recall_macro - 2.0 / 3.0).abs() < 1e-15);
        assert!((r.kappa - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn constant_predictor_has_zero_kappa() {
        let t = [0, 0, 1, 1];
        let r = evaluate(&t, &[0, 0, 0, 0], 2).unwrap();
        assert!(r.kappa.abs() < 1e-15);
        assert_eq!(r.empty_prediction_classes, vec![1]);
        assert_eq!(r.precision_per_class[1], 0.0);
    }

    #[test]
    fn single_class_agreement() {
        let r = evaluate(&[1, 1], &[1, 1], 2).unwrap();
        assert_eq!(r.kappa, 1.0);
        assert!(!r.kappa_undefined);
        assert_eq!(r.empty_true_classes, vec![0]);
    }

    #[test]
    fn empty_matrix_errors() {
        let cm = ConfusionMatrix::from_counts(vec![vec![0, 0], vec![0, 0]]).unwrap();
        assert!(report(&cm).is_err());
        assert!(ConfusionMatrix::from_counts(vec![vec![1, 2]]).is_err());
    }

    #[test]
    fn json_round_trip() {
        let r = evaluate(&[0, 1, 2, 1], &[0, 2, 2, 1], 3).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        r.write_json(f.path()).unwrap();
        assert_eq!(MetricsReport::read_json(f.path()).unwrap(), r);
    }

    proptest! {
        #[test]
        fn invariant_under_class_relabelling(
            pairs in proptest::collection::vec((0usize..3, 0usize..3), 1..80),
            perm_idx in 0usize..6,
        ) {
            let perms = [[0, 1, 2], [0, 2, 1], [1, 0, 2], [1, 2, 0], [2, 0, 1], [2, 1, 0]];
            let perm = perms[perm_idx];
            let (t, p): (Vec<usize>, Vec<usize>) = pairs.iter().copied().unzip();
            let tp: Vec<usize> = t.iter().map(|&c| perm[c]).collect();
            let pp: Vec<usize> = p.iter().map(|&c| perm[c]).collect();
            let a = evaluate(&t, &p, 3).unwrap();
            let b = evaluate(&tp, &pp, 3).unwrap();
            prop_assert!((a.accuracy - b.accuracy).abs() < 1e-12);
            prop_assert!((a.kappa - b.kappa).abs() < 1e-12);
            for (c, &pc) in perm.iter().enumerate() {
                prop_assert!((a.precision_per_class[c] - b.precision_per_class[pc]).abs() < 1e-12);
                prop_assert!((a.recall_per_class[c] - b.recall_per_class[pc]).abs() < 1e-12);
            }
            let mean_p = a.precision_per_class.iter().sum::<f64>() / 3.0;
            prop_assert_eq!(a.precision_macro, mean_p);
            let off_diag: u64 = a.confusion.total() - a.confusion.trace();
            prop_assert_eq!(a.kappa == 1.0, off_diag == 0);
        }
    }
}
