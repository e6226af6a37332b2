//! Tabular data: CSV ingestion, standardization, stratified splitting,
//! random oversampling and a synthetic Gaussian-blob generator.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Largest accepted class label; guards against absurd class counts from
/// malformed label columns.
pub const MAX_LABEL: usize = 1023;

/// Divisor used for columns whose standard deviation is below `1e-12`.
const SD_GUARD: f64 = 1e-12;

/// Feature names of the soil-nutrient schema.
pub const SOIL_FEATURES: [&str; 5] = ["N", "P", "K", "pH", "EC"];
/// Ordinal fertility classes 0..=2.
pub const FERTILITY_CLASSES: [&str; 3] = ["Less Fertile", "Fertile", "Highly Fertile"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    /// `N × d`, one sample per row.
    pub features: Array2<f64>,
    pub feature_names: Vec<String>,
    pub labels: Vec<usize>,
    pub class_names: Vec<String>,
}

impl Dataset {
    /// Builds a dataset with generic class names `class_0..class_{C-1}`.
    pub fn new(
        features: Array2<f64>,
        feature_names: Vec<String>,
        labels: Vec<usize>,
        n_classes: usize,
    ) -> Result<Self> {
        let class_names = (0..n_classes).map(|c| format!("class_{c}")).collect();
        Self::with_class_names(features, feature_names, labels, class_names)
    }

    pub fn with_class_names(
        features: Array2<f64>,
        feature_names: Vec<String>,
        labels: Vec<usize>,
        class_names: Vec<String>,
    ) -> Result<Self> {
        if labels.len() != features.nrows() {
            return Err(Error::invalid(format!(
                "{} labels for {} feature rows",
                labels.len(),
                features.nrows()
            )));
        }
        if feature_names.len() != features.ncols() {
            return Err(Error::invalid(format!(
                "{} feature names for {} columns",
                feature_names.len(),
                features.ncols()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= class_names.len()) {
            return Err(Error::invalid(format!(
                "label {bad} out of range for {} classes",
                class_names.len()
            )));
        }
        if features.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("features contain NaN or infinite values"));
        }
        Ok(Self {
            features,
            feature_names,
            labels,
            class_names,
        })
    }

    pub fn n_samples(&self) -> usize {
        self.features.nrows()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Row indices of each class, in row order.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut idx = vec![Vec::new(); self.n_classes()];
        for (i, &l) in self.labels.iter().enumerate() {
            idx[l].push(i);
        }
        idx
    }

    /// Sub-dataset with the given rows, in the given order.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(0), rows),
            feature_names: self.feature_names.clone(),
            labels: rows.iter().map(|&r| self.labels[r]).collect(),
            class_names: self.class_names.clone(),
        }
    }

    /// Sub-dataset with the given feature columns, in the given order.
    pub fn select_columns(&self, cols: &[usize]) -> Dataset {
        Dataset {
            features: self.features.select(Axis(1), cols),
            feature_names: cols.iter().map(|&c| self.feature_names[c].clone()).collect(),
            labels: self.labels.clone(),
            class_names: self.class_names.clone(),
        }
    }

    pub fn labels_as_f64(&self) -> Array1<f64> {
        self.labels.iter().map(|&l| l as f64).collect()
    }

    /// Writes the dataset as CSV with the label in the last column.
    pub fn write_csv(&self, path: &Path, label_column: &str) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        let mut header = self.feature_names.join(",");
        if !header.is_empty() {
            header.push(',');
        }
        header.push_str(label_column);
        writeln!(out, "{header}").map_err(io)?;
        for (row, &label) in self.features.rows().into_iter().zip(&self.labels) {
            let mut line = String::new();
            for x in row {
                line.push_str(&format!("{x},"));
            }
            line.push_str(&label.to_string());
            writeln!(out, "{line}").map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

/// Reads a headed CSV file. Every column except `label_column` must hold
/// real numbers; the label column must hold non-negative integers. The class
/// count is `max label + 1`.
pub fn load_csv(path: &Path, label_column: &str) -> Result<Dataset> {
    read_table(path, Some(label_column))
}

/// Reads a headed CSV file in which every column is a numeric feature. The
/// returned dataset has a single class and all labels 0.
pub fn load_unlabeled_csv(path: &Path) -> Result<Dataset> {
    read_table(path, None)
}

fn read_table(path: &Path, label_column: Option<&str>) -> Result<Dataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(file);
    let parse_err = |row: usize, column: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        column,
        message,
    };
    let csv_err = |e: csv::Error| {
        let row = e.position().map(|p| p.line() as usize).unwrap_or(0);
        match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => parse_err(row, 0, format!("{other:?}")),
        }
    };

    let mut records = reader.records();
    let header = match records.next() {
        Some(r) => r.map_err(csv_err)?,
        None => return Err(parse_err(1, 0, "missing header".into())),
    };
    let names: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
    let mut seen = HashSet::new();
    for (c, name) in names.iter().enumerate() {
        if name.is_empty() {
            return Err(parse_err(1, c + 1, "empty header name".into()));
        }
        if !seen.insert(name.as_str()) {
            return Err(parse_err(1, c + 1, format!("duplicate header `{name}`")));
        }
    }
    let label_col = match label_column {
        Some(label_column) => Some(
            names
                .iter()
                .position(|n| n == label_column)
                .ok_or_else(|| parse_err(1, 0, format!("label column `{label_column}` not found")))?,
        ),
        None => None,
    };
    let feature_names: Vec<String> = names
        .iter()
        .enumerate()
        .filter(|&(c, _)| Some(c) != label_col)
        .map(|(_, n)| n.clone())
        .collect();
    let d = feature_names.len();

    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (i, record) in records.enumerate() {
        let record = record.map_err(csv_err)?;
        let row = i + 2;
        if record.len() == 1 && record.get(0).is_some_and(|s| s.trim().is_empty()) {
            continue;
        }
        if record.len() != names.len() {
            return Err(parse_err(
                row,
                record.len().min(names.len()) + 1,
                format!("expected {} fields, found {}", names.len(), record.len()),
            ));
        }
        for (c, cell) in record.iter().enumerate() {
            let cell = cell.trim();
            if Some(c) == label_col {
                let label: usize = cell.parse().map_err(|_| {
                    parse_err(row, c + 1, format!("label `{cell}` is not a non-negative integer"))
                })?;
                if label > MAX_LABEL {
                    return Err(parse_err(row, c + 1, format!("label {label} exceeds {MAX_LABEL}")));
                }
                labels.push(label);
            } else {
                let x: f64 = cell
                    .parse()
                    .map_err(|_| parse_err(row, c + 1, format!("`{cell}` is not a number")))?;
                if !x.is_finite() {
                    return Err(parse_err(row, c + 1, format!("`{cell}` is not finite")));
                }
                values.push(x);
            }
        }
        if label_col.is_none() {
            labels.push(0);
        }
    }
    if labels.is_empty() {
        return Err(parse_err(2, 0, "zero data rows".into()));
    }
    let n = labels.len();
    let features = Array2::from_shape_vec((n, d), values)
        .map_err(|e| Error::invalid(format!("feature matrix shape: {e}")))?;
    let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
    Dataset::new(features, feature_names, labels, n_classes)
}


/// Per-column location and scale of a standardization transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StandardizationParams {
    pub feature_names: Vec<String>,
    pub means: Vec<f64>,
    /// Divisors actually applied (guarded: never below `1e-12`).
    pub std_devs: Vec<f64>,
}

impl StandardizationParams {
    /// Estimates population mean and standard deviation per column.
    pub fn fit(x: &Array2<f64>, feature_names: &[String]) -> Result<Self> {
        let n = x.nrows();
        if n < 2 {
            return Err(Error::invalid("standardization needs at least 2 samples"));
        }
        let mut means = Vec::with_capacity(x.ncols());
        let mut std_devs = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let mean = col.sum() / n as f64;
            let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            means.push(mean);
            std_devs.push(if sd < SD_GUARD { 1.0 } else { sd });
        }
        Ok(Self {
            feature_names: feature_names.to_vec(),
            means,
            std_devs,
        })
    }

    pub fn apply(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_width(x)?;
        let mut out = x.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.means[j], self.std_devs[j]);
            col.mapv_inplace(|v| (v - m) / s);
        }
        Ok(out)
    }

    pub fn invert(&self, z: &Array2<f64>) -> Result<Array2<f64>> {
        self.check_width(z)?;
        let mut out = z.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            let (m, s) = (self.means[j], self.std_devs[j]);
            col.mapv_inplace(|v| v * s + m);
        }
        Ok(out)
    }

    fn check_width(&self, x: &Array2<f64>) -> Result<()> {
        if x.ncols() != self.means.len() {
            return Err(Error::Schema(format!(
                "expected {} feature columns, got {}",
                self.means.len(),
                x.ncols()
            )));
        }
        Ok(())
    }
}

/// Z-scores every column using population statistics.
pub fn standardize(data: &Dataset) -> Result<(Dataset, StandardizationParams)> {
    let params = StandardizationParams::fit(&data.features, &data.feature_names)?;
    let features = params.apply(&data.features)?;
    Ok((
        Dataset {
            features,
            ..data.clone()
        },
        params,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

/// Splits each class separately; a class of size `c` contributes
/// `round(train_fraction · c)` rows to train, clamped to `[1, c-1]`.
/// Both outputs keep the original row order.
pub fn stratified_split(data: &Dataset, spec: &SplitSpec) -> Result<(Dataset, Dataset)> {
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) {
        return Err(Error::invalid(format!(
            "train_fraction {} outside (0, 1)",
            spec.train_fraction
        )));
    }
    let mut rng = rng::seeded(spec.seed);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for (class, mut idx) in data.class_indices().into_iter().enumerate() {
        if idx.len() < 2 {
            return Err(Error::invalid(format!(
                "class {class} has {} samples; stratified split needs at least 2",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        let c = idx.len();
        let n_train = ((spec.train_fraction * c as f64).round() as usize).clamp(1, c - 1);
        train.extend_from_slice(&idx[..n_train]);
        test.extend_from_slice(&idx[n_train..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    Ok((data.select_rows(&train), data.select_rows(&test)))
}

/// Random oversampling: each class is topped up to the majority count with
/// rows drawn with replacement from that class. Existing rows are kept in
/// place; duplicates are appended class by class.
pub fn oversample(data: &Dataset, seed: u64) -> Result<Dataset> {
    let groups = data.class_indices();
    if let Some(c) = groups.iter().position(|g| g.is_empty()) {
        return Err(Error::invalid(format!("class {c} has no samples")));
    }
    let target = groups.iter().map(Vec::len).max().unwrap_or(0);
    let mut rng = rng::seeded(seed);
    let mut rows: Vec<usize> = (0..data.n_samples()).collect();
    for group in &groups {
        for _ in group.len()..target {
            rows.push(group[rng.random_range(0..group.len())]);
        }
    }
    Ok(data.select_rows(&rows))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub samples_per_class: Vec<usize>,
    /// `C × d` class centers.
    pub class_centers: Array2<f64>,
    pub noise_std: f64,
    pub seed: u64,
    pub feature_names: Vec<String>,
    pub class_names: Vec<String>,
}

impl SynthConfig {
    /// Soil-nutrient preset: columns N, P, K, pH, EC and up to three ordinal
    /// fertility classes. Centers separate the classes mostly through N, P
    /// and K; pH and EC move by much less than the noise level.
    pub fn soil(samples_per_class: Vec<usize>, seed: u64) -> Result<Self> {
        let c = samples_per_class.len();
        if c == 0 || c > 3 {
            return Err(Error::invalid("the soil preset supports 1 to 3 classes"));
        }
        let centers = ndarray::array![
            [40.0, 20.0, 30.0, 6.5, 0.5],
            [60.0, 28.0, 40.0, 6.8, 0.7],
            [80.0, 36.0, 50.0, 7.1, 0.9],
        ];
        Ok(Self {
            samples_per_class,
            class_centers: centers.slice(ndarray::s![..c, ..]).to_owned(),
            noise_std: 5.0,
            seed,
            feature_names: SOIL_FEATURES.iter().map(|s| s.to_string()).collect(),
            class_names: FERTILITY_CLASSES[..c].iter().map(|s| s.to_string()).collect(),
        })
    }

    /// Generic preset for any class count: class `c` sits at `4·e_{c mod d}`
    /// shifted by `c / d` along every axis.
    pub fn blobs(samples_per_class: Vec<usize>, n_features: usize, seed: u64) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::invalid("blobs need at least one feature"));
        }
        let c = samples_per_class.len();
        let centers = Array2::from_shape_fn((c, n_features), |(k, j)| {
            let shift = (k / n_features) as f64 * 4.0;
            if k % n_features == j {
                4.0 + shift
            } else {
                shift
            }
        });
        Ok(Self {
            samples_per_class,
            class_centers: centers,
            noise_std: 1.0,
            seed,
            feature_names: (0..n_features).map(|j| format!("x{j}")).collect(),
            class_names: (0..c).map(|k| format!("class_{k}")).collect(),
        })
    }
}

/// Isotropic Gaussian blobs around the configured centers. Rows are emitted
/// class by class.
pub fn synth_generate(config: &SynthConfig) -> Result<Dataset> {
    let c = config.samples_per_class.len();
    let d = config.class_centers.ncols();
    if config.class_centers.nrows() != c {
        return Err(Error::invalid(format!(
            "{} class centers for {c} classes",
            config.class_centers.nrows()
        )));
    }
    if config.feature_names.len() != d || config.class_names.len() != c {
        return Err(Error::invalid("feature/class names do not match center dimensions"));
    }
    if !(config.noise_std > 0.0 && config.noise_std.is_finite()) {
        return Err(Error::invalid("noise_std must be positive"));
    }
    let normal = Normal::new(0.0, config.noise_std)
        .map_err(|e| Error::invalid(format!("noise distribution: {e}")))?;
    let mut rng = rng::seeded(config.seed);
    let n: usize = config.samples_per_class.iter().sum();
    let mut features = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    let mut row = 0;
    for (class, &count) in config.samples_per_class.iter().enumerate() {
        for _ in 0..count {
            for j in 0..d {
                features[[row, j]] = config.class_centers[[class, j]] + normal.sample(&mut rng);
            }
            labels.push(class);
            row += 1;
        }
    }
    Dataset::with_class_names(
        features,
        config.feature_names.clone(),
        labels,
        config.class_names.clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn write_tmp(content: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(content.as_bytes()).unwrap();
        f
    }

    fn counts_dataset(counts: &[usize]) -> Dataset {
        let labels: Vec<usize> = counts
            .iter()
            .enumerate()
            .flat_map(|(c, &k)| std::iter::repeat_n(c, k))
            .collect();
        let n = labels.len();
        let features = Array2::from_shape_fn((n, 2), |(i, j)| (i * 2 + j) as f64);
        Dataset::new(features, vec!["a".into(), "b".into()], labels, counts.len()).unwrap()
    }

    #[test]
    fn loads_soil_header() {
        let f = write_tmp(
            "N,P,K,pH,EC,fertility\n1,2,3,7.0,0.5,0\n2,3,4,7.1,0.6,1\n3,4,5,7.2,0.7,2\n",
        );
        let d = load_csv(f.path(), "fertility").unwrap();
        assert_eq!(d.n_features(), 5);
        assert_eq!(d.feature_names, vec!["N", "P", "K", "pH", "EC"]);
        assert_eq!(d.n_classes(), 3);
    }

    #[test]
    fn loads_two_rows_exactly() {
        let f = write_tmp("a,b,y\n1.0,2.0,0\n3.0,4.0,1\n");
        let d = load_csv(f.path(), "y").unwrap();
        assert_eq!(d.features, array![[1.0, 2.0], [3.0, 4.0]]);
        assert_eq!(d.labels, vec![0, 1]);
    }

    #[test]
    fn label_column_may_sit_anywhere() {
        let f = write_tmp("y,a\n1,5.5\n0,6.5\n");
        let d = load_csv(f.path(), "y").unwrap();
        assert_eq!(d.features, array![[5.5], [6.5]]);
        assert_eq!(d.labels, vec![1, 0]);
    }

    #[test]
    fn header_only_is_zero_rows() {
        let f = write_tmp("a,b,y\n");
        let err = load_csv(f.path(), "y").unwrap_err();
        assert!(err.to_string().contains("zero data rows"), "{err}");
    }

    #[test]
    fn parse_errors_carry_position() {
        let f = write_tmp("a,b,y\n1,2,0\n1,oops,1\n");
        match load_csv(f.path(), "y").unwrap_err() {
            Error::Parse { row, column, .. } => assert_eq!((row, column), (3, 2)),
            other => panic!("unexpected {other:?}"),
        }
        let f = write_tmp("a,b,y\n1,2,-1\n");
        assert!(matches!(
            load_csv(f.path(), "y").unwrap_err(),
            Error::Parse { row: 2, column: 3, .. }
        ));
        let f = write_tmp("a,a,y\n1,2,0\n");
        assert!(load_csv(f.path(), "y").unwrap_err().to_string().contains("duplicate"));
        let f = write_tmp("a,b\n1,2\n");
        assert!(load_csv(f.path(), "y").unwrap_err().to_string().contains("not found"));
        let f = write_tmp("");
        assert!(load_csv(f.path(), "y").unwrap_err().to_string().contains("missing header"));
        let f = write_tmp("a,y\nNaN,0\n");
        assert!(load_csv(f.path(), "y").is_err());
        assert!(matches!(
            load_csv(Path::new("/nonexistent/file.csv"), "y").unwrap_err(),
            Error::Io { .. }
        ));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let data = synth_generate(&SynthConfig::soil(vec![5, 4, 3], 3).unwrap()).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        data.write_csv(f.path(), "fertility").unwrap();
        let back = load_csv(f.path(), "fertility").unwrap();
        assert_eq!(back.features, data.features);
        assert_eq!(back.labels, data.labels);
        assert_eq!(back.feature_names, data.feature_names);
    }

    #[test]
    fn standardize_hand_values() {
        let d = Dataset::new(array![[2.0, 5.0], [4.0, 5.0], [6.0, 5.0]], vec!["x".into(), "c".into()], vec![0, 0, 0], 1)
            .unwrap();
        let (z, p) = standardize(&d).unwrap();
        assert!((p.means[0] - 4.0).abs() < 1e-15);
        assert!((p.std_devs[0] - (8.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let expect = 2.0 / (8.0f64 / 3.0).sqrt();
        assert!((z.features[[0, 0]] + expect).abs() < 1e-12);
        assert!(z.features[[1, 0]].abs() < 1e-15);
        assert!((z.features[[2, 0]] - expect).abs() < 1e-12);
        assert!((expect - 1.2247).abs() < 1e-4);
        assert_eq!(z.features.column(1).to_vec(), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn standardize_needs_two_rows() {
        let d = Dataset::new(array![[1.0]], vec!["x".into()], vec![0], 1).unwrap();
        assert!(standardize(&d).is_err());
    }

    #[test]
    fn split_counts_follow_rounding() {
        let d = counts_dataset(&[70, 20, 10]);
        let (train, test) = stratified_split(&d, &SplitSpec { train_fraction: 0.8, seed: 1 }).unwrap();
        assert_eq!(train.class_counts(), vec![56, 16, 8]);
        assert_eq!(test.class_counts(), vec![14, 4, 2]);

        let d = counts_dataset(&[2, 2]);
        let (train, test) = stratified_split(&d, &SplitSpec { train_fraction: 0.5, seed: 1 }).unwrap();
        assert_eq!(train.class_counts(), vec![1, 1]);
        assert_eq!(test.class_counts(), vec![1, 1]);
    }

    #[test]
    fn split_is_deterministic_and_partitions() {
        let d = counts_dataset(&[30, 12, 7]);
        let spec = SplitSpec { train_fraction: 0.7, seed: 42 };
        let (a, b) = stratified_split(&d, &spec).unwrap();
        let (a2, b2) = stratified_split(&d, &spec).unwrap();
        assert_eq!(a, a2);
        assert_eq!(b, b2);
        // first feature column encodes the row index
        let mut ids: Vec<usize> = a
            .features
            .column(0)
            .iter()
            .chain(b.features.column(0).iter())
            .map(|v| (*v as usize) / 2)
            .collect();
        ids.sort_unstable();
        assert_eq!(ids, (0..d.n_samples()).collect::<Vec<_>>());
    }

    #[test]
    fn split_rejects_singleton_class() {
        let d = counts_dataset(&[5, 1]);
        assert!(stratified_split(&d, &SplitSpec::default()).is_err());
    }

    #[test]
    fn oversample_balances() {
        let d = counts_dataset(&[70, 20, 10]);
        let o = oversample(&d, 9).unwrap();
        assert_eq!(o.class_counts(), vec![70, 70, 70]);
        assert_eq!(o.n_samples(), 210);
        assert_eq!(o.features.slice(ndarray::s![..100, ..]), d.features);
        assert_eq!(oversample(&d, 9).unwrap(), o);

        let bal = counts_dataset(&[50, 50, 50]);
        assert_eq!(oversample(&bal, 1).unwrap(), bal);
        let single = counts_dataset(&[4]);
        assert_eq!(oversample(&single, 1).unwrap(), single);
        assert!(oversample(&counts_dataset(&[3, 0]), 1).is_err());
    }

    #[test]
    fn oversampled_rows_come_from_their_class() {
        let d = counts_dataset(&[9, 2]);
        let o = oversample(&d, 5).unwrap();
        for i in d.n_samples()..o.n_samples() {
            let src = (o.features[[i, 0]] as usize) / 2;
            assert_eq!(d.labels[src], o.labels[i]);
        }
    }

    #[test]
    fn synth_counts_and_degenerate_noise() {
        let cfg = SynthConfig::soil(vec![700, 200, 100], 7).unwrap();
        let d = synth_generate(&cfg).unwrap();
        assert_eq!(d.n_samples(), 1000);
        assert_eq!(d.class_counts(), vec![700, 200, 100]);

        let mut tight = cfg.clone();
        tight.noise_std = 1e-9;
        let d = synth_generate(&tight).unwrap();
        for (row, &l) in d.features.rows().into_iter().zip(&d.labels) {
            for (x, c) in row.iter().zip(cfg.class_centers.row(l)) {
                assert!((x - c).abs() < 1e-6);
            }
        }

        let mut other = cfg.clone();
        other.seed = 8;
        let d2 = synth_generate(&other).unwrap();
        let d1 = synth_generate(&cfg).unwrap();
        assert_ne!(d1.features, d2.features);
        assert_eq!(d1.class_counts(), d2.class_counts());
    }

    #[test]
    fn synth_rejects_inconsistent_dims() {
        let mut cfg = SynthConfig::soil(vec![3, 3], 1).unwrap();
        cfg.samples_per_class.push(4);
        assert!(synth_generate(&cfg).is_err());
        let mut cfg = SynthConfig::blobs(vec![3, 3], 2, 1).unwrap();
        cfg.noise_std = 0.0;
        assert!(synth_generate(&cfg).is_err());
    }

    proptest! {
        #[test]
        fn standardize_is_idempotent_and_invertible(
            vals in proptest::collection::vec(-1e3f64..1e3, 6..40),
        ) {
            let n = vals.len() / 2;
            let x = Array2::from_shape_vec((n, 2), vals[..2 * n].to_vec()).unwrap();
            let d = Dataset::new(x.clone(), vec!["a".into(), "b".into()], vec![0; n], 1).unwrap();
            let (z, p) = standardize(&d).unwrap();
            let (z2, _) = standardize(&z).unwrap();
            for (a, b) in z.features.iter().zip(z2.features.iter()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
            for col in z.features.columns() {
                prop_assert!(col.mean().unwrap().abs() < 1e-9);
            }
            let back = p.invert(&z.features).unwrap();
            for (a, b) in back.iter().zip(x.iter()) {
                prop_assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
            }
        }

        #[test]
        fn split_preserves_proportions(
            counts in proptest::collection::vec(2usize..60, 1..5),
            frac in 0.1f64..0.9,
            seed in any::<u64>(),
        ) {
            let d = counts_dataset(&counts);
            let (train, _) = stratified_split(&d, &SplitSpec { train_fraction: frac, seed }).unwrap();
            let tn = train.n_samples() as f64;
            let dn = d.n_samples() as f64;
            for (c, (&tc, &dc)) in train.class_counts().iter().zip(&counts).enumerate() {
                let target = frac * dc as f64;
                prop_assert!((tc as f64 - target).abs() <= 1.0, "class {c}");
                prop_assert!((tc as f64 / tn - dc as f64 / dn).abs() <= 1.0 / tn + 1.0 / dn);
            }
        }
    }
}
