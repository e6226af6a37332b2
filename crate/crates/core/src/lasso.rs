//! L1-penalised least squares over a regularization path.
//!
//! Objective: `1/(2N)·Σ(y_i - β0 - x_iᵀβ)² + λ·Σ|β_j|` with an unpenalised
//! intercept, solved by cyclic coordinate descent with soft-thresholding.
//! Columns and response are centred internally, so the intercept is
//! recovered as `mean(y - Xβ)`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients with magnitude at or below this count as zero.
pub const ACTIVE_THRESHOLD: f64 = 1e-12;
/// `λ_min / λ_max` of the default grid.
pub const GRID_RATIO: f64 = 1e-3;
pub const DEFAULT_PATH_LENGTH: usize = 100;
pub const DEFAULT_TOL: f64 = 1e-8;
pub const DEFAULT_MAX_ITERS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoModel {
    pub intercept: f64,
    pub coefficients: Array1<f64>,
    pub lambda: f64,
    /// Coordinate-descent sweeps performed.
    pub iterations: usize,
    pub converged: bool,
}

impl LassoModel {
    pub fn predict(&self, x: &Array2<f64>) -> Array1<f64> {
        x.dot(&self.coefficients) + self.intercept
    }

    pub fn df(&self) -> usize {
        self.coefficients.iter().filter(|b| b.abs() > ACTIVE_THRESHOLD).count()
    }
}

/// Centred design, kept together with the column means and squared norms.
struct Centered {
    x: Array2<f64>,
    y: Array1<f64>,
    x_means: Array1<f64>,
    y_mean: f64,
    /// `(1/N)·Σ x̃_ij²`
    norms: Array1<f64>,
}

fn center(x: &Array2<f64>, y: &Array1<f64>) -> Result<Centered> {
    let n = x.nrows();
    if n == 0 || y.len() != n {
        return Err(Error::invalid(format!(
            "design has {n} rows but response has {} entries",
            y.len()
        )));
    }
    let x_means = x.mean_axis(Axis(0)).expect("non-empty");
    let y_mean = y.mean().expect("non-empty");
    let xc = x - &x_means;
    let yc = y - y_mean;
    let norms = xc.map_axis(Axis(0), |c| c.dot(&c) / n as f64);
    Ok(Centered {
        x: xc,
        y: yc,
        x_means,
        y_mean,
        norms,
    })
}

fn corr(col: ArrayView1<f64>, r: &Array1<f64>) -> f64 {
    col.dot(r) / r.len() as f64
}

fn lambda_max_centered(c: &Centered) -> f64 {
    c.x.columns()
        .into_iter()
        .map(|col| corr(col, &c.y).abs())
        .fold(0.0, f64::max)
}

/// Smallest λ whose solution is identically zero: `max_j |Σ_i x_ij·y_i| / N`
/// on centred data.
pub fn lambda_max(x: &Array2<f64>, y: &Array1<f64>) -> Result<f64> {
    Ok(lambda_max_centered(&center(x, y)?))
}

/// Log-spaced grid from `λ_max` down to `λ_max · 1e-3`, strictly descending.
pub fn lambda_grid(x: &Array2<f64>, y: &Array1<f64>, count: usize) -> Result<Vec<f64>> {
    if count < 2 {
        return Err(Error::invalid("lambda grid needs at least 2 values"));
    }
    if x.iter().all(|&v| v == 0.0) {
        return Err(Error::invalid("design matrix is all zeros"));
    }
    let lmax = lambda_max(x, y)?;
    if !(lmax > 0.0) {
        return Err(Error::invalid(
            "degenerate response: no column is correlated with y (lambda_max = 0)",
        ));
    }
    let log_hi = lmax.ln();
    let log_lo = (lmax * GRID_RATIO).ln();
    Ok((0..count)
        .map(|i| {
            if i == 0 {
                lmax
            } else {
                (log_hi + (log_lo - log_hi) * i as f64 / (count - 1) as f64).exp()
            }
        })
        .collect())
}

/// `sign(z)·max(0, |z| - λ)`.
pub fn soft_threshold(z: f64, lambda: f64) -> f64 {
    if z > lambda {
        z - lambda
    } else if z < -lambda {
        z + lambda
    } else {
        0.0
    }
}

/// Cyclic coordinate descent at a single λ. Stops when the largest
/// coefficient change in a sweep drops below `tol`; returns
/// `converged = false` after `max_iters` sweeps otherwise.
pub fn fit_lasso(
    x: &Array2<f64>,
    y: &Array1<f64>,
    lambda: f64,
    warm_start: Option<&Array1<f64>>,
    tol: f64,
    max_iters: usize,
) -> Result<LassoModel> {
    let c = center(x, y)?;
    fit_centered(&c, lambda, warm_start, tol, max_iters)
}

fn fit_centered(
    c: &Centered,
    lambda: f64,
    warm_start: Option<&Array1<f64>>,
    tol: f64,
    max_iters: usize,
) -> Result<LassoModel> {
    if !(lambda >= 0.0) {
        return Err(Error::invalid(format!("lambda {lambda} must be non-negative")));
    }
    let p = c.x.ncols();
    let finish = |beta: Array1<f64>, iterations, converged| LassoModel {
        intercept: c.y_mean - c.x_means.dot(&beta),
        coefficients: beta,
        lambda,
        iterations,
        converged,
    };
    // β = 0 satisfies the optimality conditions exactly when λ ≥ λ_max.
    if lambda >= lambda_max_centered(c) {
        return Ok(finish(Array1::zeros(p), 0, true));
    }

    let mut beta = match warm_start {
        Some(w) if w.len() == p => w.clone(),
        Some(w) => {
            return Err(Error::invalid(format!(
                "warm start has {} coefficients, expected {p}",
                w.len()
            )))
        }
        None => Array1::zeros(p),
    };
    let mut r = &c.y - &c.x.dot(&beta);
    for sweep in 1..=max_iters {
        let mut max_change = 0.0f64;
        for j in 0..p {
            let nj = c.norms[j];
            if nj == 0.0 {
                beta[j] = 0.0;
                continue;
            }
            let col = c.x.column(j);
            let z = corr(col, &r) + nj * beta[j];
            let updated = soft_threshold(z, lambda) / nj;
            let delta = updated - beta[j];
            if delta != 0.0 {
                r.scaled_add(-delta, &col);
                beta[j] = updated;
                max_change = max_change.max(delta.abs());
            }
        }
        if max_change < tol {
            return Ok(finish(beta, sweep, true));
        }
    }
    Ok(finish(beta, max_iters, false))
}

/// Largest violation of the optimality conditions at `model`:
/// `|g_j| - λ` for inactive and `|g_j - λ·sign(β_j)|` for active coordinates,
/// where `g_j = (1/N)·Σ_i x_ij·r_i` and `r` is the full residual.
pub fn kkt_violation(x: &Array2<f64>, y: &Array1<f64>, model: &LassoModel) -> f64 {
    let r = y - &model.predict(x);
    let n = y.len() as f64;
    x.columns()
        .into_iter()
        .zip(model.coefficients.iter())
        .map(|(col, &b)| {
            let g = col.dot(&r) / n;
            if b.abs() > 0.0 {
                (g - model.lambda * b.signum()).abs()
            } else {
                (g.abs() - model.lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Penalised objective value.
pub fn objective(x: &Array2<f64>, y: &Array1<f64>, intercept: f64, beta: &Array1<f64>, lambda: f64) -> f64 {
    let r = y - &(x.dot(beta) + intercept);
    r.dot(&r) / (2.0 * y.len() as f64) + lambda * beta.iter().map(|b| b.abs()).sum::<f64>()
}

/// Mean squared error.
pub fn mse(y_true: &Array1<f64>, y_pred: &Array1<f64>) -> Result<f64> {
    if y_true.len() != y_pred.len() {
        return Err(Error::invalid(format!(
            "length mismatch: {} vs {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    if y_true.is_empty() {
        return Err(Error::invalid("mse of empty vectors"));
    }
    let d = y_true - y_pred;
    Ok(d.dot(&d) / y_true.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoPath {
    pub lambdas: Vec<f64>,
    /// `L × p`
    pub coef_matrix: Array2<f64>,
    pub intercepts: Vec<f64>,
    pub df: Vec<usize>,
    pub mse: Vec<f64>,
    pub converged: Vec<bool>,
}

impl LassoPath {
    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.coef_matrix.ncols()
    }

    pub fn support_at(&self, idx: usize) -> Vec<usize> {
        self.coef_matrix
            .row(idx)
            .iter()
            .enumerate()
            .filter(|(_, b)| b.abs() > ACTIVE_THRESHOLD)
            .map(|(j, _)| j)
            .collect()
    }

    /// CSV with columns `lambda,df,mse,intercept,converged,beta_0..beta_{p-1}`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        let io = |e| Error::io(path, e);
        let betas: Vec<String> = (0..self.n_features()).map(|j| format!("beta_{j}")).collect();
        let mut header = String::from("lambda,df,mse,intercept,converged");
        for b in &betas {
            header.push(',');
            header.push_str(b);
        }
        writeln!(out, "{header}").map_err(io)?;
        for (i, lambda) in self.lambdas.iter().enumerate() {
            let mut line = format!(
                "{lambda},{},{},{},{}",
                self.df[i], self.mse[i], self.intercepts[i], self.converged[i]
            );
            for b in self.coef_matrix.row(i) {
                line.push_str(&format!(",{b}"));
            }
            writeln!(out, "{line}").map_err(io)?;
        }
        out.flush().map_err(io)
    }

    /// Reads a file written by [`LassoPath::write_csv`].
    pub fn read_csv(path: &Path) -> Result<Self> {
        const FIXED: usize = 5;
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::Reader::from_reader(file);
        let bad = |row: usize, column: usize, message: String| Error::Parse {
            path: path.to_path_buf(),
            row,
            column,
            message,
        };
        let header = reader.headers().map_err(|e| bad(1, 0, e.to_string()))?.clone();
        let fixed: Vec<&str> = header.iter().take(FIXED).collect();
        if fixed != ["lambda", "df", "mse", "intercept", "converged"] {
            return Err(bad(1, 0, "expected lambda,df,mse,intercept,converged,beta_* columns".into()));
        }
        let p = header.len() - FIXED;
        let number = |row: usize, col: usize, s: &str| -> Result<f64> {
            s.trim()
                .parse::<f64>()
                .map_err(|_| bad(row, col + 1, format!("`{s}` is not a number")))
        };
        let mut out = Self {
            lambdas: Vec::new(),
            coef_matrix: Array2::zeros((0, p)),
            intercepts: Vec::new(),
            df: Vec::new(),
            mse: Vec::new(),
            converged: Vec::new(),
        };
        let mut coefs = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let row = i + 2;
            let rec = rec.map_err(|e| bad(row, 0, e.to_string()))?;
            if rec.len() != header.len() {
                return Err(bad(row, 0, format!("expected {} fields, found {}", header.len(), rec.len())));
            }
            out.lambdas.push(number(row, 0, &rec[0])?);
            out.df.push(rec[1].trim().parse().map_err(|_| bad(row, 2, format!("`{}` is not a count", &rec[1])))?);
            out.mse.push(number(row, 2, &rec[2])?);
            out.intercepts.push(number(row, 3, &rec[3])?);
            out.converged.push(
                rec[4]
                    .trim()
                    .parse()
                    .map_err(|_| bad(row, 5, format!("`{}` is not true/false", &rec[4])))?,
            );
            for c in FIXED..rec.len() {
                coefs.push(number(row, c, &rec[c])?);
            }
        }
        out.coef_matrix = Array2::from_shape_vec((out.lambdas.len(), p), coefs)
            .map_err(|e| Error::invalid(e.to_string()))?;
        Ok(out)
    }
}

/// Fits every λ in descending order, warm-starting from the previous
/// solution, and records df and training MSE per λ.
pub fn fit_path(x: &Array2<f64>, y: &Array1<f64>, lambdas: &[f64]) -> Result<LassoPath> {
    fit_path_with(x, y, lambdas, DEFAULT_TOL, DEFAULT_MAX_ITERS)
}

pub fn fit_path_with(
    x: &Array2<f64>,
    y: &Array1<f64>,
    lambdas: &[f64],
    tol: f64,
    max_iters: usize,
) -> Result<LassoPath> {
    if lambdas.is_empty() {
        return Err(Error::invalid("empty lambda sequence"));
    }
    if lambdas.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("lambdas must be strictly descending"));
    }
    let c = center(x, y)?;
    let p = x.ncols();
    let mut coef_matrix = Array2::zeros((lambdas.len(), p));
    let mut intercepts = Vec::with_capacity(lambdas.len());
    let mut df = Vec::with_capacity(lambdas.len());
    let mut mses = Vec::with_capacity(lambdas.len());
    let mut converged = Vec::with_capacity(lambdas.len());
    let mut warm = Array1::zeros(p);
    for (i, &lambda) in lambdas.iter().enumerate() {
        let model = fit_centered(&c, lambda, Some(&warm), tol, max_iters)?;
        if !model.converged {
            log::warn!("lasso did not converge at lambda = {lambda}");
        }
        coef_matrix.row_mut(i).assign(&model.coefficients);
        intercepts.push(model.intercept);
        df.push(model.df());
        mses.push(mse(y, &model.predict(x))?);
        converged.push(model.converged);
        warm = model.coefficients;
    }
    Ok(LassoPath {
        lambdas: lambdas.to_vec(),
        coef_matrix,
        intercepts,
        df,
        mse: mses,
        converged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    /// Feature indices, most influential first.
    pub order: Vec<usize>,
    /// Largest λ at which each feature is active; `None` if never active.
    pub entry_lambda: Vec<Option<f64>>,
    pub names: Vec<String>,
}

/// Orders features by the λ at which they first enter the path (largest
/// first). Never-active features come last; ties keep the original index order.
pub fn rank_features(path: &LassoPath, names: &[String]) -> Result<FeatureRanking> {
    if path.is_empty() {
        return Err(Error::invalid("empty lasso path"));
    }
    let p = path.n_features();
    if names.len() != p {
        return Err(Error::invalid(format!("{} names for {p} features", names.len())));
    }
    let entry_lambda: Vec<Option<f64>> = (0..p)
        .map(|j| {
            (0..path.len())
                .find(|&i| path.coef_matrix[[i, j]].abs() > ACTIVE_THRESHOLD)
                .map(|i| path.lambdas[i])
        })
        .collect();
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| match (entry_lambda[a], entry_lambda[b]) {
        (Some(x), Some(y)) => y.total_cmp(&x).then(a.cmp(&b)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.cmp(&b),
    });
    Ok(FeatureRanking {
        order,
        entry_lambda,
        names: names.to_vec(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SelectionStrategy {
    /// The first k features of the entry-order ranking.
    TopK(usize),
    /// Support at the grid λ nearest to the given value.
    LambdaAt(f64),
    /// Support at the λ with the smallest path MSE.
    MinMse,
}

/// Feature indices chosen by `strategy`. `TopK` keeps ranking order; the
/// support-based strategies return ascending indices.
pub fn select(path: &LassoPath, ranking: &FeatureRanking, strategy: SelectionStrategy) -> Result<Vec<usize>> {
    if path.is_empty() {
        return Err(Error::invalid("empty lasso path"));
    }
    match strategy {
        SelectionStrategy::TopK(k) => {
            if k > path.n_features() {
                return Err(Error::invalid(format!(
                    "top_k({k}) exceeds the {} available features",
                    path.n_features()
                )));
            }
            Ok(ranking.order[..k].to_vec())
        }
        SelectionStrategy::LambdaAt(lambda) => {
            let idx = (0..path.len())
                .min_by(|&a, &b| {
                    (path.lambdas[a] - lambda)
                        .abs()
                        .total_cmp(&(path.lambdas[b] - lambda).abs())
                })
                .expect("non-empty");
            Ok(path.support_at(idx))
        }
        SelectionStrategy::MinMse => {
            let idx = (0..path.len())
                .min_by(|&a, &b| path.mse[a].total_cmp(&path.mse[b]).then(a.cmp(&b)))
                .expect("non-empty");
            Ok(path.support_at(idx))
        }
    }
}
