//! Fuzzy k-NN graph construction and low-dimensional layout optimization.
//!
//! The graph stage computes, per point, the distance `rho` to its nearest
//! non-identical neighbour and a bandwidth `sigma` such that the directed
//! memberships `exp(-max(0, d - rho) / sigma)` over the k neighbours sum to
//! `log2(k)`. Directed memberships are merged with the probabilistic
//! t-conorm `u + v - u·v`. The layout stage starts from a spectral embedding
//! and minimises the fuzzy cross-entropy by stochastic gradient steps with
//! negative sampling.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::rng;

/// Per-coordinate bound on a single gradient step.
const GRAD_CLIP: f64 = 4.0;
/// Bounds of the fallback clamp for unreachable bandwidth targets, as
/// multiples of the row's mean positive excess distance.
const SIGMA_CLAMP_LO: f64 = 1e-3;
const SIGMA_CLAMP_HI: f64 = 1e3;
const SPECTRAL_SCALE: f64 = 10.0;
const SPECTRAL_JITTER: f64 = 1e-4;
const SPECTRAL_TOL: f64 = 1e-6;
const SPECTRAL_MAX_ITERS: usize = 3000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UmapConfig {
    pub k: usize,
    pub out_dim: usize,
    pub a: f64,
    pub b: f64,
    pub epochs: usize,
    pub initial_learning_rate: f64,
    pub negative_samples: usize,
    pub eps: f64,
    pub sigma_tol: f64,
    pub sigma_max_iters: usize,
    pub seed: u64,
}

impl Default for UmapConfig {
    fn default() -> Self {
        Self {
            k: 15,
            out_dim: 2,
            a: 1.0,
            b: 1.0,
            epochs: 200,
            initial_learning_rate: 1.0,
            negative_samples: 5,
            eps: 1e-3,
            sigma_tol: 1e-5,
            sigma_max_iters: 64,
            seed: 0,
        }
    }
}

impl UmapConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::Config("umap.k must be at least 2".into()));
        }
        if self.out_dim == 0 {
            return Err(Error::Config("umap.out_dim must be at least 1".into()));
        }
        if !(self.a > 0.0 && self.b > 0.0) {
            return Err(Error::Config("umap.a and umap.b must be positive".into()));
        }
        if !(self.eps > 0.0 && self.sigma_tol > 0.0 && self.initial_learning_rate > 0.0) {
            return Err(Error::Config(
                "umap.eps, umap.sigma_tol and umap.initial_learning_rate must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// One undirected edge with `i < j` and fuzzy weight in `(0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub i: usize,
    pub j: usize,
    pub v: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NeighborGraph {
    pub k: usize,
    /// `N × k`, ascending distance per row.
    pub neighbor_indices: Array2<usize>,
    pub neighbor_distances: Array2<f64>,
    pub rho: Array1<f64>,
    /// Rows with no strictly positive neighbour distance.
    pub rho_degenerate: Vec<bool>,
    pub sigma: Array1<f64>,
    /// `false` where the bandwidth target was unreachable and sigma was clamped.
    pub sigma_converged: Vec<bool>,
    pub edges: Vec<Edge>,
}

impl NeighborGraph {
    /// Runs k-NN search, rho/sigma calibration and symmetrization.
    pub fn build(x: &Array2<f64>, config: &UmapConfig) -> Result<Self> {
        config.validate()?;
        let (neighbor_indices, neighbor_distances) = build_knn(x, config.k)?;
        let (rho, rho_degenerate) = compute_rho(&neighbor_distances);
        let n = x.nrows();
        let mut sigma = Array1::zeros(n);
        let mut sigma_converged = vec![false; n];
        for i in 0..n {
            let row = neighbor_distances.row(i);
            let sol = solve_sigma(
                row.as_slice().expect("standard layout"),
                rho[i],
                config.k,
                config.sigma_tol,
                config.sigma_max_iters,
            );
            sigma[i] = sol.sigma;
            sigma_converged[i] = sol.converged;
        }

        // Directed memberships, then fuzzy union over both directions.
        let mut directed: std::collections::BTreeMap<(usize, usize), (f64, f64)> =
            std::collections::BTreeMap::new();
        for i in 0..n {
            for (slot, &j) in neighbor_indices.row(i).iter().enumerate() {
                let w = directed_weight(neighbor_distances[[i, slot]], rho[i], sigma[i]);
                let (key, forward) = if i < j { ((i, j), true) } else { ((j, i), false) };
                let entry = directed.entry(key).or_insert((0.0, 0.0));
                if forward {
                    entry.0 = entry.0.max(w);
                } else {
                    entry.1 = entry.1.max(w);
                }
            }
        }
        let edges = directed
            .into_iter()
            .filter_map(|((i, j), (ji, ij))| {
                let v = symmetrize(ji, ij);
                (i != j && v > 0.0).then_some(Edge { i, j, v })
            })
            .collect();

        Ok(Self {
            k: config.k,
            neighbor_indices,
            neighbor_distances,
            rho,
            rho_degenerate,
            sigma,
            sigma_converged,
            edges,
        })
    }

    pub fn n_vertices(&self) -> usize {
        self.rho.len()
    }

    /// Writes the edge list as a JSON array of `{i, j, v}` objects.
    pub fn write_edges_json(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        serde_json::to_writer(BufWriter::new(file), &self.edges)
            .map_err(|e| Error::io(path, std::io::Error::other(e)))
    }
}

/// Exact Euclidean k-NN by brute force. Row `i` lists the k nearest other
/// points in ascending distance, ties broken by index.
pub fn build_knn(x: &Array2<f64>, k: usize) -> Result<(Array2<usize>, Array2<f64>)> {
    let n = x.nrows();
    if k == 0 || k >= n {
        return Err(Error::invalid(format!("k = {k} must satisfy 1 <= k < N = {n}")));
    }
    let mut indices = Array2::zeros((n, k));
    let mut distances = Array2::zeros((n, k));
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n - 1);
    for i in 0..n {
        cand.clear();
        let xi = x.row(i);
        for j in 0..n {
            if j != i {
                cand.push((euclidean(xi, x.row(j)), j));
            }
        }
        cand.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let head = &mut cand[..k];
        head.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for (slot, &(d, j)) in head.iter().enumerate() {
            indices[[i, slot]] = j;
            distances[[i, slot]] = d;
        }
    }
    Ok((indices, distances))
}

fn euclidean(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Smallest strictly positive distance per row. Rows without one get
/// `rho = 0` and a `true` degenerate flag.
pub fn compute_rho(distances: &Array2<f64>) -> (Array1<f64>, Vec<bool>) {
    let mut rho = Array1::zeros(distances.nrows());
    let mut degenerate = vec![false; distances.nrows()];
    for (i, row) in distances.rows().into_iter().enumerate() {
        match row.iter().copied().filter(|&d| d > 0.0).min_by(f64::total_cmp) {
            Some(d) => rho[i] = d,
            None => degenerate[i] = true,
        }
    }
    (rho, degenerate)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SigmaSolution {
    pub sigma: f64,
    pub converged: bool,
}

/// Total directed membership of a neighbour row for bandwidth `sigma`.
pub fn membership_sum(distances: &[f64], rho: f64, sigma: f64) -> f64 {
    distances.iter().map(|&d| directed_weight(d, rho, sigma)).sum()
}

/// Bisection for sigma with `membership_sum = log2(k)`.
///
/// The sum rises strictly from the count of neighbours at `rho` (sigma → 0)
/// towards `k` (sigma → ∞). When `log2(k)` lies outside that open range the
/// target is unreachable and sigma is clamped to the low end of
/// `[1e-3·m, 1e3·m]`, `m` being the mean positive excess `d - rho`.
pub fn solve_sigma(distances: &[f64], rho: f64, k: usize, tol: f64, max_iters: usize) -> SigmaSolution {
    let target = (k as f64).log2();
    let excess: Vec<f64> = distances.iter().map(|&d| d - rho).filter(|&e| e > 0.0).collect();
    let mean_excess = if excess.is_empty() {
        let m = distances.iter().sum::<f64>() / distances.len().max(1) as f64;
        if m > 0.0 {
            m
        } else {
            1.0
        }
    } else {
        excess.iter().sum::<f64>() / excess.len() as f64
    };
    let (lo_clamp, hi_clamp) = (SIGMA_CLAMP_LO * mean_excess, SIGMA_CLAMP_HI * mean_excess);

    let floor = (distances.len() - excess.len()) as f64;
    let ceiling = distances.len() as f64;
    if !(floor < target && target < ceiling) {
        return SigmaSolution {
            sigma: if floor >= target { lo_clamp } else { hi_clamp },
            converged: false,
        };
    }

    // Bisect until the bracket collapses rather than stopping at the first
    // point under `tol`: the residual test alone leaves sigma loose by tol/slope.
    let (mut lo, mut hi) = (0.0f64, f64::INFINITY);
    let mut mid = mean_excess;
    let mut best = (f64::INFINITY, mid);
    for _ in 0..max_iters {
        let total = membership_sum(distances, rho, mid);
        let residual = (total - target).abs();
        if residual < best.0 {
            best = (residual, mid);
        }
        if residual == 0.0 {
            break;
        }
        if total > target {
            hi = mid;
        } else {
            lo = mid;
        }
        let next = if hi.is_infinite() { mid * 2.0 } else { 0.5 * (lo + hi) };
        if next == lo || next == hi {
            break;
        }
        mid = next;
    }
    if best.0 < tol {
        SigmaSolution {
            sigma: best.1,
            converged: true,
        }
    } else {
        SigmaSolution {
            sigma: mid.clamp(lo_clamp, hi_clamp),
            converged: false,
        }
    }
}

/// Directed membership `exp(-max(0, d - rho) / sigma)`.
pub fn directed_weight(d: f64, rho: f64, sigma: f64) -> f64 {
    (-(d - rho).max(0.0) / sigma).exp()
}

/// Probabilistic t-conorm of the two directed memberships.
pub fn symmetrize(v_ji: f64, v_ij: f64) -> f64 {
    v_ji + v_ij - v_ji * v_ij
}

/// `(1 + a·‖yi - yj‖^(2b))^-1`.
pub fn low_dim_similarity(yi: &[f64], yj: &[f64], a: f64, b: f64) -> f64 {
    1.0 / (1.0 + a * sq_dist(yi, yj).powf(b))
}

fn sq_dist(yi: &[f64], yj: &[f64]) -> f64 {
    yi.iter().zip(yj).map(|(p, q)| (p - q) * (p - q)).sum()
}

/// Fuzzy set cross-entropy of one pair, with `w` clamped to `[eps, 1 - eps]`
/// and `0·log 0 = 0`.
pub fn cross_entropy(v: f64, w: f64, eps: f64) -> f64 {
    let w = w.clamp(eps, 1.0 - eps);
    let attract = if v > 0.0 { v * (v / w).ln() } else { 0.0 };
    let repel = if v < 1.0 {
        (1.0 - v) * ((1.0 - v) / (1.0 - w)).ln()
    } else {
        0.0
    };
    attract + repel
}

/// Attractive step direction for `yi`: `-2ab·d^(2(b-1)) / (1 + a·d^(2b)) · v · (yi - yj)`.
/// This is the gradient of `v·ln w` with respect to `yi`, i.e. the descent
/// direction of the attractive cross-entropy term.
pub fn attractive_gradient(yi: &[f64], yj: &[f64], v: f64, a: f64, b: f64) -> Vec<f64> {
    let coeff = attractive_coeff(sq_dist(yi, yj), v, a, b);
    yi.iter().zip(yj).map(|(p, q)| coeff * (p - q)).collect()
}

fn attractive_coeff(d2: f64, v: f64, a: f64, b: f64) -> f64 {
    if d2 <= 0.0 {
        return 0.0;
    }
    -2.0 * a * b * d2.powf(b - 1.0) / (1.0 + a * d2.powf(b)) * v
}

/// Repulsive step direction for `yi`:
/// `2b / ((eps + d²)(1 + a·d^(2b))) · (1 - v) · (yi - yj)`.
pub fn repulsive_gradient(yi: &[f64], yj: &[f64], v: f64, a: f64, b: f64, eps: f64) -> Vec<f64> {
    let coeff = repulsive_coeff(sq_dist(yi, yj), v, a, b, eps);
    yi.iter().zip(yj).map(|(p, q)| coeff * (p - q)).collect()
}

fn repulsive_coeff(d2: f64, v: f64, a: f64, b: f64, eps: f64) -> f64 {
    2.0 * b * (1.0 - v) / ((eps + d2) * (1.0 + a * d2.powf(b)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralInit {
    pub coordinates: Array2<f64>,
    /// `true` when the eigen-iteration failed and a uniform random layout
    /// was used instead.
    pub fallback: bool,
}

/// Initial layout from the eigenvectors of `I - D^-1/2 W D^-1/2` with the
/// smallest non-trivial eigenvalues, found by block subspace iteration on
/// `(I + D^-1/2 W D^-1/2) / 2` with the trivial vector `D^1/2·1` deflated.
pub fn spectral_init(graph: &NeighborGraph, out_dim: usize, seed: u64) -> Result<SpectralInit> {
    let n = graph.n_vertices();
    if n == 0 {
        return Err(Error::invalid("empty graph"));
    }
    if out_dim >= n {
        return Err(Error::invalid(format!(
            "out_dim too large: {out_dim} eigenvectors requested from a graph with {n} vertices"
        )));
    }
    let mut rng = rng::seeded(seed);
    let coords = match spectral_vectors(graph, out_dim, &mut rng) {
        Some(mut v) => {
            let max_abs = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if max_abs > 0.0 {
                v.mapv_inplace(|x| x * SPECTRAL_SCALE / max_abs);
            }
            for x in v.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut rng);
                *x += SPECTRAL_JITTER * z;
            }
            return Ok(SpectralInit {
                coordinates: v,
                fallback: false,
            });
        }
        None => Array2::from_shape_fn((n, out_dim), |_| rng.random_range(-SPECTRAL_SCALE..SPECTRAL_SCALE)),
    };
    log::info!("spectral initialisation did not converge; using uniform random layout");
    Ok(SpectralInit {
        coordinates: coords,
        fallback: true,
    })
}

fn spectral_vectors(graph: &NeighborGraph, out_dim: usize, rng: &mut rng::Rng) -> Option<Array2<f64>> {
    let n = graph.n_vertices();
    let mut degree = vec![0.0; n];
    for e in &graph.edges {
        degree[e.i] += e.v;
        degree[e.j] += e.v;
    }
    let inv_sqrt: Vec<f64> = degree.iter().map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 }).collect();
    let mut trivial = Array1::from_iter(degree.iter().map(|d| d.sqrt()));
    let tn = trivial.dot(&trivial).sqrt();
    if tn == 0.0 {
        return None;
    }
    trivial /= tn;

    // y = (x + M x) / 2 with M = D^-1/2 W D^-1/2, applied column-wise.
    let apply = |x: &Array2<f64>| -> Array2<f64> {
        let mut y = x.clone();
        for e in &graph.edges {
            let w = e.v * inv_sqrt[e.i] * inv_sqrt[e.j];
            for c in 0..x.ncols() {
                y[[e.i, c]] += w * x[[e.j, c]];
                y[[e.j, c]] += w * x[[e.i, c]];
            }
        }
        y.mapv_inplace(|v| 0.5 * v);
        y
    };

    let block = (out_dim + 4).min(n - 1);
    let mut v = Array2::from_shape_fn((n, block), |_| StandardNormal.sample(rng));
    if !orthonormalize(&mut v, &trivial, rng) {
        return None;
    }
    for iter in 0..SPECTRAL_MAX_ITERS {
        let mut z = apply(&v);
        if !orthonormalize(&mut z, &trivial, rng) {
            return None;
        }
        v = z;
        if iter % 10 != 9 {
            continue;
        }
        // Rayleigh-Ritz on the current block.
        let bv = apply(&v);
        let h = v.t().dot(&bv);
        let h = (&h + &h.t()) * 0.5;
        let (vals, vecs) = linalg::symmetric_eigen(&h).ok()?;
        let order: Vec<usize> = (0..block).rev().collect();
        let vecs = vecs.select(Axis(1), &order);
        let vals: Vec<f64> = order.iter().map(|&i| vals[i]).collect();
        v = v.dot(&vecs);
        let bv = bv.dot(&vecs);
        let converged = (0..out_dim).all(|c| {
            let r = &bv.column(c) - &(&v.column(c) * vals[c]);
            r.dot(&r).sqrt() < SPECTRAL_TOL
        });
        if converged {
            return Some(v.slice(ndarray::s![.., ..out_dim]).to_owned());
        }
    }
    None
}

/// Modified Gram-Schmidt against `deflate` and the preceding columns. A
/// column that collapses (its direction was annihilated by the operator) is
/// replaced by a fresh random vector.
fn orthonormalize(v: &mut Array2<f64>, deflate: &Array1<f64>, rng: &mut rng::Rng) -> bool {
    for c in 0..v.ncols() {
        if !orthonormalize_column(v, c, deflate) {
            let mut ok = false;
            for _ in 0..3 {
                for x in v.column_mut(c) {
                    *x = StandardNormal.sample(rng);
                }
                if orthonormalize_column(v, c, deflate) {
                    ok = true;
                    break;
                }
            }
            if !ok {
                return false;
            }
        }
    }
    true
}

fn orthonormalize_column(v: &mut Array2<f64>, c: usize, deflate: &Array1<f64>) -> bool {
    for _ in 0..2 {
        let mut col = v.column(c).to_owned();
        let dt = col.dot(deflate);
        col.scaled_add(-dt, deflate);
        for p in 0..c {
            let prev = v.column(p);
            let d = col.dot(&prev);
            col.scaled_add(-d, &prev);
        }
        v.column_mut(c).assign(&col);
    }
    let norm = v.column(c).dot(&v.column(c)).sqrt();
    if !(norm > 1e-12) {
        return false;
    }
    v.column_mut(c).mapv_inplace(|x| x / norm);
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    /// `N × e` layout coordinates.
    pub coordinates: Array2<f64>,
    pub a: f64,
    pub b: f64,
    /// Cross-entropy estimate after the last epoch (or of the initial layout
    /// when no epochs ran).
    pub final_loss: f64,
    /// Cross-entropy estimate after each epoch.
    pub loss_history: Vec<f64>,
    pub init_fallback: bool,
}

/// Stochastic layout optimization with negative sampling.
///
/// Every epoch visits each edge in both orientations in a seeded shuffled
/// order. The anchor and its partner are pulled together by the attractive
/// step; then `negative_samples` uniformly drawn points push the anchor away.
/// Steps are clipped per coordinate to `[-4, 4]` and scaled by a learning
/// rate that decays linearly to zero.
pub fn optimize_layout(graph: &NeighborGraph, init: &Array2<f64>, config: &UmapConfig) -> Result<Embedding> {
    let n = graph.n_vertices();
    if init.nrows() != n {
        return Err(Error::invalid(format!(
            "initial layout has {} rows for {n} vertices",
            init.nrows()
        )));
    }
    let dim = init.ncols();
    let (a, b, eps) = (config.a, config.b, config.eps);
    let mut y: Vec<f64> = init.iter().copied().collect();
    let mut rng = rng::seeded(config.seed);

    let directed: Vec<(usize, usize, f64)> = graph
        .edges
        .iter()
        .flat_map(|e| [(e.i, e.j, e.v), (e.j, e.i, e.v)])
        .collect();
    // Fixed negative pairs for a low-variance loss estimate.
    let probe: Vec<(usize, usize)> = if n > 1 {
        (0..graph.edges.len() * config.negative_samples.max(1))
            .map(|t| {
                let i = graph.edges[t % graph.edges.len()].i;
                let mut k = rng.random_range(0..n - 1);
                if k >= i {
                    k += 1;
                }
                (i, k)
            })
            .collect()
    } else {
        Vec::new()
    };
    let estimate = |y: &[f64]| -> f64 {
        let row = |i: usize| &y[i * dim..(i + 1) * dim];
        let pos: f64 = graph
            .edges
            .iter()
            .map(|e| cross_entropy(e.v, low_dim_similarity(row(e.i), row(e.j), a, b), eps))
            .sum();
        let neg: f64 = probe
            .iter()
            .map(|&(i, k)| cross_entropy(0.0, low_dim_similarity(row(i), row(k), a, b), eps))
            .sum();
        pos + neg
    };

    let mut order: Vec<usize> = (0..directed.len()).collect();
    let mut loss_history = Vec::with_capacity(config.epochs);
    let mut step = vec![0.0; dim];
    for epoch in 0..config.epochs {
        let lr = config.initial_learning_rate * (1.0 - epoch as f64 / config.epochs as f64);
        order.shuffle(&mut rng);
        for &t in &order {
            let (i, j, v) = directed[t];
            let d2 = sq_dist_rows(&y, dim, i, j);
            let coeff = attractive_coeff(d2, v, a, b);
            for c in 0..dim {
                step[c] = (coeff * (y[i * dim + c] - y[j * dim + c])).clamp(-GRAD_CLIP, GRAD_CLIP);
            }
            for c in 0..dim {
                y[i * dim + c] += lr * step[c];
                y[j * dim + c] -= lr * step[c];
            }
            for _ in 0..config.negative_samples {
                let k = rng.random_range(0..n);
                if k == i {
                    continue;
                }
                let d2 = sq_dist_rows(&y, dim, i, k);
                let coeff = repulsive_coeff(d2, 0.0, a, b, eps);
                for c in 0..dim {
                    let g = (coeff * (y[i * dim + c] - y[k * dim + c])).clamp(-GRAD_CLIP, GRAD_CLIP);
                    y[i * dim + c] += lr * g;
                }
            }
            if y[i * dim..(i + 1) * dim].iter().chain(&y[j * dim..(j + 1) * dim]).any(|x| !x.is_finite()) {
                return Err(Error::numerical(format!(
                    "non-finite layout coordinate at epoch {epoch}, edge ({i}, {j})"
                )));
            }
        }
        loss_history.push(estimate(&y));
    }
    let final_loss = loss_history.last().copied().unwrap_or_else(|| estimate(&y));
    let coordinates = Array2::from_shape_vec((n, dim), y).expect("shape preserved");
    Ok(Embedding {
        coordinates,
        a,
        b,
        final_loss,
        loss_history,
        init_fallback: false,
    })
}

fn sq_dist_rows(y: &[f64], dim: usize, i: usize, j: usize) -> f64 {
    (0..dim).map(|c| (y[i * dim + c] - y[j * dim + c]).powi(2)).sum()
}

/// Graph construction, spectral initialisation and layout optimization.
pub fn embed(x: &Array2<f64>, config: &UmapConfig) -> Result<(NeighborGraph, Embedding)> {
    config.validate()?;
    if x.nrows() <= config.k {
        return Err(Error::invalid(format!(
            "UMAP needs more than k = {} samples, got {}",
            config.k,
            x.nrows()
        )));
    }
    let graph = NeighborGraph::build(x, config)?;
    let init = spectral_init(&graph, config.out_dim, config.seed)?;
    let mut embedding = optimize_layout(&graph, &init.coordinates, config)?;
    embedding.init_fallback = init.fallback;
    Ok((graph, embedding))
}

/// Out-of-sample placement: each new point is the average of the layout
/// coordinates of its k nearest reference points, weighted by the directed
/// membership `exp(-max(0, d - rho_j) / sigma_j)` of each reference point.
/// A point coinciding with a reference point takes that point's coordinates.
pub fn transform_points(
    reference: &Array2<f64>,
    graph: &NeighborGraph,
    coordinates: &Array2<f64>,
    x_new: &Array2<f64>,
) -> Result<Array2<f64>> {
    if x_new.ncols() != reference.ncols() {
        return Err(Error::Schema(format!(
            "expected {} columns for embedding, got {}",
            reference.ncols(),
            x_new.ncols()
        )));
    }
    let n_ref = reference.nrows();
    let k = graph.k.min(n_ref);
    let dim = coordinates.ncols();
    let mut out = Array2::zeros((x_new.nrows(), dim));
    let mut cand: Vec<(f64, usize)> = Vec::with_capacity(n_ref);
    for (r, x) in x_new.rows().into_iter().enumerate() {
        cand.clear();
        cand.extend(reference.rows().into_iter().enumerate().map(|(j, p)| (euclidean(x, p), j)));
        cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let (d0, j0) = cand[0];
        if d0 < 1e-12 {
            out.row_mut(r).assign(&coordinates.row(j0));
            continue;
        }
        let mut total = 0.0;
        let mut acc = Array1::<f64>::zeros(dim);
        for &(d, j) in &cand[..k] {
            let w = directed_weight(d, graph.rho[j], graph.sigma[j]);
            total += w;
            acc.scaled_add(w, &coordinates.row(j));
        }
        if total > 0.0 && total.is_finite() {
            out.row_mut(r).assign(&(acc / total));
        } else {
            out.row_mut(r).assign(&coordinates.row(j0));
        }
    }
    Ok(out)
}

/// Writes coordinates as CSV with columns `dim_0..dim_{e-1},label`.
pub fn write_embedding_csv(path: &Path, coordinates: &Array2<f64>, labels: &[usize]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    let header: Vec<String> = (0..coordinates.ncols()).map(|c| format!("dim_{c}")).collect();
    writeln!(out, "{},label", header.join(",")).map_err(io)?;
    for (row, label) in coordinates.rows().into_iter().zip(labels) {
        let cells: Vec<String> = row.iter().map(|x| x.to_string()).collect();
        writeln!(out, "{},{label}", cells.join(",")).map_err(io)?;
    }
    out.flush().map_err(io)
}

/// Reads an embedding CSV written by [`write_embedding_csv`].
pub fn read_embedding_csv(path: &Path) -> Result<(Array2<f64>, Vec<usize>)> {
    let data = crate::dataset::load_csv(path, "label")?;
    Ok((data.features, data.labels))
}
