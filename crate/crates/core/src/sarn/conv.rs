//! Valid (unpadded, stride 1) convolution and its factorized sparse form.
//!
//! Tensors use `(row, col, channel)` for feature maps and
//! `(kernel_row, kernel_col, in_channel, out_channel)` for kernels. Kernels
//! may be rectangular so that tabular data can use `1 × s` kernels on a
//! `1 × w × 1` map.
//!
//! The factorized form replaces a dense kernel `K` by a channel-mixing matrix
//! `P` and per-input-channel factors: `K(u,v,i,j) ≈ Σ_k R(u,v,k,j)·P(k,i)`
//! with `R(u,v,i,j) ≈ Σ_k S_i(k,j)·Q_i(u,v,k)`. The forward pass then mixes
//! channels with `P`, convolves each channel with its `q₁` basis filters and
//! combines the basis responses with `S_i`.

use ndarray::{s, Array2, Array3, Array4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub height: usize,
    pub width: usize,
    pub in_channels: usize,
    pub kernel_height: usize,
    pub kernel_width: usize,
    pub out_channels: usize,
    pub rank: usize,
}

impl ConvSpec {
    /// A `1 × width × 1` map with `1 × kernel` kernels.
    pub fn tabular(width: usize, kernel: usize, out_channels: usize, rank: usize) -> Self {
        Self {
            height: 1,
            width,
            in_channels: 1,
            kernel_height: 1,
            kernel_width: kernel,
            out_channels,
            rank,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.kernel_height == 0 || self.kernel_width == 0 {
            return Err(Error::invalid("kernel size must be positive"));
        }
        if self.kernel_height > self.height || self.kernel_width > self.width {
            return Err(Error::invalid(format!(
                "kernel {}x{} larger than input {}x{}",
                self.kernel_height, self.kernel_width, self.height, self.width
            )));
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(Error::invalid("channel counts must be positive"));
        }
        let max_rank = (self.kernel_height * self.kernel_width).min(self.out_channels);
        if self.rank == 0 || self.rank > max_rank {
            return Err(Error::invalid(format!("rank {} outside 1..={max_rank}", self.rank)));
        }
        Ok(())
    }

    pub fn output_height(&self) -> usize {
        self.height - self.kernel_height + 1
    }

    pub fn output_width(&self) -> usize {
        self.width - self.kernel_width + 1
    }

    pub fn positions(&self) -> usize {
        self.output_height() * self.output_width()
    }
}

/// `O(y,x,j) = Σ_i Σ_{u,v} K(u,v,i,j)·I(y+u, x+v, i)`.
pub fn direct_conv(input: &Array3<f64>, kernel: &Array4<f64>) -> Result<Array3<f64>> {
    let (h, w, m) = input.dim();
    let (kh, kw, km, n) = kernel.dim();
    if km != m {
        return Err(Error::invalid(format!(
            "kernel expects {km} input channels, input has {m}"
        )));
    }
    if kh > h || kw > w || kh == 0 || kw == 0 {
        return Err(Error::invalid(format!("kernel {kh}x{kw} larger than input {h}x{w}")));
    }
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let mut out = Array3::zeros((oh, ow, n));
    for y in 0..oh {
        for x in 0..ow {
            for j in 0..n {
                let mut acc = 0.0;
                for i in 0..m {
                    for u in 0..kh {
                        for v in 0..kw {
                            acc += kernel[[u, v, i, j]] * input[[y + u, x + v, i]];
                        }
                    }
                }
                out[[y, x, j]] = acc;
            }
        }
    }
    Ok(out)
}

fn check_mixing(p: &Array2<f64>, m: usize) -> Result<()> {
    if p.nrows() != m || p.ncols() != m {
        return Err(Error::invalid(format!(
            "channel-mixing matrix is {}x{}, expected {m}x{m}",
            p.nrows(),
            p.ncols()
        )));
    }
    Ok(())
}

/// Mixes input channels: `J(y,x,i) = Σ_k P(i,k)·I(y,x,k)`.
pub fn transform_input(input: &Array3<f64>, p: &Array2<f64>) -> Result<Array3<f64>> {
    let (h, w, m) = input.dim();
    check_mixing(p, m)?;
    let mut out = Array3::zeros((h, w, m));
    for y in 0..h {
        for x in 0..w {
            for i in 0..m {
                out[[y, x, i]] = (0..m).map(|k| p[[i, k]] * input[[y, x, k]]).sum();
            }
        }
    }
    Ok(out)
}

/// Kernel `R` acting on mixed input so that `R * J = K * I`:
/// `R(u,v,k,j) = Σ_i K(u,v,i,j)·P⁻¹(i,k)`.
pub fn transform_kernel(kernel: &Array4<f64>, p: &Array2<f64>) -> Result<Array4<f64>> {
    let (kh, kw, m, n) = kernel.dim();
    check_mixing(p, m)?;
    let p_inv = linalg::invert(p)?;
    let mut r = Array4::zeros((kh, kw, m, n));
    for u in 0..kh {
        for v in 0..kw {
            for k in 0..m {
                for j in 0..n {
                    r[[u, v, k, j]] = (0..m).map(|i| kernel[[u, v, i, j]] * p_inv[[i, k]]).sum();
                }
            }
        }
    }
    Ok(r)
}

/// Original-space kernel implied by `R` and `P`: `K(u,v,i,j) = Σ_k R(u,v,k,j)·P(k,i)`.
pub fn reconstruct_kernel(r: &Array4<f64>, p: &Array2<f64>) -> Result<Array4<f64>> {
    let (kh, kw, m, n) = r.dim();
    check_mixing(p, m)?;
    let mut k = Array4::zeros((kh, kw, m, n));
    for u in 0..kh {
        for v in 0..kw {
            for i in 0..m {
                for j in 0..n {
                    k[[u, v, i, j]] = (0..m).map(|c| r[[u, v, c, j]] * p[[c, i]]).sum();
                }
            }
        }
    }
    Ok(k)
}

/// Channel-mixing matrix plus per-channel low-rank factors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorizedKernel {
    /// `m × m`
    pub p: Array2<f64>,
    /// `S_i` stacked: `m × q₁ × n`.
    pub s: Array3<f64>,
    /// `Q_i` stacked: `m × kh × kw × q₁`.
    pub q: Array4<f64>,
    /// Frobenius error of each channel's rank-`q₁` truncation.
    pub reconstruction_error: Vec<f64>,
}

impl FactorizedKernel {
    /// Factorizes `K` for a given `P`: `R = K·P⁻¹`, then a rank-`q₁`
    /// truncated SVD of each channel slice of `R`.
    pub fn from_kernel(kernel: &Array4<f64>, p: Array2<f64>, rank: usize) -> Result<Self> {
        let r = transform_kernel(kernel, &p)?;
        let (s, q, reconstruction_error) = factorize_kernel(&r, rank)?;
        Ok(Self {
            p,
            s,
            q,
            reconstruction_error,
        })
    }

    pub fn rank(&self) -> usize {
        self.s.dim().1
    }

    pub fn in_channels(&self) -> usize {
        self.p.nrows()
    }

    pub fn out_channels(&self) -> usize {
        self.s.dim().2
    }

    pub fn kernel_dims(&self) -> (usize, usize) {
        let (_, kh, kw, _) = self.q.dim();
        (kh, kw)
    }

    /// `R(u,v,i,j) = Σ_k S_i(k,j)·Q_i(u,v,k)`.
    pub fn transformed_kernel(&self) -> Array4<f64> {
        let (m, kh, kw, q1) = self.q.dim();
        let n = self.out_channels();
        let mut r = Array4::zeros((kh, kw, m, n));
        for i in 0..m {
            for u in 0..kh {
                for v in 0..kw {
                    for j in 0..n {
                        r[[u, v, i, j]] = (0..q1).map(|k| self.s[[i, k, j]] * self.q[[i, u, v, k]]).sum();
                    }
                }
            }
        }
        r
    }

    /// Dense kernel in the original input space.
    pub fn effective_kernel(&self) -> Array4<f64> {
        reconstruct_kernel(&self.transformed_kernel(), &self.p).expect("consistent shapes")
    }

    /// Zeroes entries of every `S_i` with magnitude below `threshold`;
    /// returns how many were zeroed.
    pub fn prune(&mut self, threshold: f64) -> usize {
        let mut zeroed = 0;
        for v in self.s.iter_mut() {
            if *v != 0.0 && v.abs() < threshold {
                *v = 0.0;
                zeroed += 1;
            }
        }
        zeroed
    }
}

/// Per-channel truncated SVD of `R(·,·,i,·)` reshaped to `(kh·kw) × n`.
/// Left singular vectors become `Q_i`, singular values times right vectors
/// become `S_i`. Returns `(S, Q, errors)` with `errors[i]` the Frobenius norm
/// of the discarded part of channel `i`.
#[allow(clippy::type_complexity)]
pub fn factorize_kernel(r: &Array4<f64>, rank: usize) -> Result<(Array3<f64>, Array4<f64>, Vec<f64>)> {
    let (kh, kw, m, n) = r.dim();
    let max_rank = (kh * kw).min(n);
    if rank == 0 || rank > max_rank {
        return Err(Error::invalid(format!("rank {rank} outside 1..={max_rank}")));
    }
    let mut s_all = Array3::zeros((m, rank, n));
    let mut q_all = Array4::zeros((m, kh, kw, rank));
    let mut errors = Vec::with_capacity(m);
    for i in 0..m {
        let slice = r.slice(s![.., .., i, ..]);
        let mat = Array2::from_shape_fn((kh * kw, n), |(row, j)| slice[[row / kw, row % kw, j]]);
        let d = linalg::svd(&mat)?;
        for k in 0..rank {
            for row in 0..kh * kw {
                q_all[[i, row / kw, row % kw, k]] = d.u[[row, k]];
            }
            for j in 0..n {
                s_all[[i, k, j]] = d.s[k] * d.vt[[k, j]];
            }
        }
        errors.push(d.s.iter().skip(rank).map(|x| x * x).sum::<f64>().sqrt());
    }
    Ok((s_all, q_all, errors))
}

/// Intermediate maps of the factorized forward pass, kept for backprop.
#[derive(Debug, Clone)]
pub struct SparseForward {
    /// Channel-mixed input `J`, `h × w × m`.
    pub mixed: Array3<f64>,
    /// Basis responses `T_i`, stacked `m × oh × ow × q₁`.
    pub basis: Array4<f64>,
    /// Output `O`, `oh × ow × n`.
    pub output: Array3<f64>,
}

/// Factorized forward pass; see the module docs.
pub fn sparse_forward(input: &Array3<f64>, fk: &FactorizedKernel) -> Result<Array3<f64>> {
    Ok(sparse_forward_full(input, fk)?.output)
}

pub fn sparse_forward_full(input: &Array3<f64>, fk: &FactorizedKernel) -> Result<SparseForward> {
    let (h, w, m) = input.dim();
    let (qm, kh, kw, q1) = fk.q.dim();
    let (sm, sq, n) = fk.s.dim();
    if qm != m || sm != m || sq != q1 {
        return Err(Error::invalid(format!(
            "factor shapes (m={qm}/{sm}, q1={q1}/{sq}) do not match {m} input channels"
        )));
    }
    if kh > h || kw > w {
        return Err(Error::invalid(format!("kernel {kh}x{kw} larger than input {h}x{w}")));
    }
    let mixed = transform_input(input, &fk.p)?;
    let (oh, ow) = (h - kh + 1, w - kw + 1);
    let mut basis = Array4::zeros((m, oh, ow, q1));
    for i in 0..m {
        for y in 0..oh {
            for x in 0..ow {
                for k in 0..q1 {
                    let mut acc = 0.0;
                    for u in 0..kh {
                        for v in 0..kw {
                            acc += fk.q[[i, u, v, k]] * mixed[[y + u, x + v, i]];
                        }
                    }
                    basis[[i, y, x, k]] = acc;
                }
            }
        }
    }
    let mut output = Array3::zeros((oh, ow, n));
    for y in 0..oh {
        for x in 0..ow {
            for j in 0..n {
                let mut acc = 0.0;
                for i in 0..m {
                    for k in 0..q1 {
                        acc += fk.s[[i, k, j]] * basis[[i, y, x, k]];
                    }
                }
                output[[y, x, j]] = acc;
            }
        }
    }
    Ok(SparseForward { mixed, basis, output })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array};
    use rand::Rng;

    fn random4(rng: &mut crate::rng::Rng, dims: (usize, usize, usize, usize)) -> Array4<f64> {
        Array::from_shape_fn(dims, |_| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn identity_kernel_copies_input() {
        let input = Array3::from_shape_fn((3, 4, 2), |(y, x, c)| (y * 10 + x + c * 100) as f64);
        let mut k = Array4::zeros((1, 1, 2, 2));
        k[[0, 0, 0, 0]] = 1.0;
        k[[0, 0, 1, 1]] = 1.0;
        assert_eq!(direct_conv(&input, &k).unwrap(), input);
    }

    #[test]
    fn ones_convolution() {
        let out = direct_conv(&Array3::ones((3, 3, 1)), &Array4::ones((2, 2, 1, 1))).unwrap();
        assert_eq!(out, Array3::from_elem((2, 2, 1), 4.0));
        let zero = direct_conv(&Array3::ones((3, 3, 1)), &Array4::zeros((2, 2, 1, 3))).unwrap();
        assert!(zero.iter().all(|&v| v == 0.0));
        assert!(direct_conv(&Array3::ones((2, 2, 1)), &Array4::ones((3, 3, 1, 1))).is_err());
    }

    #[test]
    fn mixing_transforms() {
        let mut rng = crate::rng::seeded(2);
        let input = Array3::from_shape_fn((4, 4, 3), |_| rng.random_range(-1.0..1.0));
        let k = random4(&mut rng, (2, 2, 3, 2));
        assert_eq!(transform_input(&input, &Array2::eye(3)).unwrap(), input);

        // 3D rotation
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let p = array![[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]];
        let j = transform_input(&input, &p).unwrap();
        let r = transform_kernel(&k, &p).unwrap();
        let a = direct_conv(&j, &r).unwrap();
        let b = direct_conv(&input, &k).unwrap();
        assert!(a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < 1e-10));

        let p2 = Array2::eye(3) * 2.0;
        let r2 = transform_kernel(&k, &p2).unwrap();
        assert!(r2.iter().zip(k.iter()).all(|(x, y)| (x - 0.5 * y).abs() < 1e-15));
        let a2 = direct_conv(&transform_input(&input, &p2).unwrap(), &r2).unwrap();
        assert!(a2.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < 1e-12));
        assert!(transform_input(&input, &Array2::eye(2)).is_err());
    }

    #[test]
    fn full_rank_factorization_is_exact() {
        let mut rng = crate::rng::seeded(5);
        let r = random4(&mut rng, (2, 2, 2, 3));
        let (s, q, err) = factorize_kernel(&r, 3).unwrap();
        let fk = FactorizedKernel { p: Array2::eye(2), s, q, reconstruction_error: err.clone() };
        let back = fk.transformed_kernel();
        assert!(back.iter().zip(r.iter()).all(|(a, b)| (a - b).abs() < 1e-10));
        assert!(err.iter().all(|&e| e < 1e-10));
        assert!(factorize_kernel(&r, 0).is_err());
        assert!(factorize_kernel(&r, 4).is_err());
    }

    #[test]
    fn rank_one_slice_is_exact() {
        let a = [0.5, -1.0, 2.0, 0.25];
        let b = [1.0, 3.0, -2.0];
        let r = Array4::from_shape_fn((2, 2, 1, 3), |(u, v, _, j)| a[u * 2 + v] * b[j]);
        let (s, q, err) = factorize_kernel(&r, 1).unwrap();
        let fk = FactorizedKernel { p: Array2::eye(1), s, q, reconstruction_error: err.clone() };
        let back = fk.transformed_kernel();
        assert!(back.iter().zip(r.iter()).all(|(x, y)| (x - y).abs() < 1e-10));
        assert!(err[0] < 1e-10);
    }

    #[test]
    fn truncation_error_is_monotone() {
        let mut rng = crate::rng::seeded(8);
        let r = random4(&mut rng, (3, 3, 2, 5));
        let mut prev = vec![f64::INFINITY; 2];
        for q1 in 1..=5 {
            let (_, _, err) = factorize_kernel(&r, q1).unwrap();
            for (e, p) in err.iter().zip(&prev) {
                assert!(e <= &(p + 1e-12));
            }
            prev = err;
        }
    }

    #[test]
    fn sparse_forward_matches_direct() {
        let mut rng = crate::rng::seeded(11);
        let input = Array3::from_shape_fn((5, 6, 2), |_| rng.random_range(-1.0..1.0));
        let k = random4(&mut rng, (3, 3, 2, 4));
        let fk = FactorizedKernel::from_kernel(&k, Array2::eye(2), 4).unwrap();
        let a = sparse_forward(&input, &fk).unwrap();
        let b = direct_conv(&input, &k).unwrap();
        assert!(a.iter().zip(b.iter()).all(|(x, y)| (x - y).abs() < 1e-6));

        let mut zero = fk.clone();
        zero.s.fill(0.0);
        assert!(sparse_forward(&input, &zero).unwrap().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn tabular_shapes() {
        let spec = ConvSpec::tabular(7, 3, 4, 2);
        spec.validate().unwrap();
        assert_eq!(spec.positions(), 5);
        let input = Array3::from_shape_fn((1, 7, 1), |(_, x, _)| x as f64);
        let k = Array4::from_shape_fn((1, 3, 1, 4), |(_, v, _, j)| (v + j) as f64 * 0.1);
        let fk = FactorizedKernel::from_kernel(&k, Array2::eye(1), 2).unwrap();
        assert_eq!(sparse_forward(&input, &fk).unwrap().dim(), (1, 5, 4));
        assert!(ConvSpec::tabular(2, 3, 4, 2).validate().is_err());
        assert!(ConvSpec::tabular(7, 3, 4, 4).validate().is_err());
    }

    #[test]
    fn prune_zeroes_small_entries() {
        let mut fk = FactorizedKernel {
            p: Array2::eye(1),
            s: array![[[1e-4, 0.5], [-2e-4, 0.0]]],
            q: Array4::ones((1, 1, 2, 2)),
            reconstruction_error: vec![0.0],
        };
        assert_eq!(fk.prune(1e-3), 2);
        assert_eq!(fk.s, array![[[0.0, 0.5], [0.0, 0.0]]]);
    }
}
