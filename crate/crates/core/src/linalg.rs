//! Small dense linear-algebra kernels: cyclic Jacobi symmetric eigensolver,
//! one-sided Jacobi SVD and Gauss-Jordan inversion. Sizes here are tiny
//! (kernel slices, Ritz blocks, channel-mixing matrices).

use ndarray::{Array1, Array2, Axis};

use crate::error::{Error, Result};

const JACOBI_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric matrix. Eigenvalues are returned in
/// ascending order, eigenvectors as the matching columns.
pub fn symmetric_eigen(a: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::invalid("symmetric_eigen needs a square matrix"));
    }
    let mut m = a.clone();
    let mut v = Array2::<f64>::eye(n);
    let scale = m.iter().fold(0.0f64, |acc, x| acc.max(x.abs())).max(f64::MIN_POSITIVE);

    let mut converged = n <= 1;
    for _ in 0..JACOBI_SWEEPS {
        let mut off = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off += m[[p, q]] * m[[p, q]];
            }
        }
        if off.sqrt() <= 1e-15 * scale {
            converged = true;
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = m[[p, q]];
                if apq.abs() <= f64::MIN_POSITIVE {
                    continue;
                }
                let theta = (m[[q, q]] - m[[p, p]]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let mkp = m[[k, p]];
                    let mkq = m[[k, q]];
                    m[[k, p]] = c * mkp - s * mkq;
                    m[[k, q]] = s * mkp + c * mkq;
                }
                for k in 0..n {
                    let mpk = m[[p, k]];
                    let mqk = m[[q, k]];
                    m[[p, k]] = c * mpk - s * mqk;
                    m[[q, k]] = s * mpk + c * mqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    if !converged {
        return Err(Error::numerical("Jacobi eigensolver did not converge"));
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| m[[i, i]].total_cmp(&m[[j, j]]).then(i.cmp(&j)));
    let values = Array1::from_iter(order.iter().map(|&i| m[[i, i]]));
    let vectors = v.select(Axis(1), &order);
    Ok((values, vectors))
}

/// Thin singular value decomposition `a = u · diag(s) · vt`, singular values
/// descending. `u` is `rows × r`, `vt` is `r × cols` with `r = min(rows, cols)`.
#[derive(Debug, Clone)]
pub struct Svd {
    pub u: Array2<f64>,
    pub s: Array1<f64>,
    pub vt: Array2<f64>,
}

/// One-sided (Hestenes) Jacobi SVD.
pub fn svd(a: &Array2<f64>) -> Result<Svd> {
    let (rows, cols) = a.dim();
    if rows < cols {
        let t = svd(&a.t().to_owned())?;
        return Ok(Svd {
            u: t.vt.t().to_owned(),
            s: t.s,
            vt: t.u.t().to_owned(),
        });
    }
    // rows >= cols: orthogonalize the columns of w = a·v.
    let mut w = a.clone();
    let mut v = Array2::<f64>::eye(cols);
    let mut converged = cols <= 1;
    for _ in 0..JACOBI_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let (mut alpha, mut beta, mut gamma) = (0.0, 0.0, 0.0);
                for k in 0..rows {
                    alpha += w[[k, p]] * w[[k, p]];
                    beta += w[[k, q]] * w[[k, q]];
                    gamma += w[[k, p]] * w[[k, q]];
                }
                if gamma.abs() <= 1e-15 * (alpha * beta).sqrt() || gamma == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let t = if zeta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for k in 0..rows {
                    let wp = w[[k, p]];
                    let wq = w[[k, q]];
                    w[[k, p]] = c * wp - s * wq;
                    w[[k, q]] = s * wp + c * wq;
                }
                for k in 0..cols {
                    let vp = v[[k, p]];
                    let vq = v[[k, q]];
                    v[[k, p]] = c * vp - s * vq;
                    v[[k, q]] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::numerical("Jacobi SVD did not converge"));
    }

    let norms: Vec<f64> = (0..cols)
        .map(|j| w.column(j).iter().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let mut u = Array2::<f64>::zeros((rows, cols));
    let mut s = Array1::<f64>::zeros(cols);
    let mut vt = Array2::<f64>::zeros((cols, cols));
    for (dst, &src) in order.iter().enumerate() {
        let sigma = norms[src];
        s[dst] = sigma;
        if sigma > 0.0 {
            for k in 0..rows {
                u[[k, dst]] = w[[k, src]] / sigma;
            }
        }
        for k in 0..cols {
            vt[[dst, k]] = v[[k, src]];
        }
    }
    complete_orthonormal_columns(&mut u, &s);
    Ok(Svd { u, s, vt })
}

/// Replace the left vectors belonging to zero singular values with unit
/// vectors orthogonal to the rest, so `u` always has orthonormal columns.
fn complete_orthonormal_columns(u: &mut Array2<f64>, s: &Array1<f64>) {
    let rows = u.nrows();
    for j in 0..s.len() {
        if s[j] > 0.0 {
            continue;
        }
        for e in 0..rows {
            let mut cand = Array1::<f64>::zeros(rows);
            cand[e] = 1.0;
            for i in 0..u.ncols() {
                if i == j || (s[i] == 0.0 && i > j) {
                    continue;
                }
                let col = u.column(i);
                let dot = col.dot(&cand);
                cand.scaled_add(-dot, &col);
            }
            let norm = cand.dot(&cand).sqrt();
            if norm > 1e-8 {
                u.column_mut(j).assign(&(cand / norm));
                break;
            }
        }
    }
}

/// Inverse of a square matrix by Gauss-Jordan elimination with partial pivoting.
pub fn invert(a: &Array2<f64>) -> Result<Array2<f64>> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::invalid("invert needs a square matrix"));
    }
    let mut m = a.clone();
    let mut inv = Array2::<f64>::eye(n);
    let scale = m.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| m[[i, col]].abs().total_cmp(&m[[j, col]].abs()))
            .unwrap_or(col);
        if m[[pivot, col]].abs() <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
            return Err(Error::numerical("matrix is singular"));
        }
        if pivot != col {
            for k in 0..n {
                m.swap([pivot, k], [col, k]);
                inv.swap([pivot, k], [col, k]);
            }
        }
        let d = m[[col, col]];
        for k in 0..n {
            m[[col, k]] /= d;
            inv[[col, k]] /= d;
        }
        for r in 0..n {
            if r == col {
                continue;
            }
            let f = m[[r, col]];
            if f == 0.0 {
                continue;
            }
            for k in 0..n {
                m[[r, k]] -= f * m[[col, k]];
                inv[[r, k]] -= f * inv[[col, k]];
            }
        }
    }
    Ok(inv)
}
