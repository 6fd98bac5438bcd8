//! Small dense helpers shared across the crate: stable sigmoid/logit,
//! Cholesky solves for the K x K normal equations, and a symmetric
//! tridiagonal eigensolver used by the Lanczos path.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of `sigmoid`. Caller must keep `p` strictly inside (0, 1).
pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Least-squares slope of ln(y) against ln(x). Pairs with a nonpositive
/// coordinate are dropped; None when fewer than two usable pairs remain or
/// the x values do not spread.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    assert_eq!(xs.len(), ys.len());
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys)
        .filter(|(&x, &y)| x > 0.0 && y > 0.0)
        .map(|(&x, &y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx <= 0.0 {
        return None;
    }
    Some(sxy / sxx)
}

/// Cholesky factor of a symmetric positive definite matrix.
///
/// Factored once and reused for repeated solves; the community Gram matrix
/// is K x K so this is always cheap.
#[derive(Debug, Clone)]
pub struct Cholesky {
    l: Array2<f64>,
}

impl Cholesky {
    pub fn new(a: &Array2<f64>) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Shape(format!(
                "cholesky needs a square matrix, got {}x{}",
                a.nrows(),
                a.ncols()
            )));
        }
        let mut l = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let mut d = a[[j, j]];
            for k in 0..j {
                d -= l[[j, k]] * l[[j, k]];
            }
            if !(d > 0.0) || !d.is_finite() {
                return Err(Error::Numerical(format!(
                    "matrix is not positive definite (pivot {} at column {})",
                    d, j
                )));
            }
            let dj = d.sqrt();
            l[[j, j]] = dj;
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / dj;
            }
        }
        Ok(Self { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Solves A x = b in place.
    pub fn solve_in_place(&self, b: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(b.len(), n);
        // forward: L y = b
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[[i, k]] * b[k];
            }
            b[i] = s / self.l[[i, i]];
        }
        // backward: L^T x = y
        for i in (0..n).rev() {
            let mut s = b[i];
            for k in (i + 1)..n {
                s -= self.l[[k, i]] * b[k];
            }
            b[i] = s / self.l[[i, i]];
        }
    }

    /// Solves A X = B column by column.
    pub fn solve_mat(&self, b: &Array2<f64>) -> Array2<f64> {
        let n = self.dim();
        debug_assert_eq!(b.nrows(), n);
        let mut out = b.clone();
        let cols = b.ncols();
        let mut col = vec![0.0; n];
        for j in 0..cols {
            for i in 0..n {
                col[i] = out[[i, j]];
            }
            self.solve_in_place(&mut col);
            for i in 0..n {
                out[[i, j]] = col[i];
            }
        }
        out
    }
}

/// Eigendecomposition of a symmetric tridiagonal matrix by the implicit QL
/// algorithm. `d` holds the diagonal, `e[i]` couples rows i and i+1
/// (`e.len() == d.len() - 1`). Returns eigenvalues ascending with matching
/// eigenvector columns when `with_vectors` is set (unit columns otherwise
/// the vector matrix is 0x0).
pub(crate) fn tridiag_eigen(
    d_in: &[f64],
    e_in: &[f64],
    with_vectors: bool,
) -> (Array1<f64>, Array2<f64>) {
    let n = d_in.len();
    assert!(n > 0 && e_in.len() + 1 == n);
    let mut d = d_in.to_vec();
    // e[i] couples rows i and i+1; the last slot is scratch space
    let mut e = vec![0.0; n];
    e[..n - 1].copy_from_slice(e_in);
    let mut z = if with_vectors {
        Array2::<f64>::eye(n)
    } else {
        Array2::<f64>::zeros((0, 0))
    };

    for l in 0..n {
        let mut iter = 0;
        loop {
            // locate the first negligible off-diagonal element at or after l
            let mut m = l;
            while m < n - 1 {
                let dd = d[m].abs() + d[m + 1].abs();
                if e[m].abs() <= f64::EPSILON * dd {
                    break;
                }
                m += 1;
            }
            if m == l {
                break;
            }
            iter += 1;
            assert!(iter <= 64, "tridiagonal QL failed to converge");
            // implicit shift from the leading 2x2 block
            let mut g = (d[l + 1] - d[l]) / (2.0 * e[l]);
            let mut r = g.hypot(1.0);
            let shifted = if g >= 0.0 { g + r } else { g - r };
            g = d[m] - d[l] + e[l] / shifted;
            let mut s = 1.0;
            let mut c = 1.0;
            let mut p = 0.0;
            let mut underflow = false;
            for i in (l..m).rev() {
                let f = s * e[i];
                let b = c * e[i];
                r = f.hypot(g);
                e[i + 1] = r;
                if r == 0.0 {
                    d[i + 1] -= p;
                    e[m] = 0.0;
                    underflow = true;
                    break;
                }
                s = f / r;
                c = g / r;
                g = d[i + 1] - p;
                r = (d[i] - g) * s + 2.0 * c * b;
                p = s * r;
                d[i + 1] = g + p;
                g = c * r - b;
                if with_vectors {
                    for k in 0..n {
                        let fz = z[[k, i + 1]];
                        z[[k, i + 1]] = s * z[[k, i]] + c * fz;
                        z[[k, i]] = c * z[[k, i]] - s * fz;
                    }
                }
            }
            if underflow {
                continue;
            }
            d[l] -= p;
            e[l] = g;
            e[m] = 0.0;
        }
    }

    // sort ascending, permute vector columns to match
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| d[a].partial_cmp(&d[b]).unwrap());
    let values = Array1::from_iter(order.iter().map(|&i| d[i]));
    let vectors = if with_vectors {
        let mut out = Array2::<f64>::zeros((n, n));
        for (new, &old) in order.iter().enumerate() {
            for k in 0..n {
                out[[k, new]] = z[[k, old]];
            }
        }
        out
    } else {
        z
    };
    (values, vectors)
}
