//! Lanczos iteration for the leading eigenpairs of a sparse symmetric
//! adjacency, ordered by eigenvalue magnitude.
//!
//! The basis is kept orthonormal with full reorthogonalization (two
//! Gram-Schmidt passes per step), which is cheap at the Krylov dimensions
//! used here and removes the ghost-eigenvalue failure mode entirely.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::CsrMatrix;
use crate::linalg::tridiag_eigen;

/// How often the tridiagonal spectrum is re-examined for stabilization.
const CHECK_EVERY: usize = 8;
/// Relative stall tolerance for the stabilization test.
const STALL_TOL: f64 = 1e-11;

#[derive(Debug, Clone)]
pub struct LanczosConfig {
    /// Cap on the Krylov dimension (clamped to N).
    pub max_iter: usize,
    /// Relative residual accepted per eigenpair.
    pub tol: f64,
    pub seed: u64,
}

impl Default for LanczosConfig {
    fn default() -> Self {
        Self { max_iter: 300, tol: 1e-6, seed: 7 }
    }
}

/// Converged leading eigenpairs. `values[i]` matches column i of
/// `vectors`; columns are unit length with a deterministic sign.
#[derive(Debug, Clone)]
pub struct Eigenpairs {
    pub values: Array1<f64>,
    pub vectors: Array2<f64>,
    /// False when fewer pairs than requested met the residual tolerance.
    pub all_converged: bool,
    pub krylov_dim: usize,
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn random_direction(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Two-pass Gram-Schmidt of `w` against every basis vector.
fn reorthogonalize(w: &mut [f64], basis: &[Vec<f64>]) {
    for _ in 0..2 {
        for b in basis {
            let c = dot(w, b);
            for (wi, bi) in w.iter_mut().zip(b) {
                *wi -= c * bi;
            }
        }
    }
}

/// Draw a unit vector orthogonal to the current basis; None once the space
/// is exhausted.
fn fresh_orthogonal(
    n: usize,
    basis: &[Vec<f64>],
    rng: &mut ChaCha8Rng,
) -> Option<Vec<f64>> {
    for _ in 0..20 {
        let mut w = random_direction(n, rng);
        reorthogonalize(&mut w, basis);
        let nw = norm(&w);
        if nw > 1e-8 * (n as f64).sqrt() {
            for x in w.iter_mut() {
                *x /= nw;
            }
            return Some(w);
        }
    }
    None
}

/// Indices of the `want` largest entries by absolute value, descending.
fn top_by_magnitude(vals: &Array1<f64>, want: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..vals.len()).collect();
    idx.sort_by(|&a, &b| {
        vals[b]
            .abs()
            .partial_cmp(&vals[a].abs())
            .unwrap()
            .then(a.cmp(&b))
    });
    idx.truncate(want);
    idx
}

/// Leading `n_pairs` eigenpairs of `a` by |eigenvalue|. The iteration grows
/// the Krylov space until the leading tridiagonal eigenvalues stall, then
/// verifies each Ritz pair against an explicit residual; pairs that fail
/// are dropped and the result is flagged.
pub fn leading_eigenpairs(
    a: &CsrMatrix,
    n_pairs: usize,
    cfg: &LanczosConfig,
) -> Result<Eigenpairs> {
    let n = a.n();
    if n == 0 {
        return Err(Error::Invalid("cannot take eigenpairs of an empty graph".into()));
    }
    if n_pairs == 0 {
        return Err(Error::Invalid("requested zero eigenpairs".into()));
    }
    let want = n_pairs.min(n);
    let m_max = cfg.max_iter.clamp(want, n);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(m_max);
    let mut alphas: Vec<f64> = Vec::with_capacity(m_max);
    let mut betas: Vec<f64> = Vec::new();
    let first = fresh_orthogonal(n, &basis, &mut rng)
        .ok_or_else(|| Error::Numerical("could not draw a starting vector".into()))?;
    basis.push(first);
    // magnitude scale of A seen so far, for breakdown and stall thresholds
    let mut scale = 0.0f64;
    let mut prev_top: Option<Vec<f64>> = None;

    for j in 0..m_max {
        let mut w = a.matvec(&basis[j]);
        let alpha = dot(&w, &basis[j]);
        alphas.push(alpha);
        reorthogonalize(&mut w, &basis);
        let beta = norm(&w);
        scale = scale.max(alpha.abs()).max(beta);
        if j + 1 == m_max {
            break;
        }
        if beta > 1e-12 * scale.max(1.0) {
            for x in w.iter_mut() {
                *x /= beta;
            }
            betas.push(beta);
            basis.push(w);
        } else {
            // invariant subspace found: restart in a fresh direction with a
            // zero coupling so T keeps its block structure
            match fresh_orthogonal(n, &basis, &mut rng) {
                Some(v) => {
                    betas.push(0.0);
                    basis.push(v);
                }
                None => break,
            }
        }
        let dim = alphas.len();
        if dim >= want && dim % CHECK_EVERY == 0 {
            let (vals, _) = tridiag_eigen(&alphas, &betas[..dim - 1], false);
            let top: Vec<f64> =
                top_by_magnitude(&vals, want).iter().map(|&i| vals[i]).collect();
            if let Some(prev) = &prev_top {
                if prev.len() == top.len() {
                    let stalled = prev
                        .iter()
                        .zip(&top)
                        .all(|(p, t)| (p - t).abs() <= STALL_TOL * scale.max(1.0));
                    if stalled {
                        break;
                    }
                }
            }
            prev_top = Some(top);
        }
    }

    let m = alphas.len();
    let (vals, z) = tridiag_eigen(&alphas, &betas[..m - 1], true);
    let order = top_by_magnitude(&vals, want);

    let mut kept_vals = Vec::with_capacity(want);
    let mut kept_vecs: Vec<Vec<f64>> = Vec::with_capacity(want);
    let mut all_converged = true;
    for &col in &order {
        let theta = vals[col];
        // Ritz vector y = V z_col; basis may hold one extra vector when the
        // loop broke right after expanding it
        let mut y = vec![0.0f64; n];
        for (i, b) in basis.iter().take(m).enumerate() {
            let zi = z[[i, col]];
            if zi != 0.0 {
                for (yv, bv) in y.iter_mut().zip(b) {
                    *yv += zi * bv;
                }
            }
        }
        let ny = norm(&y);
        if ny <= 1e-12 {
            all_converged = false;
            continue;
        }
        for v in y.iter_mut() {
            *v /= ny;
        }
        let ay = a.matvec(&y);
        let resid = ay
            .iter()
            .zip(&y)
            .map(|(av, yv)| {
                let r = av - theta * yv;
                r * r
            })
            .sum::<f64>()
            .sqrt();
        if resid <= cfg.tol * theta.abs() + 1e-12 * (1.0 + scale) {
            // deterministic sign: largest-magnitude entry is positive
            let lead = y
                .iter()
                .enumerate()
                .max_by(|(_, a), (_, b)| a.abs().partial_cmp(&b.abs()).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            if y[lead] < 0.0 {
                for v in y.iter_mut() {
                    *v = -*v;
                }
            }
            kept_vals.push(theta);
            kept_vecs.push(y);
        } else {
            all_converged = false;
        }
    }

    let mut vectors = Array2::zeros((n, kept_vecs.len()));
    for (c, vc) in kept_vecs.iter().enumerate() {
        for (i, &v) in vc.iter().enumerate() {
            vectors[[i, c]] = v;
        }
    }
    Ok(Eigenpairs {
        values: Array1::from_vec(kept_vals),
        vectors,
        all_converged,
        krylov_dim: m,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{gen_erdos_renyi, CsrMatrix};
    use approx::assert_relative_eq;

    fn cycle_graph(n: usize) -> CsrMatrix {
        let entries: Vec<(usize, usize, f64)> =
            (0..n).map(|i| (i, (i + 1) % n, 1.0)).collect();
        CsrMatrix::from_entries(n, &entries, false).unwrap()
    }

    #[test]
    fn cycle_spectrum_is_recovered() {
        // eigenvalues of the n-cycle are 2 cos(2 pi k / n)
        let n = 12;
        let a = cycle_graph(n);
        let got = leading_eigenpairs(&a, 3, &LanczosConfig::default()).unwrap();
        assert!(got.all_converged);
        assert_eq!(got.values.len(), 3);
        assert_relative_eq!(got.values[0], 2.0, epsilon = 1e-8);
        // the next magnitudes are 2cos(pi/6) twice and -2 once; top three
        // by magnitude are {2, -2, 2cos(pi/6)} in some residual order
        let mags: Vec<f64> = got.values.iter().map(|v| v.abs()).collect();
        assert_relative_eq!(mags[0], 2.0, epsilon = 1e-8);
        assert_relative_eq!(mags[1], 2.0, epsilon = 1e-8);
    }

    #[test]
    fn residuals_hold_on_random_graph() {
        let g = gen_erdos_renyi(80, 0.3, 5).unwrap();
        let cfg = LanczosConfig::default();
        let got = leading_eigenpairs(g.adjacency(), 6, &cfg).unwrap();
        assert!(got.all_converged);
        assert_eq!(got.values.len(), 6);
        for c in 0..6 {
            let y: Vec<f64> = got.vectors.column(c).to_vec();
            let ay = g.adjacency().matvec(&y);
            let resid: f64 = ay
                .iter()
                .zip(&y)
                .map(|(a, v)| (a - got.values[c] * v).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(resid <= 1e-6 * got.values[c].abs() + 1e-10);
        }
        // magnitudes come out descending
        for c in 1..6 {
            assert!(got.values[c - 1].abs() >= got.values[c].abs() - 1e-12);
        }
    }

    #[test]
    fn vectors_are_orthonormal() {
        let g = gen_erdos_renyi(60, 0.4, 11).unwrap();
        let got = leading_eigenpairs(g.adjacency(), 5, &LanczosConfig::default()).unwrap();
        for i in 0..5 {
            for j in 0..5 {
                let d: f64 = got
                    .vectors
                    .column(i)
                    .iter()
                    .zip(got.vectors.column(j).iter())
                    .map(|(a, b)| a * b)
                    .sum();
                let want = if i == j { 1.0 } else { 0.0 };
                assert_relative_eq!(d, want, epsilon = 1e-8);
            }
        }
    }

    #[test]
    fn handles_disconnected_components() {
        // two disjoint triangles: eigenvalue 2 has multiplicity 2, which
        // plain Lanczos cannot see without the breakdown restart
        let mut entries = Vec::new();
        for base in [0usize, 3] {
            for i in 0..3 {
                entries.push((base + i, base + (i + 1) % 3, 1.0));
            }
        }
        let a = CsrMatrix::from_entries(6, &entries, false).unwrap();
        let got = leading_eigenpairs(&a, 2, &LanczosConfig::default()).unwrap();
        assert!(got.all_converged);
        assert_relative_eq!(got.values[0], 2.0, epsilon = 1e-9);
        assert_relative_eq!(got.values[1], 2.0, epsilon = 1e-9);
        // the two eigenvectors must straddle both components
        let v0: Vec<f64> = got.vectors.column(0).to_vec();
        let v1: Vec<f64> = got.vectors.column(1).to_vec();
        let mass_first: f64 = v0[..3].iter().map(|v| v * v).sum::<f64>()
            + v1[..3].iter().map(|v| v * v).sum::<f64>();
        assert_relative_eq!(mass_first, 1.0, epsilon = 1e-8);
    }

    #[test]
    fn empty_graph_yields_zero_pairs() {
        let a = CsrMatrix::from_entries(5, &[], false).unwrap();
        let got = leading_eigenpairs(&a, 2, &LanczosConfig::default()).unwrap();
        assert!(got.all_converged);
        for v in got.values.iter() {
            assert_relative_eq!(*v, 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn deterministic_in_seed() {
        let g = gen_erdos_renyi(50, 0.3, 2).unwrap();
        let cfg = LanczosConfig { seed: 99, ..Default::default() };
        let a = leading_eigenpairs(g.adjacency(), 4, &cfg).unwrap();
        let b = leading_eigenpairs(g.adjacency(), 4, &cfg).unwrap();
        assert_eq!(a.values, b.values);
        assert_eq!(a.vectors, b.vectors);
    }

    #[test]
    fn rejects_zero_requests() {
        let a = cycle_graph(4);
        assert!(leading_eigenpairs(&a, 0, &LanczosConfig::default()).is_err());
    }
}
