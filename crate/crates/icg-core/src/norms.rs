//! Frobenius and cut norms for matrices, signals, and matrix-signal pairs.
//!
//! Matrix norms carry a 1/N^2 entrywise scaling and cut norms a 1/E
//! normalizer, so sparse graphs and their low-rank models are compared on a
//! common scale. The exact cut norm enumerates subsets and is guarded to
//! tiny matrices; the heuristic works on implicit operators and never
//! materializes a dense residual.

use ndarray::{Array1, Array2, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CsrMatrix;
use crate::icg::Icg;

/// Largest N accepted by the exact cut-norm enumeration (2^N subsets).
pub const MAX_EXACT_CUT_N: usize = 24;
/// Sweep cap for the alternating heuristic.
const MAX_SWEEPS: usize = 100;

/// Convex weights for matrix-signal pairs; alpha + beta = 1.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NormWeights {
    alpha: f64,
    beta: f64,
}

impl NormWeights {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !alpha.is_finite() || !beta.is_finite() || alpha < 0.0 || beta < 0.0 {
            return Err(Error::Invalid(format!("weights ({alpha}, {beta}) must be nonnegative")));
        }
        if (alpha + beta - 1.0).abs() > 1e-12 {
            return Err(Error::Invalid(format!(
                "weights ({alpha}, {beta}) must sum to 1 within 1e-12"
            )));
        }
        Ok(Self { alpha, beta })
    }

    pub fn matrix_only() -> Self {
        Self { alpha: 1.0, beta: 0.0 }
    }

    pub fn signal_only() -> Self {
        Self { alpha: 0.0, beta: 1.0 }
    }

    pub fn balanced() -> Self {
        Self { alpha: 0.5, beta: 0.5 }
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

/// sqrt(1/N^2 * sum b_ij^2). Identity on N nodes gives 1/sqrt(N).
pub fn frob_matrix(b: &Array2<f64>) -> f64 {
    let n = b.nrows();
    if n == 0 {
        return 0.0;
    }
    (b.iter().map(|v| v * v).sum::<f64>()).sqrt() / n as f64
}

/// Same scaling evaluated on a sparse matrix.
pub fn frob_matrix_sparse(a: &CsrMatrix) -> f64 {
    if a.n() == 0 {
        return 0.0;
    }
    a.sum_sq().sqrt() / a.n() as f64
}

/// sqrt(1/N * sum s_nj^2). The all-ones N x D signal gives sqrt(D).
pub fn frob_signal(s: &Array2<f64>) -> f64 {
    let n = s.nrows();
    if n == 0 {
        return 0.0;
    }
    (s.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt()
}

/// Pair norm sqrt(alpha * N^2/E * ||B||_F^2 + beta * ||S||_F^2).
pub fn frob_pair(b: &Array2<f64>, s: &Array2<f64>, w: NormWeights, e: f64) -> Result<f64> {
    let n = b.nrows();
    if b.ncols() != n || s.nrows() != n {
        return Err(Error::Shape(format!(
            "pair needs square B and matching S rows, got {}x{} and {} rows",
            b.nrows(),
            b.ncols(),
            s.nrows()
        )));
    }
    let fb = frob_matrix(b);
    let fs = frob_signal(s);
    let matrix_part = if w.alpha > 0.0 {
        if e <= 0.0 {
            return Err(Error::Invalid("matrix term needs a positive edge normalizer".into()));
        }
        w.alpha * (n as f64).powi(2) / e * fb * fb
    } else {
        0.0
    };
    Ok((matrix_part + w.beta * fs * fs).sqrt())
}

/// How a cut-norm value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CutNormMethod {
    Exact,
    Heuristic,
}

/// A cut-norm value together with the achieving subsets, so callers can
/// recompute and audit it.
#[derive(Debug, Clone, Serialize)]
pub struct CutNormEstimate {
    pub value: f64,
    pub subset_u: Vec<usize>,
    pub subset_v: Vec<usize>,
    pub method: CutNormMethod,
    pub normalizer_e: f64,
    pub restarts_used: usize,
}

impl CutNormEstimate {
    /// Compact JSON summary (sizes instead of full subsets).
    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "value": self.value,
            "method": self.method,
            "subset_u_len": self.subset_u.len(),
            "subset_v_len": self.subset_v.len(),
            "normalizer_e": self.normalizer_e,
            "restarts_used": self.restarts_used,
        })
    }
}

/// Square operator access used by the cut-norm search: matrix-vector
/// products with B and B^T. Implementors never need to expose entries.
pub trait CutNormOp {
    fn n(&self) -> usize;
    /// B v
    fn apply(&self, v: &[f64]) -> Vec<f64>;
    /// B^T u
    fn apply_t(&self, u: &[f64]) -> Vec<f64>;
}

impl CutNormOp for Array2<f64> {
    fn n(&self) -> usize {
        debug_assert_eq!(self.nrows(), self.ncols());
        self.nrows()
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.dot(&ArrayView1::from(v)).to_vec()
    }

    fn apply_t(&self, u: &[f64]) -> Vec<f64> {
        self.t().dot(&ArrayView1::from(u)).to_vec()
    }
}

impl CutNormOp for CsrMatrix {
    fn n(&self) -> usize {
        CsrMatrix::n(self)
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.matvec(v)
    }

    fn apply_t(&self, u: &[f64]) -> Vec<f64> {
        // stored symmetric
        self.matvec(u)
    }
}

/// Implicit residual A - Q diag(r) Q^T. Symmetric, O(E + NK) per product.
pub struct IcgResidualOp<'a> {
    a: &'a CsrMatrix,
    q: Array2<f64>,
    r: Array1<f64>,
}

impl<'a> IcgResidualOp<'a> {
    pub fn new(a: &'a CsrMatrix, icg: &Icg) -> Result<Self> {
        if icg.n() != a.n() {
            return Err(Error::Shape(format!(
                "model has {} rows for a graph on {} nodes",
                icg.n(),
                a.n()
            )));
        }
        Ok(Self { a, q: icg.materialize_q(), r: icg.r().to_owned() })
    }

    fn residual_apply(&self, x: &[f64]) -> Vec<f64> {
        let ax = self.a.matvec(x);
        let qtx = self.q.t().dot(&ArrayView1::from(x));
        let scaled = &qtx * &self.r;
        let cx = self.q.dot(&scaled);
        ax.iter().zip(cx.iter()).map(|(a, c)| a - c).collect()
    }
}

impl<'a> CutNormOp for IcgResidualOp<'a> {
    fn n(&self) -> usize {
        self.a.n()
    }

    fn apply(&self, v: &[f64]) -> Vec<f64> {
        self.residual_apply(v)
    }

    fn apply_t(&self, u: &[f64]) -> Vec<f64> {
        // A and Q diag(r) Q^T are both symmetric
        self.residual_apply(u)
    }
}

/// |sum_{i in U, j in V} b_ij| / e for explicit subsets.
pub fn evaluate_subsets<O: CutNormOp + ?Sized>(
    op: &O,
    subset_u: &[usize],
    subset_v: &[usize],
    e: f64,
) -> f64 {
    let n = op.n();
    let mut v = vec![0.0; n];
    for &j in subset_v {
        v[j] = 1.0;
    }
    let w = op.apply(&v);
    let total: f64 = subset_u.iter().map(|&i| w[i]).sum();
    total.abs() / e
}

/// Exact cut norm by Gray-code subset enumeration; O(2^N * N). The V side
/// is optimal per U: indices with strictly positive (or strictly negative)
/// column sums, so an exactly-zero sum never enters a subset.
pub fn cut_norm_exact(b: &Array2<f64>, e: f64) -> Result<CutNormEstimate> {
    let n = b.nrows();
    if b.ncols() != n {
        return Err(Error::Shape(format!("cut norm needs a square matrix, got {}x{}", n, b.ncols())));
    }
    if n > MAX_EXACT_CUT_N {
        return Err(Error::Invalid(format!(
            "exact cut norm is limited to N <= {MAX_EXACT_CUT_N}, got {n}"
        )));
    }
    if e <= 0.0 {
        return Err(Error::Invalid("cut norm needs a positive normalizer".into()));
    }
    let mut best_raw = 0.0f64;
    let mut best_mask: u64 = 0;
    let mut best_positive = true;
    if n > 0 {
        let mut t = vec![0.0f64; n];
        // Gray-code walk: step k flips exactly one row in/out of U
        for k in 1u64..(1u64 << n) {
            let bit = k.trailing_zeros() as usize;
            let gray = k ^ (k >> 1);
            let sign = if gray >> bit & 1 == 1 { 1.0 } else { -1.0 };
            for j in 0..n {
                t[j] += sign * b[[bit, j]];
            }
            let mut pos = 0.0;
            let mut neg = 0.0;
            for &tj in &t {
                if tj > 0.0 {
                    pos += tj;
                } else {
                    neg -= tj;
                }
            }
            if pos > best_raw {
                best_raw = pos;
                best_mask = gray;
                best_positive = true;
            }
            if neg > best_raw {
                best_raw = neg;
                best_mask = gray;
                best_positive = false;
            }
        }
    }
    let subset_u: Vec<usize> = (0..n).filter(|&i| best_mask >> i & 1 == 1).collect();
    let mut t = vec![0.0f64; n];
    for &i in &subset_u {
        for j in 0..n {
            t[j] += b[[i, j]];
        }
    }
    let subset_v: Vec<usize> = (0..n)
        .filter(|&j| if best_positive { t[j] > 0.0 } else { t[j] < 0.0 })
        .collect();
    Ok(CutNormEstimate {
        value: best_raw / e,
        subset_u,
        subset_v,
        method: CutNormMethod::Exact,
        normalizer_e: e,
        restarts_used: 0,
    })
}

/// Exact signal cut norm: per channel the best one-sided sum, (1/(D N)) *
/// sum_j max(sum of positives, sum of negatives).
pub fn cut_norm_signal(z: &Array2<f64>) -> f64 {
    let n = z.nrows();
    let d = z.ncols();
    if n == 0 || d == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for j in 0..d {
        let mut pos = 0.0;
        let mut neg = 0.0;
        for i in 0..n {
            let v = z[[i, j]];
            if v > 0.0 {
                pos += v;
            } else {
                neg -= v;
            }
        }
        total += pos.max(neg);
    }
    total / (d as f64 * n as f64)
}

/// Alternating-maximization lower bound on the cut norm of an implicit
/// operator. Each restart draws a random U, then improves U and V in turn
/// (both objective signs) until the pair is stable. Deterministic in
/// `seed`; ties keep the earliest candidate.
pub fn cut_norm_heuristic<O: CutNormOp + ?Sized>(
    op: &O,
    e: f64,
    restarts: usize,
    seed: u64,
) -> Result<CutNormEstimate> {
    if e <= 0.0 {
        return Err(Error::Invalid("cut norm needs a positive normalizer".into()));
    }
    let n = op.n();
    let mut best_value = 0.0f64;
    let mut best_u: Vec<usize> = Vec::new();
    let mut best_v: Vec<usize> = Vec::new();
    let mut u = vec![0.0f64; n];
    let mut v = vec![0.0f64; n];
    for restart in 0..restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart as u64);
        let init: Vec<f64> =
            (0..n).map(|_| if rng.random_bool(0.5) { 1.0 } else { 0.0 }).collect();
        for sign in [1.0f64, -1.0] {
            u.copy_from_slice(&init);
            for x in v.iter_mut() {
                *x = 0.0;
            }
            let mut changed = true;
            let mut sweeps = 0;
            while changed && sweeps < MAX_SWEEPS {
                changed = false;
                let t = op.apply_t(&u);
                for j in 0..n {
                    let want = if sign * t[j] > 0.0 { 1.0 } else { 0.0 };
                    if v[j] != want {
                        v[j] = want;
                        changed = true;
                    }
                }
                let w = op.apply(&v);
                for i in 0..n {
                    let want = if sign * w[i] > 0.0 { 1.0 } else { 0.0 };
                    if u[i] != want {
                        u[i] = want;
                        changed = true;
                    }
                }
                sweeps += 1;
            }
            let w = op.apply(&v);
            let raw: f64 = u.iter().zip(w.iter()).map(|(ui, wi)| ui * wi).sum();
            let value = raw.abs() / e;
            if value > best_value {
                best_value = value;
                best_u = (0..n).filter(|&i| u[i] == 1.0).collect();
                best_v = (0..n).filter(|&j| v[j] == 1.0).collect();
            }
        }
    }
    Ok(CutNormEstimate {
        value: best_value,
        subset_u: best_u,
        subset_v: best_v,
        method: CutNormMethod::Heuristic,
        normalizer_e: e,
        restarts_used: restarts,
    })
}

/// Heuristic cut norm of the fitting residual A - Q diag(r) Q^T.
pub fn cut_norm_residual(
    a: &CsrMatrix,
    icg: &Icg,
    e: f64,
    restarts: usize,
    seed: u64,
) -> Result<CutNormEstimate> {
    let op = IcgResidualOp::new(a, icg)?;
    cut_norm_heuristic(&op, e, restarts, seed)
}

/// alpha * matrix cut norm + beta * signal cut norm, exact on both sides.
pub fn cut_metric_pair(
    b: &Array2<f64>,
    z: &Array2<f64>,
    w: NormWeights,
    e: f64,
) -> Result<f64> {
    if z.nrows() != b.nrows() {
        return Err(Error::Shape(format!(
            "signal has {} rows for a {} node matrix",
            z.nrows(),
            b.nrows()
        )));
    }
    let matrix_part =
        if w.alpha() > 0.0 { w.alpha() * cut_norm_exact(b, e)?.value } else { 0.0 };
    Ok(matrix_part + w.beta() * cut_norm_signal(z))
}
