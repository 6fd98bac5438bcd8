//! The intersecting-community model: soft affiliations Q = sigmoid(logits),
//! signed community magnitudes r, and community features F.
//!
//! The model reconstructs an adjacency as C = Q diag(r) Q^T and a node
//! signal as P = Q F. Affiliations are stored as unconstrained logits so
//! optimizers can move freely while Q stays inside (0, 1).

use std::path::Path;

use ndarray::{Array1, Array2};
use serde_json::json;

use crate::error::{Error, Result};
use crate::io::{ByteReader, ByteWriter};
use crate::linalg::{sigmoid, Cholesky};

const ICG_MAGIC: &[u8; 4] = b"ICGM";
const ICG_VERSION: u32 = 1;

/// Entry cap for materializing the dense reconstruction (N^2 doubles).
pub const MAX_DENSE_ELEMS: usize = 1 << 24;

#[derive(Debug, Clone)]
pub struct Icg {
    pub(crate) logits: Array2<f64>,
    pub(crate) r: Array1<f64>,
    pub(crate) f: Array2<f64>,
}

impl Icg {
    /// Build a model from raw parameters. `logits` is N x K, `r` has K
    /// entries (signs allowed), `f` is K x D with D = 0 for featureless
    /// graphs. Every entry must be finite.
    pub fn new(logits: Array2<f64>, r: Array1<f64>, f: Array2<f64>) -> Result<Self> {
        let k = logits.ncols();
        if r.len() != k {
            return Err(Error::Shape(format!(
                "{} magnitudes for {} communities",
                r.len(),
                k
            )));
        }
        if f.nrows() != k {
            return Err(Error::Shape(format!(
                "feature matrix has {} rows for {} communities",
                f.nrows(),
                k
            )));
        }
        if k == 0 {
            return Err(Error::Invalid("a model needs at least one community".into()));
        }
        if let Some(bad) = logits.iter().find(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite logit entry {bad}")));
        }
        if let Some(bad) = r.iter().find(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite magnitude entry {bad}")));
        }
        if let Some(bad) = f.iter().find(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite feature entry {bad}")));
        }
        Ok(Self { logits, r, f })
    }

    pub fn n(&self) -> usize {
        self.logits.nrows()
    }

    pub fn k(&self) -> usize {
        self.logits.ncols()
    }

    pub fn d(&self) -> usize {
        self.f.ncols()
    }

    pub fn logits(&self) -> &Array2<f64> {
        &self.logits
    }

    pub fn r(&self) -> &Array1<f64> {
        &self.r
    }

    pub fn f(&self) -> &Array2<f64> {
        &self.f
    }

    /// Replace the community features, keeping affiliations fixed.
    pub fn set_f(&mut self, f: Array2<f64>) -> Result<()> {
        if f.nrows() != self.k() {
            return Err(Error::Shape(format!(
                "feature matrix has {} rows for {} communities",
                f.nrows(),
                self.k()
            )));
        }
        if let Some(bad) = f.iter().find(|v| !v.is_finite()) {
            return Err(Error::Invalid(format!("non-finite feature entry {bad}")));
        }
        self.f = f;
        Ok(())
    }

    /// Q = sigmoid(logits), entries in (0, 1).
    pub fn materialize_q(&self) -> Array2<f64> {
        self.logits.mapv(sigmoid)
    }

    /// Dense C = Q diag(r) Q^T. Refuses to allocate more than
    /// `MAX_DENSE_ELEMS` entries; large graphs should go through the
    /// implicit operators instead.
    pub fn synthesize_matrix(&self) -> Result<Array2<f64>> {
        let n = self.n();
        if n.saturating_mul(n) > MAX_DENSE_ELEMS {
            return Err(Error::Invalid(format!(
                "dense reconstruction of a {n} node model exceeds the {MAX_DENSE_ELEMS} entry cap"
            )));
        }
        let q = self.materialize_q();
        let mut qr = q.clone();
        for (mut col, &rk) in qr.columns_mut().into_iter().zip(self.r.iter()) {
            col *= rk;
        }
        Ok(qr.dot(&q.t()))
    }

    /// P = Q F, the reconstructed node signal.
    pub fn synthesize_signal(&self) -> Array2<f64> {
        self.materialize_q().dot(&self.f)
    }

    /// Least-squares community features for a node signal: solves
    /// (Q^T Q + eps I) F = Q^T S. A tiny relative ridge keeps the Gram
    /// factorization well posed when communities nearly coincide.
    pub fn analyze(&self, s: &Array2<f64>) -> Result<Array2<f64>> {
        if s.nrows() != self.n() {
            return Err(Error::Shape(format!(
                "signal has {} rows for a {} node model",
                s.nrows(),
                self.n()
            )));
        }
        let q = self.materialize_q();
        let chol = ridged_gram_cholesky(&q)?;
        let qts = q.t().dot(s);
        Ok(chol.solve_mat(&qts))
    }

    /// Serialized snapshot: magic, version, shapes, then row-major logits,
    /// magnitudes, and features as little-endian doubles.
    pub fn snapshot_bytes(&self) -> Vec<u8> {
        let mut w = ByteWriter::new();
        w.buf.extend_from_slice(ICG_MAGIC);
        w.u32(ICG_VERSION);
        w.u64(self.n() as u64);
        w.u64(self.k() as u64);
        w.u64(self.d() as u64);
        for &v in self.logits.iter() {
            w.f64(v);
        }
        for &v in self.r.iter() {
            w.f64(v);
        }
        for &v in self.f.iter() {
            w.f64(v);
        }
        w.buf
    }

    /// Decode a snapshot produced by [`Icg::snapshot_bytes`]. All shape
    /// arithmetic is overflow-checked and every entry must be finite, so
    /// truncated or tampered input fails cleanly.
    pub fn from_snapshot_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        r.magic(ICG_MAGIC)?;
        let version = r.u32()?;
        if version != ICG_VERSION {
            return Err(Error::Snapshot(format!("unsupported model version {version}")));
        }
        let n = r.u64()?;
        let k = r.u64()?;
        let d = r.u64()?;
        if k == 0 {
            return Err(Error::Snapshot("model snapshot has zero communities".into()));
        }
        let nk = n
            .checked_mul(k)
            .ok_or_else(|| Error::Snapshot("logit count overflows".into()))?;
        let kd = k
            .checked_mul(d)
            .ok_or_else(|| Error::Snapshot("feature count overflows".into()))?;
        let nk_len = r.checked_len(nk, 8, "logits")?;
        let mut logits = Vec::with_capacity(nk_len);
        for _ in 0..nk_len {
            logits.push(r.f64()?);
        }
        let k_len = r.checked_len(k, 8, "magnitudes")?;
        let mut mags = Vec::with_capacity(k_len);
        for _ in 0..k_len {
            mags.push(r.f64()?);
        }
        let kd_len = r.checked_len(kd, 8, "features")?;
        let mut feats = Vec::with_capacity(kd_len);
        for _ in 0..kd_len {
            feats.push(r.f64()?);
        }
        r.expect_end()?;
        let logits = Array2::from_shape_vec((n as usize, k as usize), logits)
            .map_err(|e| Error::Snapshot(format!("logit shape: {e}")))?;
        let f = Array2::from_shape_vec((k as usize, d as usize), feats)
            .map_err(|e| Error::Snapshot(format!("feature shape: {e}")))?;
        Self::new(logits, Array1::from_vec(mags), f)
            .map_err(|e| Error::Snapshot(format!("invalid model payload: {e}")))
    }

    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.snapshot_bytes())?;
        Ok(())
    }

    pub fn read_snapshot(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        Self::from_snapshot_bytes(&bytes)
    }

    /// Community membership report: for each community, its magnitude and
    /// the nodes whose affiliation clears `threshold`.
    pub fn communities_json(&self, threshold: f64) -> serde_json::Value {
        let q = self.materialize_q();
        let communities: Vec<serde_json::Value> = (0..self.k())
            .map(|c| {
                let members: Vec<usize> =
                    (0..self.n()).filter(|&i| q[[i, c]] >= threshold).collect();
                json!({
                    "community": c,
                    "magnitude": self.r[c],
                    "size": members.len(),
                    "members": members,
                })
            })
            .collect();
        json!({
            "n": self.n(),
            "k": self.k(),
            "d": self.d(),
            "threshold": threshold,
            "communities": communities,
        })
    }

    #[cfg(test)]
    pub(crate) fn random_for_tests(n: usize, k: usize, d: usize, seed: u64) -> Self {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let logits = Array2::from_shape_fn((n, k), |_| rng.random_range(-2.0..2.0));
        let r = Array1::from_shape_fn(k, |_| rng.random_range(-1.0..1.0));
        let f = Array2::from_shape_fn((k, d), |_| rng.random_range(0.0..1.0));
        Self::new(logits, r, f).unwrap()
    }
}

/// Cholesky factor of Q^T Q + eps I with eps scaled to the Gram trace.
pub(crate) fn ridged_gram_cholesky(q: &Array2<f64>) -> Result<Cholesky> {
    let k = q.ncols();
    let mut gram = q.t().dot(q);
    let trace: f64 = (0..k).map(|i| gram[[i, i]]).sum();
    let eps = 1e-10 * (trace / k.max(1) as f64).max(1.0);
    for i in 0..k {
        gram[[i, i]] += eps;
    }
    Cholesky::new(&gram)
}
