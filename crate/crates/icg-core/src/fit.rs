//! Gradient fitting of the community model to a graph-signal pair.
//!
//! The reconstruction objective is
//!   (1/N^2) ||Q diag(r) Q^T - A||_F^2 + lambda (1/(N D)) ||Q F - S||_F^2
//! evaluated without materializing the dense reconstruction: the quadratic
//! expansion needs only the K x K Gram matrix, one pass over the edges,
//! and the stored squared edge weight total.

use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{CsrMatrix, GraphSignal};
use crate::icg::Icg;
use crate::lanczos::{leading_eigenpairs, LanczosConfig};
use crate::linalg::{logit, sigmoid};

/// Loss decomposition; `total = graph + lambda * signal`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct LossParts {
    pub graph: f64,
    pub signal: f64,
    pub total: f64,
}

/// Gradients for each parameter block. Rows of `logits` and `q` line up
/// with the instance the kernel was called on, so on a sampled subgraph
/// they are per-position gradients. `q` is the gradient with respect to
/// the affiliations themselves, before the sigmoid chain rule.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub logits: Array2<f64>,
    pub q: Array2<f64>,
    pub r: Array1<f64>,
    pub f: Array2<f64>,
}

/// A Q, the only O(E K) product in the objective.
fn a_dot_q(a: &CsrMatrix, q: &Array2<f64>) -> Array2<f64> {
    let (m, k) = q.dim();
    let mut out = Array2::zeros((m, k));
    for i in 0..m {
        let (cols, vals) = a.row(i);
        for (&j, &w) in cols.iter().zip(vals) {
            for kk in 0..k {
                out[[i, kk]] += w * q[[j, kk]];
            }
        }
    }
    out
}

/// Loss and optional gradients for one instance (the full graph or an
/// induced subgraph with gathered logit rows). Both the trainer and the
/// stochastic estimator route through this single kernel, so a sample that
/// happens to be the identity reproduces full-batch numbers bit for bit.
pub(crate) fn loss_grads_kernel(
    a: &CsrMatrix,
    s: &Array2<f64>,
    logits: &Array2<f64>,
    r: &Array1<f64>,
    f: &Array2<f64>,
    lambda: f64,
    want_grads: bool,
) -> (LossParts, Option<Gradients>) {
    let m = logits.nrows();
    let k = logits.ncols();
    let d = f.ncols();
    debug_assert_eq!(a.n(), m);
    debug_assert_eq!(s.nrows(), m);
    debug_assert_eq!(r.len(), k);
    debug_assert_eq!(f.nrows(), k);
    let m2 = (m as f64) * (m as f64);

    let q = logits.mapv(sigmoid);
    let g = q.t().dot(&q);
    let aq = a_dot_q(a, &q);

    // trace term: sum_{k,l} r_k r_l G_kl^2
    let mut tr = 0.0;
    for kk in 0..k {
        for ll in 0..k {
            let gv = g[[kk, ll]];
            tr += r[kk] * r[ll] * gv * gv;
        }
    }
    // cross term: sum_ij a_ij c_ij = sum_{i,k} q_ik r_k (AQ)_ik
    let mut cross = 0.0;
    for i in 0..m {
        for kk in 0..k {
            cross += q[[i, kk]] * r[kk] * aq[[i, kk]];
        }
    }
    let graph = (tr - 2.0 * cross + a.sum_sq()) / m2;

    let use_signal = lambda > 0.0 && d > 0;
    let (signal, resid) = if use_signal {
        let mut resid = q.dot(f);
        resid -= s;
        let sl = resid.iter().map(|v| v * v).sum::<f64>() / (m as f64 * d as f64);
        (sl, Some(resid))
    } else {
        (0.0, None)
    };
    let parts = LossParts { graph, signal, total: graph + lambda * signal };
    if !want_grads {
        return (parts, None);
    }

    // grad_Q(graph) = (4/M^2) [Q (R G R) - (A Q) R]
    let mut rgr = g.clone();
    for kk in 0..k {
        for ll in 0..k {
            rgr[[kk, ll]] *= r[kk] * r[ll];
        }
    }
    let mut grad_q = q.dot(&rgr);
    for i in 0..m {
        for kk in 0..k {
            grad_q[[i, kk]] = (grad_q[[i, kk]] - aq[[i, kk]] * r[kk]) * 4.0 / m2;
        }
    }
    // grad_r_k = (2/M^2) [sum_l G_kl^2 r_l - (Q^T A Q)_kk]
    let mut grad_r = Array1::zeros(k);
    for kk in 0..k {
        let mut sum_g2r = 0.0;
        for ll in 0..k {
            let gv = g[[kk, ll]];
            sum_g2r += gv * gv * r[ll];
        }
        let mut diag = 0.0;
        for i in 0..m {
            diag += q[[i, kk]] * aq[[i, kk]];
        }
        grad_r[kk] = 2.0 / m2 * (sum_g2r - diag);
    }
    let mut grad_f = Array2::zeros((k, d));
    if let Some(resid) = resid {
        let scale = lambda * 2.0 / (m as f64 * d as f64);
        let gq_sig = resid.dot(&f.t());
        grad_q.scaled_add(scale, &gq_sig);
        grad_f = q.t().dot(&resid);
        grad_f.mapv_inplace(|v| v * scale);
    }
    // chain through the sigmoid: dL/dlogit = dL/dq * q (1 - q)
    let mut grad_logits = grad_q.clone();
    for i in 0..m {
        for kk in 0..k {
            let qv = q[[i, kk]];
            grad_logits[[i, kk]] *= qv * (1.0 - qv);
        }
    }
    (parts, Some(Gradients { logits: grad_logits, q: grad_q, r: grad_r, f: grad_f }))
}

/// Reconstruction loss of a model against a graph-signal pair.
pub fn evaluate_loss(g: &GraphSignal, icg: &Icg, lambda: f64) -> Result<LossParts> {
    if icg.n() != g.n() {
        return Err(Error::Shape(format!(
            "model has {} rows for a graph on {} nodes",
            icg.n(),
            g.n()
        )));
    }
    if lambda > 0.0 && g.d() > 0 && icg.d() != g.d() {
        return Err(Error::Shape(format!(
            "model carries {} feature channels, graph has {}",
            icg.d(),
            g.d()
        )));
    }
    let (parts, _) = loss_grads_kernel(
        g.adjacency(),
        g.signal(),
        icg.logits(),
        icg.r(),
        icg.f(),
        lambda,
        false,
    );
    Ok(parts)
}

/// Full-batch gradients of the objective at the current parameters.
pub fn evaluate_grads(g: &GraphSignal, icg: &Icg, lambda: f64) -> Result<(LossParts, Gradients)> {
    evaluate_loss(g, icg, lambda)?; // shape checks
    let (parts, grads) = loss_grads_kernel(
        g.adjacency(),
        g.signal(),
        icg.logits(),
        icg.r(),
        icg.f(),
        lambda,
        true,
    );
    Ok((parts, grads.expect("gradients requested")))
}

/// First-order update rule.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OptAlgo {
    Adam,
    Gd,
}

/// Adam moment state over one flat parameter block.
#[derive(Debug, Clone)]
pub(crate) struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

pub(crate) const ADAM_BETA1: f64 = 0.9;
pub(crate) const ADAM_BETA2: f64 = 0.999;
pub(crate) const ADAM_EPS: f64 = 1e-8;

impl AdamState {
    pub(crate) fn new(len: usize) -> Self {
        Self { m: vec![0.0; len], v: vec![0.0; len], t: 0 }
    }

    pub(crate) fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) {
        assert_eq!(params.len(), self.m.len());
        assert_eq!(grads.len(), self.m.len());
        self.t += 1;
        let bc1 = 1.0 - ADAM_BETA1.powi(self.t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = ADAM_BETA1 * self.m[i] + (1.0 - ADAM_BETA1) * g;
            self.v[i] = ADAM_BETA2 * self.v[i] + (1.0 - ADAM_BETA2) * g * g;
            let mhat = self.m[i] / bc1;
            let vhat = self.v[i] / bc2;
            params[i] -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
        }
    }
}

/// How the affiliations and magnitudes are seeded before training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum InitMethod {
    /// Spectral warm start from the leading adjacency eigenpairs.
    Eigen,
    /// Uniform random logits and magnitudes.
    Random,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitConfig {
    pub k: usize,
    pub lambda: f64,
    pub epochs: usize,
    pub lr: f64,
    pub algo: OptAlgo,
    pub init: InitMethod,
    pub seed: u64,
    /// Record the loss every this many epochs (0 records endpoints only).
    pub log_every: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            k: 8,
            lambda: 0.0,
            epochs: 500,
            lr: 0.02,
            algo: OptAlgo::Adam,
            init: InitMethod::Eigen,
            seed: 1,
            log_every: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    /// (epoch, loss) at logged points; epoch 0 is the initial model.
    pub loss_trace: Vec<(usize, LossParts)>,
    pub final_loss: LossParts,
    pub epochs_run: usize,
    pub init_secs: f64,
    pub train_secs: f64,
    /// Present for the spectral init: whether every requested eigenpair
    /// met the residual tolerance.
    pub eigen_converged: Option<bool>,
}

fn clamped_logit(q: f64) -> f64 {
    logit(q.clamp(1e-6, 1.0 - 1e-6))
}

/// Spectral warm start. Each eigenpair (lam, phi) seeds three communities
/// that reproduce lam phi phi^T exactly:
///   positive part, magnitude 2 lam |phi_+|_inf^2
///   negative part, magnitude 2 lam |phi_-|_inf^2
///   absolute value, magnitude  -lam |phi|_inf^2
/// A one-signed eigenvector leaves its empty part as a dead community
/// (uniform 0.5 affiliations, zero magnitude). Slots that no converged
/// eigenpair reaches get small random logits and zero magnitude.
pub fn eigen_init(g: &GraphSignal, k: usize, lambda: f64, seed: u64) -> Result<(Icg, bool)> {
    if k == 0 {
        return Err(Error::Invalid("a model needs at least one community".into()));
    }
    let n = g.n();
    let n_pairs = k.div_ceil(3).min(n);
    let cfg = LanczosConfig { seed, ..Default::default() };
    let pairs = leading_eigenpairs(g.adjacency(), n_pairs, &cfg)?;
    let mut logits = Array2::zeros((n, k));
    let mut r = Array1::zeros(k);
    let mut slot = 0usize;
    'outer: for p in 0..pairs.values.len() {
        let lam = pairs.values[p];
        let phi = pairs.vectors.column(p);
        let plus: Vec<f64> = phi.iter().map(|&v| v.max(0.0)).collect();
        let minus: Vec<f64> = phi.iter().map(|&v| (-v).max(0.0)).collect();
        let abs: Vec<f64> = phi.iter().map(|&v| v.abs()).collect();
        let parts: [(&[f64], f64); 3] = [
            (&plus, 2.0 * lam),
            (&minus, 2.0 * lam),
            (&abs, -lam),
        ];
        for (vec, coeff) in parts {
            if slot == k {
                break 'outer;
            }
            let sup = vec.iter().cloned().fold(0.0f64, f64::max);
            if sup > 0.0 {
                for (i, &v) in vec.iter().enumerate() {
                    logits[[i, slot]] = clamped_logit(v / sup);
                }
                r[slot] = coeff * sup * sup;
            }
            // sup == 0 leaves logits at zero: uniform 0.5, zero magnitude
            slot += 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f111);
    while slot < k {
        for i in 0..n {
            logits[[i, slot]] = rng.random_range(-0.1..0.1);
        }
        slot += 1;
    }
    let d = g.d();
    let mut icg = Icg::new(logits, r, Array2::zeros((k, d)))?;
    if lambda > 0.0 && d > 0 {
        let f = icg.analyze(g.signal())?;
        icg.set_f(f)?;
    }
    Ok((icg, pairs.all_converged))
}

/// Uniform random start: logits in (-1, 1), magnitudes in (-0.5, 0.5).
pub fn random_init(g: &GraphSignal, k: usize, lambda: f64, seed: u64) -> Result<Icg> {
    if k == 0 {
        return Err(Error::Invalid("a model needs at least one community".into()));
    }
    let n = g.n();
    let d = g.d();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let logits = Array2::from_shape_fn((n, k), |_| rng.random_range(-1.0..1.0));
    let r = Array1::from_shape_fn(k, |_| rng.random_range(-0.5..0.5));
    let mut icg = Icg::new(logits, r, Array2::zeros((k, d)))?;
    if lambda > 0.0 && d > 0 {
        let f = icg.analyze(g.signal())?;
        icg.set_f(f)?;
    }
    Ok(icg)
}

/// Fit a model to a graph-signal pair by full-batch first-order descent.
/// Features are refreshed by exact least squares after training so the
/// returned model is optimal in F for its final affiliations.
pub fn fit_icg(g: &GraphSignal, cfg: &FitConfig) -> Result<(Icg, FitReport)> {
    if cfg.lr <= 0.0 || !cfg.lr.is_finite() {
        return Err(Error::Invalid(format!("learning rate {} must be positive", cfg.lr)));
    }
    if cfg.lambda < 0.0 || !cfg.lambda.is_finite() {
        return Err(Error::Invalid(format!("lambda {} must be nonnegative", cfg.lambda)));
    }
    let t0 = Instant::now();
    let (mut icg, eigen_converged) = match cfg.init {
        InitMethod::Eigen => {
            let (m, conv) = eigen_init(g, cfg.k, cfg.lambda, cfg.seed)?;
            (m, Some(conv))
        }
        InitMethod::Random => (random_init(g, cfg.k, cfg.lambda, cfg.seed)?, None),
    };
    let init_secs = t0.elapsed().as_secs_f64();

    let fit_f = cfg.lambda > 0.0 && g.d() > 0;
    let mut adam_logits = AdamState::new(icg.logits.len());
    let mut adam_r = AdamState::new(icg.r.len());
    let mut adam_f = AdamState::new(icg.f.len());
    let mut trace: Vec<(usize, LossParts)> = Vec::new();
    let t1 = Instant::now();
    let mut last_parts = None;
    for epoch in 0..cfg.epochs {
        let (parts, grads) = loss_grads_kernel(
            g.adjacency(),
            g.signal(),
            &icg.logits,
            &icg.r,
            &icg.f,
            cfg.lambda,
            true,
        );
        let grads = grads.expect("gradients requested");
        if !parts.total.is_finite() {
            return Err(Error::Numerical(format!(
                "loss diverged at epoch {epoch}; lower the learning rate"
            )));
        }
        if epoch == 0 || (cfg.log_every > 0 && epoch % cfg.log_every == 0) {
            trace.push((epoch, parts));
        }
        last_parts = Some(parts);
        match cfg.algo {
            OptAlgo::Adam => {
                adam_logits.step(
                    icg.logits.as_slice_mut().expect("contiguous"),
                    grads.logits.as_slice().expect("contiguous"),
                    cfg.lr,
                );
                adam_r.step(
                    icg.r.as_slice_mut().expect("contiguous"),
                    grads.r.as_slice().expect("contiguous"),
                    cfg.lr,
                );
                if fit_f {
                    adam_f.step(
                        icg.f.as_slice_mut().expect("contiguous"),
                        grads.f.as_slice().expect("contiguous"),
                        cfg.lr,
                    );
                }
            }
            OptAlgo::Gd => {
                icg.logits.scaled_add(-cfg.lr, &grads.logits);
                icg.r.scaled_add(-cfg.lr, &grads.r);
                if fit_f {
                    icg.f.scaled_add(-cfg.lr, &grads.f);
                }
            }
        }
    }
    let _ = last_parts;
    if fit_f {
        let f = icg.analyze(g.signal())?;
        icg.set_f(f)?;
    }
    let final_loss = evaluate_loss(g, &icg, cfg.lambda)?;
    if !final_loss.total.is_finite() {
        return Err(Error::Numerical(
            "training ended with a non-finite loss; lower the learning rate".into(),
        ));
    }
    trace.push((cfg.epochs, final_loss));
    let report = FitReport {
        loss_trace: trace,
        final_loss,
        epochs_run: cfg.epochs,
        init_secs,
        train_secs: t1.elapsed().as_secs_f64(),
        eigen_converged,
    };
    Ok((icg, report))
}
