//! Community-basis neural networks with hand-written forward and backward
//! passes, plus a full-graph node-classification training loop.
//!
//! Both architectures read the graph only through the fixed affiliation
//! matrix Q, so one layer costs O(N K D + K D^2 + N D D') regardless of
//! edge count. Community features either follow the node state through the
//! pseudoinverse solve (the Theta variant) or are free parameters (the
//! unconstrained variant).

use std::time::Instant;

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::AdamState;
use crate::graph::GraphSignal;
use crate::icg::{ridged_gram_cholesky, Icg};
use crate::linalg::Cholesky;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Identity => x,
        }
    }

    fn deriv(&self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Arch {
    /// Community features derived from the node state via the fixed solve,
    /// passed through a small per-layer transform.
    IcgNn,
    /// Learnable community features per layer (positional-encoding style).
    IcgNnU,
    /// Feature-only baseline; ignores the graph entirely.
    Mlp,
}

/// Dense affine map with weight (in x out) and bias (out).
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Array2<f64>,
    pub b: Array1<f64>,
}

impl Linear {
    fn xavier(din: usize, dout: usize, rng: &mut ChaCha8Rng) -> Self {
        let a = (6.0 / (din + dout) as f64).sqrt();
        let w = Array2::from_shape_fn((din, dout), |_| rng.random_range(-a..a));
        Self { w, b: Array1::zeros(dout) }
    }

    fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        let mut out = x.dot(&self.w);
        out += &self.b;
        out
    }
}

/// Two-layer community transform; hidden width equals the layer width. Its
/// hidden activation follows the network's configured activation.
#[derive(Debug, Clone)]
pub struct ThetaMlp {
    pub a: Linear,
    pub b: Linear,
}

#[derive(Debug, Clone)]
pub enum LayerParams {
    IcgNn { w1: Linear, w2: Linear, theta: ThetaMlp },
    IcgNnU { ws: Linear, w: Linear, f: Array2<f64> },
    Mlp { w: Linear },
}

#[derive(Debug, Clone)]
pub struct NnParams {
    pub arch: Arch,
    pub activation: Activation,
    pub layers: Vec<LayerParams>,
    pub readout: Linear,
}

impl NnParams {
    /// Seeded Xavier-uniform initialization. `layers` hidden layers map
    /// input_dim -> hidden -> ... -> hidden, then a linear readout maps to
    /// `classes` logits. `k` sizes the learnable community features.
    pub fn init(
        arch: Arch,
        activation: Activation,
        input_dim: usize,
        hidden: usize,
        layers: usize,
        k: usize,
        classes: usize,
        seed: u64,
    ) -> Result<Self> {
        if input_dim == 0 || hidden == 0 || classes == 0 {
            return Err(Error::Invalid("network dimensions must be positive".into()));
        }
        if layers == 0 {
            return Err(Error::Invalid("at least one layer is required".into()));
        }
        if arch != Arch::Mlp && k == 0 {
            return Err(Error::Invalid("community count must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut lps = Vec::with_capacity(layers);
        for l in 0..layers {
            let din = if l == 0 { input_dim } else { hidden };
            let lp = match arch {
                Arch::IcgNn => {
                    // community features lag one state, so layers 0 and 1
                    // both analyze a signal-width matrix; later layers see
                    // hidden-width states
                    let fw = if l <= 1 { input_dim } else { hidden };
                    LayerParams::IcgNn {
                        w1: Linear::xavier(din, hidden, &mut rng),
                        w2: Linear::xavier(fw, hidden, &mut rng),
                        theta: ThetaMlp {
                            a: Linear::xavier(fw, fw, &mut rng),
                            b: Linear::xavier(fw, fw, &mut rng),
                        },
                    }
                }
                Arch::IcgNnU => {
                    let ws = Linear::xavier(din, hidden, &mut rng);
                    let w = Linear::xavier(din, hidden, &mut rng);
                    let a = (6.0 / (k + din) as f64).sqrt();
                    let f = Array2::from_shape_fn((k, din), |_| rng.random_range(-a..a));
                    LayerParams::IcgNnU { ws, w, f }
                }
                Arch::Mlp => LayerParams::Mlp { w: Linear::xavier(din, hidden, &mut rng) },
            };
            lps.push(lp);
        }
        let readout = Linear::xavier(hidden, classes, &mut rng);
        Ok(Self { arch, activation, layers: lps, readout })
    }

    /// Parameter arrays in a fixed traversal order, iterated row-major
    /// regardless of the underlying memory layout (matrix products can
    /// return transposed-layout arrays).
    fn param_iters(&self) -> Vec<Box<dyn Iterator<Item = &f64> + '_>> {
        let mut out: Vec<Box<dyn Iterator<Item = &f64>>> = Vec::new();
        for lp in &self.layers {
            match lp {
                LayerParams::IcgNn { w1, w2, theta } => {
                    out.push(Box::new(w1.w.iter()));
                    out.push(Box::new(w1.b.iter()));
                    out.push(Box::new(w2.w.iter()));
                    out.push(Box::new(w2.b.iter()));
                    out.push(Box::new(theta.a.w.iter()));
                    out.push(Box::new(theta.a.b.iter()));
                    out.push(Box::new(theta.b.w.iter()));
                    out.push(Box::new(theta.b.b.iter()));
                }
                LayerParams::IcgNnU { ws, w, f } => {
                    out.push(Box::new(ws.w.iter()));
                    out.push(Box::new(ws.b.iter()));
                    out.push(Box::new(w.w.iter()));
                    out.push(Box::new(w.b.iter()));
                    out.push(Box::new(f.iter()));
                }
                LayerParams::Mlp { w } => {
                    out.push(Box::new(w.w.iter()));
                    out.push(Box::new(w.b.iter()));
                }
            }
        }
        out.push(Box::new(self.readout.w.iter()));
        out.push(Box::new(self.readout.b.iter()));
        out
    }

    fn param_iters_mut(&mut self) -> Vec<Box<dyn Iterator<Item = &mut f64> + '_>> {
        let mut out: Vec<Box<dyn Iterator<Item = &mut f64>>> = Vec::new();
        for lp in &mut self.layers {
            match lp {
                LayerParams::IcgNn { w1, w2, theta } => {
                    out.push(Box::new(w1.w.iter_mut()));
                    out.push(Box::new(w1.b.iter_mut()));
                    out.push(Box::new(w2.w.iter_mut()));
                    out.push(Box::new(w2.b.iter_mut()));
                    out.push(Box::new(theta.a.w.iter_mut()));
                    out.push(Box::new(theta.a.b.iter_mut()));
                    out.push(Box::new(theta.b.w.iter_mut()));
                    out.push(Box::new(theta.b.b.iter_mut()));
                }
                LayerParams::IcgNnU { ws, w, f } => {
                    out.push(Box::new(ws.w.iter_mut()));
                    out.push(Box::new(ws.b.iter_mut()));
                    out.push(Box::new(w.w.iter_mut()));
                    out.push(Box::new(w.b.iter_mut()));
                    out.push(Box::new(f.iter_mut()));
                }
                LayerParams::Mlp { w } => {
                    out.push(Box::new(w.w.iter_mut()));
                    out.push(Box::new(w.b.iter_mut()));
                }
            }
        }
        out.push(Box::new(self.readout.w.iter_mut()));
        out.push(Box::new(self.readout.b.iter_mut()));
        out
    }

    pub fn n_params(&self) -> usize {
        self.param_iters().into_iter().map(|it| it.count()).sum()
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.param_iters().into_iter().flatten().copied().collect()
    }

    pub fn unflatten(&mut self, flat: &[f64]) {
        let mut pos = 0;
        for it in self.param_iters_mut() {
            for slot in it {
                *slot = flat[pos];
                pos += 1;
            }
        }
        assert_eq!(pos, flat.len(), "flat parameter length mismatch");
    }

    pub fn zeros_like(&self) -> Self {
        let mut z = self.clone();
        for it in z.param_iters_mut() {
            for v in it {
                *v = 0.0;
            }
        }
        z
    }
}

/// Fixed affiliation basis with its Gram factorization, shared by every
/// forward and backward pass of a training run.
pub struct CommunityBasis {
    q: Array2<f64>,
    chol: Cholesky,
}

impl CommunityBasis {
    pub fn new(q: Array2<f64>) -> Result<Self> {
        if q.nrows() == 0 || q.ncols() == 0 {
            return Err(Error::Shape("affiliation matrix must be nonempty".into()));
        }
        let chol = ridged_gram_cholesky(&q)?;
        Ok(Self { q, chol })
    }

    pub fn from_icg(icg: &Icg) -> Result<Self> {
        Self::new(icg.materialize_q())
    }

    pub fn n(&self) -> usize {
        self.q.nrows()
    }

    pub fn k(&self) -> usize {
        self.q.ncols()
    }

    pub fn q(&self) -> &Array2<f64> {
        &self.q
    }

    /// Least-squares community features of a node state: (Q^T Q)^-1 Q^T H.
    pub fn analyze(&self, h: &Array2<f64>) -> Array2<f64> {
        self.chol.solve_mat(&self.q.t().dot(h))
    }

    /// Adjoint of `analyze`: maps community-feature gradients back to node
    /// space, Q (Q^T Q)^-1 dF.
    pub fn analyze_adjoint(&self, df: &Array2<f64>) -> Array2<f64> {
        self.q.dot(&self.chol.solve_mat(df))
    }

    /// Q F, community features broadcast to nodes.
    pub fn expand(&self, f: &Array2<f64>) -> Array2<f64> {
        self.q.dot(f)
    }
}

/// Every intermediate of one forward pass, kept for the backward pass.
pub struct Cache {
    /// Node states h[0..=L]; h[0] is the input signal.
    h: Vec<Array2<f64>>,
    /// Pre-activation per layer.
    z: Vec<Array2<f64>>,
    /// Inverted-dropout multipliers per layer (train mode only).
    drop: Vec<Option<Array2<f64>>>,
    /// Community features per layer (Theta variant only).
    f: Vec<Array2<f64>>,
    /// Theta hidden pre-activation per layer.
    theta_pre: Vec<Array2<f64>>,
    /// Theta hidden post-activation per layer.
    theta_hidden: Vec<Array2<f64>>,
    /// Input of the community-path linear map: Q Theta(F) or Q f.
    qin: Vec<Array2<f64>>,
    pub logits: Array2<f64>,
}

fn layer_dims(lp: &LayerParams) -> (usize, usize) {
    match lp {
        LayerParams::IcgNn { w1, .. } => (w1.w.nrows(), w1.w.ncols()),
        LayerParams::IcgNnU { ws, .. } => (ws.w.nrows(), ws.w.ncols()),
        LayerParams::Mlp { w } => (w.w.nrows(), w.w.ncols()),
    }
}

fn need_basis<'b>(
    arch: Arch,
    basis: Option<&'b CommunityBasis>,
) -> Result<Option<&'b CommunityBasis>> {
    match arch {
        Arch::Mlp => Ok(None),
        _ => basis
            .map(Some)
            .ok_or_else(|| Error::Invalid("this architecture needs a community basis".into())),
    }
}

/// Forward pass. Passing an rng turns on training mode: inverted dropout
/// with rate `dropout` is applied to node states after each activation.
pub fn forward(
    params: &NnParams,
    basis: Option<&CommunityBasis>,
    s: &Array2<f64>,
    dropout: f64,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<Cache> {
    let basis = need_basis(params.arch, basis)?;
    if let Some(b) = basis {
        if b.n() != s.nrows() {
            return Err(Error::Shape(format!(
                "basis covers {} nodes, signal has {} rows",
                b.n(),
                s.nrows()
            )));
        }
    }
    let (din0, _) = layer_dims(&params.layers[0]);
    if s.ncols() != din0 {
        return Err(Error::Shape(format!(
            "signal width {} does not match first layer input {}",
            s.ncols(),
            din0
        )));
    }
    if !(0.0..1.0).contains(&dropout) {
        return Err(Error::Invalid(format!("dropout rate {dropout} must lie in [0,1)")));
    }
    let l_total = params.layers.len();
    let mut cache = Cache {
        h: Vec::with_capacity(l_total + 1),
        z: Vec::with_capacity(l_total),
        drop: Vec::with_capacity(l_total),
        f: Vec::new(),
        theta_pre: Vec::new(),
        theta_hidden: Vec::new(),
        qin: Vec::with_capacity(l_total),
        logits: Array2::zeros((0, 0)),
    };
    cache.h.push(s.clone());
    for (l, lp) in params.layers.iter().enumerate() {
        let h_in = &cache.h[l];
        let z = match lp {
            LayerParams::IcgNn { w1, w2, theta } => {
                let basis = basis.expect("basis checked");
                // community features lag one layer: F^0 = analyze(S),
                // F^l = analyze(H^{l-1})
                let f_l = if l == 0 {
                    basis.analyze(s)
                } else {
                    basis.analyze(&cache.h[l - 1])
                };
                let pre = theta.a.forward(&f_l);
                let hidden = pre.mapv(|v| params.activation.apply(v));
                let t_out = theta.b.forward(&hidden);
                let qin = basis.expand(&t_out);
                let z = w1.forward(h_in) + &w2.forward(&qin);
                cache.f.push(f_l);
                cache.theta_pre.push(pre);
                cache.theta_hidden.push(hidden);
                cache.qin.push(qin);
                z
            }
            LayerParams::IcgNnU { ws, w, f } => {
                let basis = basis.expect("basis checked");
                if f.nrows() != basis.k() {
                    return Err(Error::Shape(format!(
                        "layer {} community features have {} rows for {} communities",
                        l,
                        f.nrows(),
                        basis.k()
                    )));
                }
                let qin = basis.expand(f);
                let z = ws.forward(h_in) + &w.forward(&qin);
                cache.qin.push(qin);
                z
            }
            LayerParams::Mlp { w } => {
                cache.qin.push(Array2::zeros((0, 0)));
                w.forward(h_in)
            }
        };
        let mut h_next = z.mapv(|v| params.activation.apply(v));
        let mask = match (&mut rng, dropout > 0.0) {
            (Some(rng), true) => {
                let keep = 1.0 - dropout;
                let m = Array2::from_shape_fn(h_next.dim(), |_| {
                    if rng.random_bool(keep) {
                        1.0 / keep
                    } else {
                        0.0
                    }
                });
                h_next *= &m;
                Some(m)
            }
            _ => None,
        };
        cache.z.push(z);
        cache.drop.push(mask);
        cache.h.push(h_next);
    }
    cache.logits = params.readout.forward(&cache.h[l_total]);
    Ok(cache)
}

fn colsum(x: &Array2<f64>) -> Array1<f64> {
    x.sum_axis(ndarray::Axis(0))
}

/// Reverse-mode gradients for every parameter. The affiliation basis and
/// its solve are constants: nothing propagates into Q.
pub fn backward(
    params: &NnParams,
    basis: Option<&CommunityBasis>,
    cache: &Cache,
    dlogits: &Array2<f64>,
) -> Result<NnParams> {
    let basis = need_basis(params.arch, basis)?;
    let l_total = params.layers.len();
    if cache.h.len() != l_total + 1 || cache.z.len() != l_total {
        return Err(Error::Invalid("cache does not match these parameters".into()));
    }
    for (l, lp) in params.layers.iter().enumerate() {
        let (din, dout) = layer_dims(lp);
        if cache.h[l].ncols() != din || cache.z[l].ncols() != dout {
            return Err(Error::Invalid("cache does not match these parameters".into()));
        }
    }
    if dlogits.dim() != cache.logits.dim() {
        return Err(Error::Shape("upstream gradient shape mismatch".into()));
    }
    let mut grads = params.zeros_like();
    // readout
    grads.readout.w = cache.h[l_total].t().dot(dlogits);
    grads.readout.b = colsum(dlogits);
    let mut dh: Vec<Array2<f64>> = cache.h.iter().map(|h| Array2::zeros(h.dim())).collect();
    dh[l_total] = dlogits.dot(&params.readout.w.t());

    for l in (0..l_total).rev() {
        // through dropout, then the activation
        let mut dz = dh[l + 1].clone();
        if let Some(mask) = &cache.drop[l] {
            dz *= mask;
        }
        ndarray::Zip::from(&mut dz).and(&cache.z[l]).for_each(|g, &pre| {
            *g *= params.activation.deriv(pre);
        });
        match (&params.layers[l], &mut grads.layers[l]) {
            (
                LayerParams::IcgNn { w1, w2, theta },
                LayerParams::IcgNn { w1: gw1, w2: gw2, theta: gtheta },
            ) => {
                let basis = basis.expect("basis checked");
                gw1.w = cache.h[l].t().dot(&dz);
                gw1.b = colsum(&dz);
                let dh_l = dz.dot(&w1.w.t());
                dh[l] += &dh_l;
                gw2.w = cache.qin[l].t().dot(&dz);
                gw2.b = colsum(&dz);
                let dqin = dz.dot(&w2.w.t());
                let dt_out = basis.q().t().dot(&dqin);
                // theta: out = B(act(A f)); standard two-layer backward
                gtheta.b.w = cache.theta_hidden[l].t().dot(&dt_out);
                gtheta.b.b = colsum(&dt_out);
                let mut dhidden = dt_out.dot(&theta.b.w.t());
                ndarray::Zip::from(&mut dhidden)
                    .and(&cache.theta_pre[l])
                    .for_each(|g, &pre| {
                        *g *= params.activation.deriv(pre);
                    });
                gtheta.a.w = cache.f[l].t().dot(&dhidden);
                gtheta.a.b = colsum(&dhidden);
                let df = dhidden.dot(&theta.a.w.t());
                if l >= 1 {
                    // F^l = analyze(H^{l-1}): push through the fixed solve
                    let back = basis.analyze_adjoint(&df);
                    dh[l - 1] += &back;
                }
                // l == 0: F^0 comes from the input signal, a constant
            }
            (
                LayerParams::IcgNnU { ws, w, .. },
                LayerParams::IcgNnU { ws: gws, w: gw, f: gf },
            ) => {
                let basis = basis.expect("basis checked");
                gws.w = cache.h[l].t().dot(&dz);
                gws.b = colsum(&dz);
                let dh_l = dz.dot(&ws.w.t());
                dh[l] += &dh_l;
                gw.w = cache.qin[l].t().dot(&dz);
                gw.b = colsum(&dz);
                let dqin = dz.dot(&w.w.t());
                *gf = basis.q().t().dot(&dqin);
            }
            (LayerParams::Mlp { w }, LayerParams::Mlp { w: gw }) => {
                gw.w = cache.h[l].t().dot(&dz);
                gw.b = colsum(&dz);
                let dh_l = dz.dot(&w.w.t());
                dh[l] += &dh_l;
            }
            _ => unreachable!("grads mirror params"),
        }
    }
    Ok(grads)
}

/// Mean softmax cross-entropy over the masked rows, its gradient in logit
/// space (zero off the mask), and the masked accuracy.
pub fn softmax_ce(
    logits: &Array2<f64>,
    labels: &[usize],
    mask: &[usize],
) -> (f64, Array2<f64>, f64) {
    let c = logits.ncols();
    let mut dlogits = Array2::zeros(logits.dim());
    if mask.is_empty() {
        return (0.0, dlogits, f64::NAN);
    }
    let mut loss = 0.0;
    let mut hits = 0usize;
    let inv = 1.0 / mask.len() as f64;
    for &i in mask {
        let row = logits.row(i);
        let maxv = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut denom = 0.0;
        for j in 0..c {
            denom += (row[j] - maxv).exp();
        }
        let label = labels[i];
        loss -= (row[label] - maxv) - denom.ln();
        let mut best = 0;
        for j in 0..c {
            let p = (row[j] - maxv).exp() / denom;
            dlogits[[i, j]] = (p - if j == label { 1.0 } else { 0.0 }) * inv;
            if row[j] > row[best] {
                best = j;
            }
        }
        if best == label {
            hits += 1;
        }
    }
    (loss * inv, dlogits, hits as f64 / mask.len() as f64)
}

/// Masked accuracy of argmax predictions; None on an empty mask.
pub fn accuracy(logits: &Array2<f64>, labels: &[usize], mask: &[usize]) -> Option<f64> {
    if mask.is_empty() {
        return None;
    }
    let mut hits = 0usize;
    for &i in mask {
        let row = logits.row(i);
        let mut best = 0;
        for j in 1..row.len() {
            if row[j] > row[best] {
                best = j;
            }
        }
        if best == labels[i] {
            hits += 1;
        }
    }
    Some(hits as f64 / mask.len() as f64)
}

/// Rank-based AUC for binary scores (ties get averaged ranks). None when
/// either class is absent.
pub fn binary_auc(scores: &[f64], positives: &[bool]) -> Option<f64> {
    assert_eq!(scores.len(), positives.len());
    let npos = positives.iter().filter(|&&p| p).count();
    let nneg = positives.len() - npos;
    if npos == 0 || nneg == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        // average rank over the tie group, 1-based
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for &idx in &order[i..=j] {
            if positives[idx] {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    Some((rank_sum_pos - (npos * (npos + 1)) as f64 / 2.0) / (npos as f64 * nneg as f64))
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainConfig {
    pub arch: Arch,
    pub activation: Activation,
    pub layers: usize,
    pub hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub dropout: f64,
    pub seed: u64,
    pub train_mask: Vec<usize>,
    pub val_mask: Vec<usize>,
    pub test_mask: Vec<usize>,
    /// Stop after this many epochs without validation improvement.
    pub patience: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            arch: Arch::IcgNnU,
            activation: Activation::Relu,
            layers: 3,
            hidden: 64,
            lr: 0.003,
            epochs: 300,
            dropout: 0.0,
            seed: 1,
            train_mask: Vec::new(),
            val_mask: Vec::new(),
            test_mask: Vec::new(),
            patience: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainMetrics {
    pub epochs_run: usize,
    /// Epoch whose parameters were kept (best validation accuracy; the last
    /// epoch when no validation mask is given).
    pub best_epoch: usize,
    pub train_acc: Vec<f64>,
    pub val_acc: Vec<f64>,
    pub final_train_acc: Option<f64>,
    pub final_val_acc: Option<f64>,
    pub final_test_acc: Option<f64>,
    /// Present for two-class problems.
    pub val_auc: Option<f64>,
    pub test_auc: Option<f64>,
    pub n_classes: usize,
    pub train_secs: f64,
}

fn validate_masks(n: usize, cfg: &TrainConfig) -> Result<()> {
    let mut seen = vec![0u8; n];
    for (name, mask) in [
        ("train", &cfg.train_mask),
        ("val", &cfg.val_mask),
        ("test", &cfg.test_mask),
    ] {
        for &i in mask.iter() {
            if i >= n {
                return Err(Error::Invalid(format!("{name} mask references node {i} of {n}")));
            }
            if seen[i] != 0 {
                return Err(Error::Invalid(format!("node {i} appears in two masks")));
            }
            seen[i] = 1;
        }
    }
    if cfg.train_mask.is_empty() {
        return Err(Error::Invalid("training mask is empty".into()));
    }
    Ok(())
}

/// Full-graph node classification with Adam, optional dropout, and
/// best-validation parameter selection. The graph enters only through the
/// fixed affiliations of `icg` (ignored by the feature-only baseline).
pub fn train_node_classifier(
    g: &GraphSignal,
    icg: Option<&Icg>,
    cfg: &TrainConfig,
    labels: &[usize],
) -> Result<(NnParams, TrainMetrics)> {
    let n = g.n();
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {} nodes", labels.len(), n)));
    }
    if g.d() == 0 {
        return Err(Error::Invalid("node features are required for training".into()));
    }
    validate_masks(n, cfg)?;
    if !(0.0..1.0).contains(&cfg.dropout) {
        return Err(Error::Invalid(format!("dropout rate {} must lie in [0,1)", cfg.dropout)));
    }
    if cfg.lr <= 0.0 || !cfg.lr.is_finite() {
        return Err(Error::Invalid(format!("learning rate {} must be positive", cfg.lr)));
    }
    let classes = labels.iter().max().copied().unwrap_or(0) + 1;
    if classes >= 2 {
        let first = labels[cfg.train_mask[0]];
        if cfg.train_mask.iter().all(|&i| labels[i] == first) {
            return Err(Error::Invalid(
                "training mask covers a single class; nothing to separate".into(),
            ));
        }
    }
    let basis = match cfg.arch {
        Arch::Mlp => None,
        _ => {
            let icg = icg.ok_or_else(|| {
                Error::Invalid("this architecture needs a fitted community model".into())
            })?;
            if icg.n() != n {
                return Err(Error::Shape(format!(
                    "model has {} rows for a graph on {n} nodes",
                    icg.n()
                )));
            }
            Some(CommunityBasis::from_icg(icg)?)
        }
    };
    let k = basis.as_ref().map(|b| b.k()).unwrap_or(0);
    let mut params = NnParams::init(
        cfg.arch,
        cfg.activation,
        g.d(),
        cfg.hidden,
        cfg.layers,
        k,
        classes,
        cfg.seed,
    )?;
    let s = g.signal();
    let mut adam = AdamState::new(params.n_params());
    let mut drop_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0xd80f_0e1d);
    let t0 = Instant::now();

    let mut train_curve = Vec::with_capacity(cfg.epochs);
    let mut val_curve = Vec::new();
    let mut best_flat = params.flatten();
    let mut best_val = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut since_best = 0usize;
    let mut epochs_run = 0usize;
    for epoch in 0..cfg.epochs {
        epochs_run = epoch + 1;
        let cache = forward(&params, basis.as_ref(), s, cfg.dropout, Some(&mut drop_rng))?;
        let (loss, dlogits, train_acc) = softmax_ce(&cache.logits, labels, &cfg.train_mask);
        if !loss.is_finite() {
            return Err(Error::Numerical(format!(
                "training loss diverged at epoch {epoch}"
            )));
        }
        let grads = backward(&params, basis.as_ref(), &cache, &dlogits)?;
        let mut flat = params.flatten();
        adam.step(&mut flat, &grads.flatten(), cfg.lr);
        params.unflatten(&flat);
        train_curve.push(train_acc);

        if cfg.val_mask.is_empty() {
            best_flat = flat;
            best_epoch = epoch;
        } else {
            let eval = forward(&params, basis.as_ref(), s, 0.0, None)?;
            let v = accuracy(&eval.logits, labels, &cfg.val_mask).unwrap();
            val_curve.push(v);
            if v > best_val {
                best_val = v;
                best_flat = flat;
                best_epoch = epoch;
                since_best = 0;
            } else {
                since_best += 1;
                if let Some(patience) = cfg.patience {
                    if since_best >= patience {
                        break;
                    }
                }
            }
        }
    }
    params.unflatten(&best_flat);
    let eval = forward(&params, basis.as_ref(), s, 0.0, None)?;
    let final_train_acc = accuracy(&eval.logits, labels, &cfg.train_mask);
    let final_val_acc = accuracy(&eval.logits, labels, &cfg.val_mask);
    let final_test_acc = accuracy(&eval.logits, labels, &cfg.test_mask);
    let (val_auc, test_auc) = if classes == 2 {
        let score = |mask: &[usize]| -> Option<f64> {
            if mask.is_empty() {
                return None;
            }
            let scores: Vec<f64> = mask
                .iter()
                .map(|&i| {
                    let row = eval.logits.row(i);
                    let m = row[0].max(row[1]);
                    let e0 = (row[0] - m).exp();
                    let e1 = (row[1] - m).exp();
                    e1 / (e0 + e1)
                })
                .collect();
            let pos: Vec<bool> = mask.iter().map(|&i| labels[i] == 1).collect();
            binary_auc(&scores, &pos)
        };
        (score(&cfg.val_mask), score(&cfg.test_mask))
    } else {
        (None, None)
    };
    let metrics = TrainMetrics {
        epochs_run,
        best_epoch,
        train_acc: train_curve,
        val_acc: val_curve,
        final_train_acc,
        final_val_acc,
        final_test_acc,
        val_auc,
        test_auc,
        n_classes: classes,
        train_secs: t0.elapsed().as_secs_f64(),
    };
    Ok((params, metrics))
}
