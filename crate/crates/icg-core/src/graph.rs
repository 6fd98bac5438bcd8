//! Sparse symmetric graphs with bounded node signals.
//!
//! The adjacency is CSR with both directions of every undirected edge stored,
//! so `nnz` counts directed entries. All adjacency values and signal entries
//! live in [0, 1]; constructors reject anything else.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Symmetric sparse matrix in CSR form. Column indices are sorted within
/// each row and rows contain no duplicates.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds the symmetric closure of `entries`. Each undirected edge may be
    /// given once or in both directions; exact duplicates collapse, while a
    /// pair with two different weights is an error.
    pub fn from_entries(
        n: usize,
        entries: &[(usize, usize, f64)],
        allow_self_loops: bool,
    ) -> Result<Self> {
        let mut directed: Vec<(usize, usize, f64)> = Vec::with_capacity(entries.len() * 2);
        for &(i, j, w) in entries {
            if i >= n || j >= n {
                return Err(Error::Invalid(format!(
                    "edge ({i}, {j}) references a node id >= {n}"
                )));
            }
            if !w.is_finite() {
                return Err(Error::Invalid(format!("edge ({i}, {j}) has non-finite weight")));
            }
            if !(0.0..=1.0).contains(&w) {
                return Err(Error::Invalid(format!(
                    "edge ({i}, {j}) has weight {w} outside [0, 1]"
                )));
            }
            if i == j {
                if !allow_self_loops {
                    return Err(Error::Invalid(format!(
                        "self-loop at node {i} (pass allow_self_loops to keep it)"
                    )));
                }
                directed.push((i, j, w));
            } else {
                directed.push((i, j, w));
                directed.push((j, i, w));
            }
        }
        directed.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));
        // collapse exact duplicates, reject conflicting ones
        let mut dedup: Vec<(usize, usize, f64)> = Vec::with_capacity(directed.len());
        for (i, j, w) in directed {
            if let Some(&(pi, pj, pw)) = dedup.last() {
                if pi == i && pj == j {
                    if pw == w {
                        continue;
                    }
                    return Err(Error::Invalid(format!(
                        "edge ({i}, {j}) given twice with conflicting weights {pw} and {w}"
                    )));
                }
            }
            dedup.push((i, j, w));
        }
        let mut row_ptr = vec![0usize; n + 1];
        for &(i, _, _) in &dedup {
            row_ptr[i + 1] += 1;
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        let col_idx = dedup.iter().map(|e| e.1).collect();
        let values = dedup.iter().map(|e| e.2).collect();
        Ok(Self { n, row_ptr, col_idx, values })
    }

    /// Assembles from parts already known to be a valid symmetric CSR
    /// (sorted, deduplicated). Verified in debug builds only.
    pub(crate) fn from_sorted_parts(
        n: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Self {
        let m = Self { n, row_ptr, col_idx, values };
        debug_assert!(m.validate().is_ok());
        m
    }

    /// Assembles from untrusted parts, running the full structural check.
    pub(crate) fn from_raw_parts(
        n: usize,
        row_ptr: Vec<usize>,
        col_idx: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        let m = Self { n, row_ptr, col_idx, values };
        m.validate()?;
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Number of stored directed entries.
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    pub fn row_ptr(&self) -> &[usize] {
        &self.row_ptr
    }

    pub fn col_idx(&self) -> &[usize] {
        &self.col_idx
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Entry lookup by binary search within the row.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(pos) => vals[pos],
            Err(_) => 0.0,
        }
    }

    pub fn iter_entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals.iter()).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n);
        let mut out = vec![0.0; self.n];
        for i in 0..self.n {
            let (cols, vals) = self.row(i);
            let mut acc = 0.0;
            for (&j, &v) in cols.iter().zip(vals.iter()) {
                acc += v * x[j];
            }
            out[i] = acc;
        }
        out
    }

    /// Sum of squared entries; the weighted directed edge count.
    pub fn sum_sq(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut a = Array2::<f64>::zeros((self.n, self.n));
        for (i, j, v) in self.iter_entries() {
            a[[i, j]] = v;
        }
        a
    }

    /// Full structural check: monotone row pointers, sorted unique columns,
    /// in-range finite values, exact symmetry.
    pub fn validate(&self) -> Result<()> {
        if self.row_ptr.len() != self.n + 1
            || self.row_ptr[0] != 0
            || *self.row_ptr.last().unwrap() != self.col_idx.len()
            || self.col_idx.len() != self.values.len()
        {
            return Err(Error::Shape("csr pointer arrays are inconsistent".into()));
        }
        for i in 0..self.n {
            if self.row_ptr[i] > self.row_ptr[i + 1] || self.row_ptr[i + 1] > self.col_idx.len() {
                return Err(Error::Shape(format!("row pointer out of order at row {i}")));
            }
            let (cols, vals) = self.row(i);
            for w in cols.windows(2) {
                if w[0] >= w[1] {
                    return Err(Error::Invalid(format!(
                        "row {i} has unsorted or duplicate columns"
                    )));
                }
            }
            for (&j, &v) in cols.iter().zip(vals.iter()) {
                if j >= self.n {
                    return Err(Error::Invalid(format!("row {i} references column {j}")));
                }
                if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                    return Err(Error::Invalid(format!(
                        "entry ({i}, {j}) = {v} outside [0, 1]"
                    )));
                }
                if self.get(j, i) != v {
                    return Err(Error::Invalid(format!(
                        "asymmetric pair ({i}, {j}): {v} vs {}",
                        self.get(j, i)
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A graph together with a dense node signal (possibly zero channels).
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSignal {
    adjacency: CsrMatrix,
    signal: Array2<f64>,
}

impl GraphSignal {
    pub fn new(adjacency: CsrMatrix, signal: Array2<f64>) -> Result<Self> {
        if signal.nrows() != adjacency.n() {
            return Err(Error::Shape(format!(
                "signal has {} rows for {} nodes",
                signal.nrows(),
                adjacency.n()
            )));
        }
        for &v in signal.iter() {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::Invalid(format!("signal entry {v} outside [0, 1]")));
            }
        }
        Ok(Self { adjacency, signal })
    }

    /// Graph without node features.
    pub fn featureless(adjacency: CsrMatrix) -> Self {
        let n = adjacency.n();
        Self { adjacency, signal: Array2::zeros((n, 0)) }
    }

    /// Replaces the node signal, revalidating bounds.
    pub fn with_signal(self, signal: Array2<f64>) -> Result<Self> {
        Self::new(self.adjacency, signal)
    }

    pub fn adjacency(&self) -> &CsrMatrix {
        &self.adjacency
    }

    pub fn signal(&self) -> &Array2<f64> {
        &self.signal
    }

    pub fn n(&self) -> usize {
        self.adjacency.n()
    }

    pub fn d(&self) -> usize {
        self.signal.ncols()
    }

    pub fn nnz(&self) -> usize {
        self.adjacency.nnz()
    }
}

/// Weighted directed edge count deg(A) = sum a_ij^2. Equals nnz for an
/// unweighted graph; the cut-norm bounds are normalized by this quantity.
pub fn degree(g: &GraphSignal) -> f64 {
    g.adjacency().sum_sq()
}

/// G(n, p) with one Bernoulli draw per unordered pair, row-major order.
pub fn gen_erdos_renyi(n: usize, p: f64, seed: u64) -> Result<GraphSignal> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Invalid(format!("edge probability {p} outside [0, 1]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(p) {
                entries.push((i, j, 1.0));
            }
        }
    }
    Ok(GraphSignal::featureless(CsrMatrix::from_entries(n, &entries, false)?))
}

/// Stochastic block model. Nodes are grouped by consecutive blocks;
/// `probs[a][b]` is the edge probability between blocks a and b and must be
/// symmetric. Returns the graph and the block label of every node.
pub fn gen_sbm(
    block_sizes: &[usize],
    probs: &Array2<f64>,
    seed: u64,
) -> Result<(GraphSignal, Vec<usize>)> {
    let b = block_sizes.len();
    if probs.nrows() != b || probs.ncols() != b {
        return Err(Error::Shape(format!(
            "probability matrix is {}x{} for {b} blocks",
            probs.nrows(),
            probs.ncols()
        )));
    }
    for i in 0..b {
        for j in 0..b {
            let p = probs[[i, j]];
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Invalid(format!("block probability {p} outside [0, 1]")));
            }
            if probs[[i, j]] != probs[[j, i]] {
                return Err(Error::Invalid("block probability matrix is not symmetric".into()));
            }
        }
    }
    let labels: Vec<usize> = block_sizes
        .iter()
        .enumerate()
        .flat_map(|(bi, &sz)| std::iter::repeat(bi).take(sz))
        .collect();
    let n = labels.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if rng.random_bool(probs[[labels[i], labels[j]]]) {
                entries.push((i, j, 1.0));
            }
        }
    }
    let g = GraphSignal::featureless(CsrMatrix::from_entries(n, &entries, false)?);
    Ok((g, labels))
}

/// Uniform noise features in [0, 1], one row per node.
pub fn gen_noise_features(n: usize, d: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, d), |_| rng.random_range(0.0..1.0))
}

/// An i.i.d. node sample drawn with repetition. Order matters: position m
/// holds the m-th draw, and a node may appear several times.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSample {
    pub indices: Vec<usize>,
    pub seed: u64,
}

impl NodeSample {
    pub fn m(&self) -> usize {
        self.indices.len()
    }

    /// The identity sample 0..n, used to reduce subgraph operations to their
    /// full-graph counterparts.
    pub fn identity(n: usize) -> Self {
        Self { indices: (0..n).collect(), seed: 0 }
    }
}

/// M i.i.d. uniform draws from 0..n.
pub fn sample_uniform(n: usize, m: usize, seed: u64) -> Result<NodeSample> {
    if n == 0 {
        return Err(Error::Invalid("cannot sample from an empty graph".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices = (0..m).map(|_| rng.random_range(0..n)).collect();
    Ok(NodeSample { indices, seed })
}

/// M i.i.d. uniform draws from an explicit node pool.
pub fn sample_uniform_from(pool: &[usize], m: usize, seed: u64) -> Result<NodeSample> {
    if pool.is_empty() {
        return Err(Error::Invalid("cannot sample from an empty node pool".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let indices = (0..m).map(|_| pool[rng.random_range(0..pool.len())]).collect();
    Ok(NodeSample { indices, seed })
}

/// Induced instance on a sample: a'_ij = a_{n_i n_j}, s'_i = s_{n_i}.
/// Repeated draws duplicate rows; a pair of positions holding the same node
/// gets no edge between them (the original diagonal is empty for simple
/// graphs).
pub fn sample_subgraph(g: &GraphSignal, sample: &NodeSample) -> Result<GraphSignal> {
    let n = g.n();
    let m = sample.m();
    for &v in &sample.indices {
        if v >= n {
            return Err(Error::Invalid(format!("sample references node {v} of {n}")));
        }
    }
    // positions[v] = sorted sample positions holding node v
    let mut positions: Vec<Vec<usize>> = vec![Vec::new(); n];
    for (pos, &v) in sample.indices.iter().enumerate() {
        positions[v].push(pos);
    }
    let mut row_ptr = vec![0usize; m + 1];
    let mut col_idx = Vec::new();
    let mut values = Vec::new();
    let mut row: Vec<(usize, f64)> = Vec::new();
    for (pos, &v) in sample.indices.iter().enumerate() {
        row.clear();
        let (cols, vals) = g.adjacency().row(v);
        for (&u, &w) in cols.iter().zip(vals.iter()) {
            for &p in &positions[u] {
                row.push((p, w));
            }
        }
        row.sort_by_key(|e| e.0);
        for &(p, w) in &row {
            col_idx.push(p);
            values.push(w);
        }
        row_ptr[pos + 1] = col_idx.len();
    }
    let adjacency = CsrMatrix::from_sorted_parts(m, row_ptr, col_idx, values);
    let d = g.d();
    let mut signal = Array2::<f64>::zeros((m, d));
    for (pos, &v) in sample.indices.iter().enumerate() {
        for c in 0..d {
            signal[[pos, c]] = g.signal()[[v, c]];
        }
    }
    GraphSignal::new(adjacency, signal)
}

/// Deterministic shuffled index split used by training pipelines.
pub fn random_split(n: usize, fractions: (f64, f64), seed: u64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Fisher-Yates
    for i in (1..n).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    let n_train = ((n as f64) * fractions.0).round() as usize;
    let n_val = ((n as f64) * fractions.1).round() as usize;
    let train = order[..n_train.min(n)].to_vec();
    let val = order[n_train.min(n)..(n_train + n_val).min(n)].to_vec();
    let test = order[(n_train + n_val).min(n)..].to_vec();
    (train, val, test)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn path3() -> GraphSignal {
        GraphSignal::featureless(
            CsrMatrix::from_entries(3, &[(0, 1, 1.0), (1, 2, 1.0)], false).unwrap(),
        )
    }

    #[test]
    fn symmetric_closure_and_nnz() {
        let g = path3();
        assert_eq!(g.nnz(), 4);
        assert_eq!(g.adjacency().get(1, 0), 1.0);
        assert_eq!(g.adjacency().get(0, 2), 0.0);
        g.adjacency().validate().unwrap();
    }

    #[test]
    fn duplicate_edges_collapse_and_conflicts_fail() {
        let ok = CsrMatrix::from_entries(2, &[(0, 1, 0.5), (1, 0, 0.5)], false).unwrap();
        assert_eq!(ok.nnz(), 2);
        let err = CsrMatrix::from_entries(2, &[(0, 1, 0.5), (1, 0, 0.7)], false);
        assert!(err.is_err());
    }

    #[test]
    fn rejects_bad_edges() {
        assert!(CsrMatrix::from_entries(2, &[(0, 2, 1.0)], false).is_err());
        assert!(CsrMatrix::from_entries(2, &[(0, 1, 1.5)], false).is_err());
        assert!(CsrMatrix::from_entries(2, &[(0, 1, f64::NAN)], false).is_err());
        assert!(CsrMatrix::from_entries(2, &[(0, 0, 1.0)], false).is_err());
        assert!(CsrMatrix::from_entries(2, &[(0, 0, 1.0)], true).is_ok());
    }

    #[test]
    fn degree_counts_squared_weights() {
        let tri = CsrMatrix::from_entries(
            3,
            &[(0, 1, 1.0), (1, 2, 1.0), (0, 2, 1.0)],
            false,
        )
        .unwrap();
        assert_eq!(degree(&GraphSignal::featureless(tri)), 6.0);
        let half = CsrMatrix::from_entries(2, &[(0, 1, 0.5)], false).unwrap();
        assert_eq!(degree(&GraphSignal::featureless(half)), 0.5);
        let empty = CsrMatrix::from_entries(4, &[], false).unwrap();
        assert_eq!(degree(&GraphSignal::featureless(empty)), 0.0);
    }

    #[test]
    fn erdos_renyi_extremes_and_determinism() {
        let full = gen_erdos_renyi(4, 1.0, 9).unwrap();
        assert_eq!(full.nnz(), 12);
        let none = gen_erdos_renyi(4, 0.0, 9).unwrap();
        assert_eq!(none.nnz(), 0);
        let a = gen_erdos_renyi(40, 0.3, 7).unwrap();
        let b = gen_erdos_renyi(40, 0.3, 7).unwrap();
        assert_eq!(a, b);
        let c = gen_erdos_renyi(40, 0.3, 8).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn sbm_identity_blocks_are_disjoint_cliques() {
        let probs = array![[1.0, 0.0], [0.0, 1.0]];
        let (g, labels) = gen_sbm(&[2, 2], &probs, 3).unwrap();
        assert_eq!(labels, vec![0, 0, 1, 1]);
        assert_eq!(g.nnz(), 4);
        assert_eq!(g.adjacency().get(0, 1), 1.0);
        assert_eq!(g.adjacency().get(2, 3), 1.0);
        assert_eq!(g.adjacency().get(1, 2), 0.0);
    }

    #[test]
    fn subgraph_identity_is_bitwise_equal() {
        let g = gen_erdos_renyi(25, 0.4, 11).unwrap();
        let sub = sample_subgraph(&g, &NodeSample::identity(25)).unwrap();
        assert_eq!(g, sub);
    }

    #[test]
    fn subgraph_repeated_node_has_no_self_edges() {
        let g = path3();
        let s = NodeSample { indices: vec![1, 1, 1], seed: 0 };
        let sub = sample_subgraph(&g, &s).unwrap();
        assert_eq!(sub.nnz(), 0);
    }

    #[test]
    fn subgraph_picks_induced_edges() {
        // complete graph on 5 nodes, sample 3 distinct nodes -> triangle
        let mut entries = Vec::new();
        for i in 0..5 {
            for j in (i + 1)..5 {
                entries.push((i, j, 1.0));
            }
        }
        let g = GraphSignal::featureless(CsrMatrix::from_entries(5, &entries, false).unwrap());
        let s = NodeSample { indices: vec![4, 0, 2], seed: 0 };
        let sub = sample_subgraph(&g, &s).unwrap();
        assert_eq!(sub.nnz(), 6);
        sub.adjacency().validate().unwrap();
    }

    #[test]
    fn sample_uniform_is_seeded() {
        let a = sample_uniform(100, 20, 5).unwrap();
        let b = sample_uniform(100, 20, 5).unwrap();
        assert_eq!(a, b);
        assert!(a.indices.iter().all(|&v| v < 100));
        let pool = vec![3, 5, 7];
        let c = sample_uniform_from(&pool, 50, 5).unwrap();
        assert!(c.indices.iter().all(|v| pool.contains(v)));
    }

    #[test]
    fn signal_bounds_enforced() {
        let adj = CsrMatrix::from_entries(2, &[(0, 1, 1.0)], false).unwrap();
        assert!(GraphSignal::new(adj.clone(), array![[0.5], [1.2]]).is_err());
        assert!(GraphSignal::new(adj, array![[0.5], [1.0]]).is_ok());
    }
}
