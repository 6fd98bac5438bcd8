//! File formats: whitespace edge lists, numeric feature CSV, and a
//! little-endian binary snapshot that round-trips graphs bit-exactly.
//!
//! Every decoder here accepts untrusted bytes: lengths are checked before
//! any allocation sized from the header.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::graph::{CsrMatrix, GraphSignal};

const GRAPH_MAGIC: &[u8; 4] = b"ICGS";
const GRAPH_VERSION: u32 = 1;
/// Refuse snapshots whose header claims more than this many elements in any
/// single array. Keeps hostile headers from driving huge allocations.
const MAX_SNAPSHOT_ELEMS: u64 = 1 << 33;

/// Loader knobs. `n` forces the node count (ids >= n become errors);
/// otherwise it is inferred from the feature file or the largest edge id.
#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    pub n: Option<usize>,
    pub normalize: bool,
    pub allow_self_loops: bool,
}

/// Parses `i j [w]` lines. `#` starts a comment, blank lines are skipped,
/// ids are 0-based. Returns the raw (unmirrored) entries plus the largest id
/// seen, or None when the file has no edges.
pub fn parse_edge_list(text: &str) -> Result<(Vec<(usize, usize, f64)>, Option<usize>)> {
    let mut entries = Vec::new();
    let mut max_id = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse = |tok: &str, what: &str| -> Result<usize> {
            tok.parse::<usize>().map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: format!("bad {what} id {tok:?}"),
            })
        };
        let mut toks = line.split_whitespace();
        let i = parse(toks.next().unwrap(), "source")?;
        let j = match toks.next() {
            Some(t) => parse(t, "target")?,
            None => {
                return Err(Error::Parse { line: lineno + 1, msg: "missing target id".into() })
            }
        };
        let w = match toks.next() {
            None => 1.0,
            Some(t) => t.parse::<f64>().map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: format!("bad weight {t:?}"),
            })?,
        };
        if toks.next().is_some() {
            return Err(Error::Parse {
                line: lineno + 1,
                msg: "expected `i j [w]`, got extra fields".into(),
            });
        }
        if !w.is_finite() {
            return Err(Error::Parse { line: lineno + 1, msg: "non-finite weight".into() });
        }
        max_id = Some(max_id.map_or(i.max(j), |m: usize| m.max(i).max(j)));
        entries.push((i, j, w));
    }
    Ok((entries, max_id))
}

/// Parses comma-separated numeric rows. All rows must have the same width.
/// With `normalize`, each column is min-max scaled into [0, 1]; a constant
/// column collapses to 0.
pub fn parse_feature_csv(text: &str, normalize: bool) -> Result<Array2<f64>> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut row = Vec::new();
        for tok in line.split(',') {
            let v = tok.trim().parse::<f64>().map_err(|_| Error::Parse {
                line: lineno + 1,
                msg: format!("bad feature value {tok:?}"),
            })?;
            if !v.is_finite() {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: "non-finite feature value".into(),
                });
            }
            row.push(v);
        }
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("row has {} columns, expected {w}", row.len()),
                })
            }
            _ => {}
        }
        rows.push(row);
    }
    let d = width.unwrap_or(0);
    let n = rows.len();
    let mut s = Array2::<f64>::zeros((n, d));
    for (i, row) in rows.iter().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            s[[i, j]] = v;
        }
    }
    if normalize {
        for j in 0..d {
            let mut lo = f64::INFINITY;
            let mut hi = f64::NEG_INFINITY;
            for i in 0..n {
                lo = lo.min(s[[i, j]]);
                hi = hi.max(s[[i, j]]);
            }
            let span = hi - lo;
            for i in 0..n {
                s[[i, j]] = if span > 0.0 { (s[[i, j]] - lo) / span } else { 0.0 };
            }
        }
    } else {
        for &v in s.iter() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Invalid(format!(
                    "feature value {v} outside [0, 1]; pass normalize to rescale"
                )));
            }
        }
    }
    Ok(s)
}

/// Builds a validated graph from in-memory text inputs.
pub fn graph_from_strs(
    edge_text: &str,
    feature_text: Option<&str>,
    opts: &LoadOptions,
) -> Result<GraphSignal> {
    let (entries, max_id) = parse_edge_list(edge_text)?;
    let signal = feature_text.map(|t| parse_feature_csv(t, opts.normalize)).transpose()?;
    let n = match (opts.n, &signal, max_id) {
        (Some(n), _, _) => n,
        (None, Some(s), _) => s.nrows(),
        (None, None, Some(m)) => m + 1,
        (None, None, None) => {
            return Err(Error::Invalid(
                "empty edge list and no node count given; cannot infer graph size".into(),
            ))
        }
    };
    let adjacency = CsrMatrix::from_entries(n, &entries, opts.allow_self_loops)?;
    match signal {
        Some(s) => GraphSignal::new(adjacency, s),
        None => Ok(GraphSignal::featureless(adjacency)),
    }
}

/// Loads a graph (and optional features) from disk.
pub fn load_graph_signal(
    edge_path: &Path,
    feature_path: Option<&Path>,
    opts: &LoadOptions,
) -> Result<GraphSignal> {
    let edge_text = fs::read_to_string(edge_path)?;
    let feature_text = feature_path.map(fs::read_to_string).transpose()?;
    graph_from_strs(&edge_text, feature_text.as_deref(), opts)
}

/// Writes each undirected edge once as `i j w`. Weights use the shortest
/// representation that parses back to the identical f64.
pub fn save_edge_list(g: &GraphSignal, path: &Path) -> Result<()> {
    let mut out = String::new();
    for (i, j, w) in g.adjacency().iter_entries() {
        if i <= j {
            out.push_str(&format!("{} {} {}\n", i, j, w));
        }
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn save_feature_csv(s: &Array2<f64>, path: &Path) -> Result<()> {
    let mut out = String::new();
    for i in 0..s.nrows() {
        let row: Vec<String> = (0..s.ncols()).map(|j| format!("{}", s[[i, j]])).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

pub(crate) struct ByteWriter {
    pub(crate) buf: Vec<u8>,
}

impl ByteWriter {
    pub(crate) fn new() -> Self {
        Self { buf: Vec::new() }
    }
    pub(crate) fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub(crate) fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub(crate) fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
}

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(buf: &'a [u8]) -> Self {
        Self { buf, pos: 0 }
    }
    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < len {
            return Err(Error::Snapshot("truncated snapshot".into()));
        }
        let s = &self.buf[self.pos..self.pos + len];
        self.pos += len;
        Ok(s)
    }
    pub(crate) fn magic(&mut self, expect: &[u8; 4]) -> Result<()> {
        let got = self.take(4)?;
        if got != expect {
            return Err(Error::Snapshot(format!(
                "bad magic {:?}, expected {:?}",
                got,
                &expect[..]
            )));
        }
        Ok(())
    }
    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    pub(crate) fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
    /// Declared element count, sanity-capped and cross-checked against the
    /// bytes actually present before anything is allocated.
    pub(crate) fn checked_len(&self, count: u64, elem_bytes: u64, what: &str) -> Result<usize> {
        if count > MAX_SNAPSHOT_ELEMS {
            return Err(Error::Snapshot(format!("implausible {what} count {count}")));
        }
        let need = count.checked_mul(elem_bytes).ok_or_else(|| {
            Error::Snapshot(format!("overflowing {what} count {count}"))
        })?;
        if (self.remaining() as u64) < need {
            return Err(Error::Snapshot(format!(
                "header claims {count} {what} but only {} bytes remain",
                self.remaining()
            )));
        }
        Ok(count as usize)
    }
    pub(crate) fn expect_end(&self) -> Result<()> {
        if self.remaining() != 0 {
            return Err(Error::Snapshot(format!(
                "{} trailing bytes after snapshot payload",
                self.remaining()
            )));
        }
        Ok(())
    }
}

/// Binary graph snapshot: magic, version, n, d, nnz, CSR arrays, then the
/// signal in row-major order. Bit-exact for every f64.
pub fn graph_snapshot_bytes(g: &GraphSignal) -> Vec<u8> {
    let mut w = ByteWriter::new();
    w.buf.extend_from_slice(GRAPH_MAGIC);
    w.u32(GRAPH_VERSION);
    w.u64(g.n() as u64);
    w.u64(g.d() as u64);
    w.u64(g.nnz() as u64);
    for &p in g.adjacency().row_ptr() {
        w.u64(p as u64);
    }
    for &c in g.adjacency().col_idx() {
        w.u64(c as u64);
    }
    for &v in g.adjacency().values() {
        w.f64(v);
    }
    for &v in g.signal().iter() {
        w.f64(v);
    }
    w.buf
}

pub fn graph_from_snapshot_bytes(bytes: &[u8]) -> Result<GraphSignal> {
    let mut r = ByteReader::new(bytes);
    r.magic(GRAPH_MAGIC)?;
    let version = r.u32()?;
    if version != GRAPH_VERSION {
        return Err(Error::Snapshot(format!("unsupported graph snapshot version {version}")));
    }
    let n = r.u64()?;
    let d = r.u64()?;
    let nnz = r.u64()?;
    // total payload must match the header exactly
    let ptrs = n.checked_add(1).ok_or_else(|| Error::Snapshot("node count overflows".into()))?;
    let n_elems = r.checked_len(ptrs, 8, "row pointers")? - 1;
    let mut row_ptr = Vec::with_capacity(n_elems + 1);
    for _ in 0..=n_elems {
        let p = r.u64()?;
        if p > nnz {
            return Err(Error::Snapshot(format!("row pointer {p} exceeds nnz {nnz}")));
        }
        row_ptr.push(p as usize);
    }
    let nnz = r.checked_len(nnz, 16, "adjacency entries")?;
    let mut col_idx = Vec::with_capacity(nnz);
    for _ in 0..nnz {
        col_idx.push(r.u64()? as usize);
    }
    let mut values = Vec::with_capacity(nnz);
    for _ in 0..nnz {
        values.push(r.f64()?);
    }
    let sig_elems = r.checked_len(
        (n_elems as u64).checked_mul(d).ok_or_else(|| Error::Snapshot("n*d overflows".into()))?,
        8,
        "signal entries",
    )?;
    let mut sig = Vec::with_capacity(sig_elems);
    for _ in 0..sig_elems {
        sig.push(r.f64()?);
    }
    r.expect_end()?;
    let adjacency = CsrMatrix::from_raw_parts(n_elems, row_ptr, col_idx, values)?;
    let signal = Array2::from_shape_vec((n_elems, d as usize), sig)
        .map_err(|e| Error::Snapshot(format!("signal shape: {e}")))?;
    GraphSignal::new(adjacency, signal)
}

pub fn write_graph_snapshot(g: &GraphSignal, path: &Path) -> Result<()> {
    fs::write(path, graph_snapshot_bytes(g))?;
    Ok(())
}

pub fn read_graph_snapshot(path: &Path) -> Result<GraphSignal> {
    graph_from_snapshot_bytes(&fs::read(path)?)
}

/// Reads either format by sniffing the magic bytes.
pub fn read_graph_auto(path: &Path, features: Option<&Path>, opts: &LoadOptions) -> Result<GraphSignal> {
    let bytes = fs::read(path)?;
    if bytes.len() >= 4 && &bytes[..4] == GRAPH_MAGIC {
        let g = graph_from_snapshot_bytes(&bytes)?;
        if let Some(fpath) = features {
            let text = fs::read_to_string(fpath)?;
            let s = parse_feature_csv(&text, opts.normalize)?;
            return g.with_signal(s);
        }
        return Ok(g);
    }
    let text = String::from_utf8(bytes)
        .map_err(|_| Error::Invalid("edge list is not valid UTF-8".into()))?;
    let feature_text = features.map(fs::read_to_string).transpose()?;
    graph_from_strs(&text, feature_text.as_deref(), opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::gen_erdos_renyi;
    use ndarray::array;

    #[test]
    fn parses_path_graph() {
        let g = graph_from_strs("0 1\n1 2\n", None, &LoadOptions::default()).unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.nnz(), 4);
    }

    #[test]
    fn comments_blanks_and_weights() {
        let text = "# header\n\n0 1 0.25  # trailing comment\n2 3\n";
        let g = graph_from_strs(text, None, &LoadOptions::default()).unwrap();
        assert_eq!(g.n(), 4);
        assert_eq!(g.adjacency().get(1, 0), 0.25);
        assert_eq!(g.adjacency().get(2, 3), 1.0);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let err = parse_edge_list("0 1\nx 2\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("unexpected error {other:?}"),
        }
        assert!(parse_edge_list("0\n").is_err());
        assert!(parse_edge_list("0 1 2 3\n").is_err());
        assert!(parse_edge_list("0 1 inf\n").is_err());
    }

    #[test]
    fn declared_n_bounds_ids() {
        let opts = LoadOptions { n: Some(2), ..Default::default() };
        assert!(graph_from_strs("0 1\n1 2\n", None, &opts).is_err());
        let opts = LoadOptions { n: Some(5), ..Default::default() };
        let g = graph_from_strs("0 1\n", None, &opts).unwrap();
        assert_eq!(g.n(), 5);
    }

    #[test]
    fn feature_csv_normalization() {
        let s = parse_feature_csv("1.0\n3.0\n2.0\n", true).unwrap();
        assert_eq!(s, array![[0.0], [1.0], [0.5]]);
        let c = parse_feature_csv("4.0\n4.0\n", true).unwrap();
        assert_eq!(c, array![[0.0], [0.0]]);
        assert!(parse_feature_csv("1.5\n", false).is_err());
        assert!(parse_feature_csv("0.5,0.5\n0.5\n", false).is_err());
    }

    #[test]
    fn feature_rows_define_n() {
        let g = graph_from_strs("0 1\n", Some("0.1\n0.2\n0.3\n"), &LoadOptions::default())
            .unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.d(), 1);
    }

    #[test]
    fn edge_list_roundtrip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.edges");
        let mut g = gen_erdos_renyi(30, 0.3, 4).unwrap();
        // throw in awkward weights
        let entries: Vec<(usize, usize, f64)> = g
            .adjacency()
            .iter_entries()
            .filter(|&(i, j, _)| i < j)
            .enumerate()
            .map(|(idx, (i, j, _))| (i, j, 1.0 / (idx as f64 + 3.0)))
            .collect();
        g = GraphSignal::featureless(
            CsrMatrix::from_entries(30, &entries, false).unwrap(),
        );
        save_edge_list(&g, &path).unwrap();
        let opts = LoadOptions { n: Some(30), ..Default::default() };
        let back = load_graph_signal(&path, None, &opts).unwrap();
        assert_eq!(g, back);
    }

    #[test]
    fn snapshot_roundtrip_bit_exact() {
        let g = gen_erdos_renyi(20, 0.4, 2)
            .unwrap()
            .with_signal(crate::graph::gen_noise_features(20, 3, 7))
            .unwrap();
        let bytes = graph_snapshot_bytes(&g);
        let back = graph_from_snapshot_bytes(&bytes).unwrap();
        assert_eq!(g, back);
        assert_eq!(bytes, graph_snapshot_bytes(&back));
    }

    #[test]
    fn snapshot_rejects_corruption() {
        let g = gen_erdos_renyi(10, 0.5, 1).unwrap();
        let bytes = graph_snapshot_bytes(&g);
        assert!(graph_from_snapshot_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut wrong_magic = bytes.clone();
        wrong_magic[0] = b'X';
        assert!(graph_from_snapshot_bytes(&wrong_magic).is_err());
        let mut huge_n = bytes.clone();
        huge_n[8..16].copy_from_slice(&u64::MAX.to_le_bytes());
        assert!(graph_from_snapshot_bytes(&huge_n).is_err());
        let mut trailing = bytes;
        trailing.push(0);
        assert!(graph_from_snapshot_bytes(&trailing).is_err());
    }
}
