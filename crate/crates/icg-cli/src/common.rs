//! Input plumbing shared by the subcommands.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ndarray::Array2;
use serde_json::{json, Value};

use icg_core::{
    gen_erdos_renyi, gen_noise_features, gen_sbm, read_graph_auto, GraphSignal, LoadOptions,
};

/// Where the graph comes from: a file (edge list or binary snapshot, with an
/// optional feature csv) or a generated Erdos-Renyi instance.
#[derive(clap::Args, Debug)]
pub struct GraphSource {
    /// Edge list (text) or graph snapshot (binary) to load
    #[arg(long)]
    pub graph: Option<PathBuf>,

    /// Feature csv attached to --graph
    #[arg(long, requires = "graph")]
    pub features: Option<PathBuf>,

    /// Min-max normalize loaded feature columns
    #[arg(long, requires = "features")]
    pub normalize: bool,

    /// Generate an Erdos-Renyi graph with this many nodes instead of loading
    #[arg(long, conflicts_with = "graph")]
    pub er_n: Option<usize>,

    /// Edge probability for --er-n
    #[arg(long, default_value_t = 0.1)]
    pub er_p: f64,

    /// Width of uniform noise features attached to the generated graph
    #[arg(long, default_value_t = 0)]
    pub gen_features: usize,

    /// Seed for graph and feature generation
    #[arg(long, default_value_t = 7)]
    pub graph_seed: u64,
}

impl GraphSource {
    pub fn load(&self) -> Result<GraphSignal> {
        match (&self.graph, self.er_n) {
            (Some(path), _) => {
                let opts = LoadOptions { normalize: self.normalize, ..Default::default() };
                let g = read_graph_auto(path, self.features.as_deref(), &opts)
                    .with_context(|| format!("loading graph from {}", path.display()))?;
                Ok(g)
            }
            (None, Some(n)) => {
                let g = gen_erdos_renyi(n, self.er_p, self.graph_seed)?;
                attach_noise(g, self.gen_features, self.graph_seed + 1)
            }
            (None, None) => bail!("either --graph or --er-n is required"),
        }
    }

    pub fn describe(&self) -> Value {
        match (&self.graph, self.er_n) {
            (Some(path), _) => json!({
                "source": "file",
                "graph": path.display().to_string(),
                "features": self.features.as_ref().map(|p| p.display().to_string()),
                "normalize": self.normalize,
            }),
            _ => json!({
                "source": "erdos-renyi",
                "n": self.er_n,
                "p": self.er_p,
                "features": self.gen_features,
                "seed": self.graph_seed,
            }),
        }
    }
}

/// Planted-community generator used by the classification commands.
#[derive(clap::Args, Debug)]
pub struct SbmSource {
    /// Comma-separated block sizes
    #[arg(long, value_delimiter = ',', default_values_t = vec![300usize, 300])]
    pub blocks: Vec<usize>,

    /// Within-block edge probability
    #[arg(long, default_value_t = 0.9)]
    pub p_in: f64,

    /// Cross-block edge probability
    #[arg(long, default_value_t = 0.05)]
    pub p_out: f64,

    /// Width of the uninformative noise features
    #[arg(long, default_value_t = 4)]
    pub noise_d: usize,

    /// Seed for graph and feature generation
    #[arg(long, default_value_t = 7)]
    pub graph_seed: u64,
}

impl SbmSource {
    /// Block structure lives only in the adjacency; features are noise, so a
    /// classifier has to read the graph to beat chance.
    pub fn generate(&self) -> Result<(GraphSignal, Vec<usize>)> {
        let b = self.blocks.len();
        if b == 0 {
            bail!("--blocks needs at least one block");
        }
        let probs = Array2::from_shape_fn(
            (b, b),
            |(i, j)| if i == j { self.p_in } else { self.p_out },
        );
        let (g, labels) = gen_sbm(&self.blocks, &probs, self.graph_seed)?;
        let g = attach_noise(g, self.noise_d, self.graph_seed + 1)?;
        Ok((g, labels))
    }

    pub fn describe(&self) -> Value {
        json!({
            "source": "sbm",
            "blocks": self.blocks,
            "p_in": self.p_in,
            "p_out": self.p_out,
            "noise_d": self.noise_d,
            "seed": self.graph_seed,
        })
    }
}

fn attach_noise(g: GraphSignal, d: usize, seed: u64) -> Result<GraphSignal> {
    if d == 0 {
        return Ok(g);
    }
    let s = gen_noise_features(g.n(), d, seed);
    Ok(g.with_signal(s)?)
}

/// Labels file: one small non-negative integer per line, `#` comments and
/// blank lines skipped.
pub fn read_labels(path: &Path) -> Result<Vec<usize>> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading labels from {}", path.display()))?;
    let mut labels = Vec::new();
    for (ln, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: usize = line
            .parse()
            .with_context(|| format!("labels line {}: {line:?}", ln + 1))?;
        labels.push(v);
    }
    if labels.is_empty() {
        bail!("labels file {} holds no labels", path.display());
    }
    Ok(labels)
}

pub fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut text = String::new();
    for &l in labels {
        text.push_str(&l.to_string());
        text.push('\n');
    }
    std::fs::write(path, text).with_context(|| format!("writing labels to {}", path.display()))?;
    Ok(())
}

pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
    (mean, var.sqrt())
}

pub fn median(xs: &[f64]) -> f64 {
    let mut v: Vec<f64> = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    match v.len() {
        0 => f64::NAN,
        n if n % 2 == 1 => v[n / 2],
        n => 0.5 * (v[n / 2 - 1] + v[n / 2]),
    }
}
