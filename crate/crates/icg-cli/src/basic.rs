//! gen, fit and cutnorm: the building-block commands.

use std::path::PathBuf;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use serde_json::{json, Value};

use icg_core::{
    cut_norm_exact, cut_norm_heuristic, cut_norm_residual, degree, fit_icg, frob_matrix,
    read_graph_auto, sgd_fit, FitConfig, FitReport, Icg, InitMethod, LoadOptions, OptAlgo,
    SgdConfig,
};

use crate::common::{write_labels, GraphSource, SbmSource};
use crate::report::{emit, ReportBuilder};

#[derive(Copy, Clone, Debug, PartialEq, ValueEnum)]
pub enum GenModel {
    Er,
    Sbm,
}

#[derive(Args, Debug)]
pub struct GenArgs {
    /// Random graph family
    #[arg(long, value_enum, default_value = "er")]
    pub model: GenModel,

    /// Node count (er)
    #[arg(long, default_value_t = 200)]
    pub n: usize,

    /// Edge probability (er)
    #[arg(long, default_value_t = 0.1)]
    pub p: f64,

    /// Feature width attached to an er graph
    #[arg(long, default_value_t = 0)]
    pub features: usize,

    #[command(flatten)]
    pub sbm: SbmSource,

    /// Seed for er generation (sbm uses --graph-seed)
    #[arg(long, default_value_t = 7)]
    pub seed: u64,

    /// Graph output; a .icgs extension selects the binary snapshot,
    /// anything else an edge list
    #[arg(long)]
    pub out_graph: Option<PathBuf>,

    /// Feature csv output
    #[arg(long)]
    pub out_features: Option<PathBuf>,

    /// Block labels output (sbm only)
    #[arg(long)]
    pub out_labels: Option<PathBuf>,

    /// Report destination (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run_gen(args: &GenArgs) -> Result<Value> {
    let mut rb = ReportBuilder::new("gen");

    let (g, labels, config, seeds) = match args.model {
        GenModel::Er => {
            let g = icg_core::gen_erdos_renyi(args.n, args.p, args.seed)?;
            let g = if args.features > 0 {
                g.with_signal(icg_core::gen_noise_features(args.n, args.features, args.seed + 1))?
            } else {
                g
            };
            let cfg = json!({
                "model": "er", "n": args.n, "p": args.p, "features": args.features,
            });
            let seeds = json!({ "graph": args.seed, "features": args.seed + 1 });
            (g, None, cfg, seeds)
        }
        GenModel::Sbm => {
            let (g, labels) = args.sbm.generate()?;
            let cfg = json!({ "model": "sbm", "sbm": args.sbm.describe() });
            let seeds =
                json!({ "graph": args.sbm.graph_seed, "features": args.sbm.graph_seed + 1 });
            (g, Some(labels), cfg, seeds)
        }
    };
    rb.config(config);
    rb.seeds(seeds);

    if let Some(path) = &args.out_graph {
        if path.extension().is_some_and(|e| e == "icgs") {
            icg_core::write_graph_snapshot(&g, path)?;
        } else {
            icg_core::save_edge_list(&g, path)?;
        }
    }
    if let Some(path) = &args.out_features {
        if g.d() == 0 {
            bail!("--out-features requested but the graph has no features");
        }
        icg_core::save_feature_csv(g.signal(), path)?;
    }
    if let Some(path) = &args.out_labels {
        match &labels {
            Some(l) => write_labels(path, l)?,
            None => bail!("--out-labels only applies to --model sbm"),
        }
    }

    let n = g.n();
    let pairs = if n > 1 { (n * (n - 1) / 2) as f64 } else { 1.0 };
    rb.metrics(json!({
        "n": n,
        "d": g.d(),
        "stored_nnz": g.nnz(),
        "undirected_edges": g.nnz() / 2,
        "density": (g.nnz() / 2) as f64 / pairs,
        "block_labels_written": labels.is_some() && args.out_labels.is_some(),
    }));

    rb.check(
        "symmetric_storage",
        g.nnz() % 2 == 0,
        format!("stored entry count {} must be even for an undirected simple graph", g.nnz()),
    );
    if let Some(path) = &args.out_graph {
        let back = read_graph_auto(path, None, &LoadOptions { n: Some(n), ..Default::default() })?;
        rb.check(
            "written_graph_reads_back",
            back.n() == n && back.nnz() == g.nnz(),
            format!(
                "roundtrip gave n={} nnz={}, expected n={} nnz={}",
                back.n(),
                back.nnz(),
                n,
                g.nnz()
            ),
        );
    }

    let report = rb.finish()?;
    emit(&report, args.out.as_deref())?;
    Ok(report)
}

#[derive(Copy, Clone, Debug, PartialEq, ValueEnum)]
pub enum InitArg {
    Eigen,
    Random,
}

impl From<InitArg> for InitMethod {
    fn from(v: InitArg) -> Self {
        match v {
            InitArg::Eigen => InitMethod::Eigen,
            InitArg::Random => InitMethod::Random,
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, ValueEnum)]
pub enum AlgoArg {
    Adam,
    Gd,
}

impl From<AlgoArg> for OptAlgo {
    fn from(v: AlgoArg) -> Self {
        match v {
            AlgoArg::Adam => OptAlgo::Adam,
            AlgoArg::Gd => OptAlgo::Gd,
        }
    }
}

#[derive(Args, Debug)]
pub struct FitArgs {
    #[command(flatten)]
    pub source: GraphSource,

    /// Community count
    #[arg(long, default_value_t = 8)]
    pub k: usize,

    /// Signal loss weight
    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,

    #[arg(long, default_value_t = 0.02)]
    pub lr: f64,

    #[arg(long, default_value_t = 300)]
    pub epochs: usize,

    #[arg(long, value_enum, default_value = "eigen")]
    pub init: InitArg,

    #[arg(long, value_enum, default_value = "adam")]
    pub algo: AlgoArg,

    /// Seed for the initializer (and minibatches with --sgd)
    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Loss trace stride; 0 records only the endpoints
    #[arg(long, default_value_t = 0)]
    pub log_every: usize,

    /// Optimize on uniformly sampled node subsets instead of full gradients
    #[arg(long)]
    pub sgd: bool,

    /// Nodes per sampled subset (with --sgd)
    #[arg(long, default_value_t = 100)]
    pub m: usize,

    /// Subset steps (with --sgd)
    #[arg(long, default_value_t = 2000)]
    pub steps: usize,

    /// Step size for the subset optimizer (plain gradient steps)
    #[arg(long, default_value_t = 0.5)]
    pub sgd_lr: f64,

    /// Disable the 1/(q(1-q)) logit preconditioning in subset steps
    #[arg(long)]
    pub no_scale_q_grads: bool,

    /// Model snapshot destination
    #[arg(long)]
    pub out_model: Option<PathBuf>,

    /// Report destination (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn trace_json(rep: &FitReport) -> Value {
    let rows: Vec<Value> = rep
        .loss_trace
        .iter()
        .map(|(epoch, lp)| {
            json!({ "epoch": epoch, "graph": lp.graph, "signal": lp.signal, "total": lp.total })
        })
        .collect();
    Value::Array(rows)
}

pub fn run_fit(args: &FitArgs) -> Result<Value> {
    let mut rb = ReportBuilder::new("fit");
    let g = args.source.load()?;

    let cfg = FitConfig {
        k: args.k,
        lambda: args.lambda,
        epochs: args.epochs,
        lr: args.lr,
        algo: args.algo.into(),
        init: args.init.into(),
        seed: args.seed,
        log_every: args.log_every,
    };

    let (icg, fit_rep) = if args.sgd {
        let (init, _converged) = match args.init {
            InitArg::Eigen => icg_core::eigen_init(&g, args.k, args.lambda, args.seed)?,
            InitArg::Random => (icg_core::random_init(&g, args.k, args.lambda, args.seed)?, true),
        };
        let sgd_cfg = SgdConfig {
            m: args.m,
            steps: args.steps,
            lr: args.sgd_lr,
            lambda: args.lambda,
            seed: args.seed,
            scale_q_grads: !args.no_scale_q_grads,
            pool: None,
            log_every: args.log_every,
        };
        sgd_fit(&g, &sgd_cfg, init)?
    } else {
        fit_icg(&g, &cfg)?
    };

    if let Some(path) = &args.out_model {
        icg.write_snapshot(path)?;
    }

    rb.config(json!({
        "graph": args.source.describe(),
        "k": args.k,
        "lambda": args.lambda,
        "lr": args.lr,
        "epochs": args.epochs,
        "init": format!("{:?}", args.init).to_lowercase(),
        "algo": format!("{:?}", args.algo).to_lowercase(),
        "sgd": args.sgd,
        "m": if args.sgd { Some(args.m) } else { None },
        "steps": if args.sgd { Some(args.steps) } else { None },
        "sgd_lr": if args.sgd { Some(args.sgd_lr) } else { None },
        "scale_q_grads": !args.no_scale_q_grads,
    }));
    rb.seeds(json!({ "graph": args.source.graph_seed, "fit": args.seed }));

    let first_total = fit_rep.loss_trace.first().map(|(_, lp)| lp.total);
    rb.metrics(json!({
        "n": g.n(),
        "d": g.d(),
        "k": args.k,
        "final_loss": {
            "graph": fit_rep.final_loss.graph,
            "signal": fit_rep.final_loss.signal,
            "total": fit_rep.final_loss.total,
        },
        "epochs_run": fit_rep.epochs_run,
        "eigen_converged": fit_rep.eigen_converged,
        "loss_trace": trace_json(&fit_rep),
    }));
    rb.time("init_secs", json!(fit_rep.init_secs));
    rb.time("train_secs", json!(fit_rep.train_secs));

    rb.check(
        "final_loss_finite",
        fit_rep.final_loss.total.is_finite(),
        format!("final total loss {}", fit_rep.final_loss.total),
    );
    if let Some(first) = first_total {
        rb.check(
            "no_gross_divergence",
            fit_rep.final_loss.total <= first * 1.5 + 1e-12,
            format!("loss went {first} -> {}", fit_rep.final_loss.total),
        );
    }

    let report = rb.finish()?;
    emit(&report, args.out.as_deref())?;
    Ok(report)
}

#[derive(Args, Debug)]
pub struct CutnormArgs {
    #[command(flatten)]
    pub source: GraphSource,

    /// Fitted model snapshot; when given the operand is the residual A - C
    #[arg(long)]
    pub model: Option<PathBuf>,

    /// Enumerate all sign patterns instead of the heuristic (small n only)
    #[arg(long)]
    pub exact: bool,

    /// Heuristic rounding restarts
    #[arg(long, default_value_t = 16)]
    pub restarts: usize,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Normalizer E; defaults to the squared-weight degree of the graph
    #[arg(long)]
    pub normalizer: Option<f64>,

    /// Report destination (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run_cutnorm(args: &CutnormArgs) -> Result<Value> {
    let mut rb = ReportBuilder::new("cutnorm");
    let g = args.source.load()?;
    let e = args.normalizer.unwrap_or_else(|| degree(&g));
    if e <= 0.0 {
        bail!("cut norms need a positive normalizer, got {e}");
    }

    let icg = match &args.model {
        Some(path) => {
            let m = Icg::read_snapshot(path)
                .with_context(|| format!("loading model from {}", path.display()))?;
            if m.n() != g.n() {
                bail!("model covers {} nodes, graph has {}", m.n(), g.n());
            }
            Some(m)
        }
        None => None,
    };

    let started = Instant::now();
    let (estimate, frob) = match (&icg, args.exact) {
        (Some(m), true) => {
            let b = &g.adjacency().to_dense() - &m.synthesize_matrix()?;
            (cut_norm_exact(&b, e)?, frob_matrix(&b))
        }
        (Some(m), false) => {
            let lp = icg_core::evaluate_loss(&g, m, 0.0)?;
            (cut_norm_residual(g.adjacency(), m, e, args.restarts, args.seed)?, lp.graph.sqrt())
        }
        (None, true) => {
            let b = g.adjacency().to_dense();
            (cut_norm_exact(&b, e)?, frob_matrix(&b))
        }
        (None, false) => (
            cut_norm_heuristic(g.adjacency(), e, args.restarts, args.seed)?,
            icg_core::frob_matrix_sparse(g.adjacency()),
        ),
    };
    let norm_secs = started.elapsed().as_secs_f64();

    rb.config(json!({
        "graph": args.source.describe(),
        "model": args.model.as_ref().map(|p| p.display().to_string()),
        "exact": args.exact,
        "restarts": args.restarts,
        "normalizer": e,
    }));
    rb.seeds(json!({ "graph": args.source.graph_seed, "rounding": args.seed }));

    let n = g.n();
    // cut <= (N^2/E) * frob with frob already carrying a 1/N^2 inside the root
    let cs_bound = (n as f64).powi(2) / e * frob;
    rb.metrics(json!({
        "n": n,
        "operand": if icg.is_some() { "residual" } else { "adjacency" },
        "estimate": estimate.summary_json(),
        "frob": frob,
        "cs_bound": cs_bound,
        "lower_bound_only": !args.exact,
    }));
    rb.time("norm_secs", json!(norm_secs));

    rb.check(
        "within_cauchy_schwarz",
        estimate.value <= cs_bound + 1e-9,
        format!("cut {} vs cs bound {cs_bound}", estimate.value),
    );

    let report = rb.finish()?;
    emit(&report, args.out.as_deref())?;
    Ok(report)
}
