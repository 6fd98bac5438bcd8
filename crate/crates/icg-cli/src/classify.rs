//! nn-train, robustness and ablate-k: node classification on top of a
//! fitted community model.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::{Args, ValueEnum};
use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use icg_core::{
    extend_logits_least_squares, fit_icg, random_split, read_graph_auto, sample_subgraph, sgd_fit,
    train_node_classifier, Activation, Arch, FitConfig, GraphSignal, Icg, InitMethod, LoadOptions,
    NodeSample, OptAlgo, SgdConfig, TrainConfig, TrainMetrics,
};

use crate::common::{mean_std, read_labels, SbmSource};
use crate::report::{emit, write_csv, ReportBuilder};

#[derive(Copy, Clone, Debug, PartialEq, ValueEnum)]
pub enum ArchArg {
    IcgNn,
    IcgNnU,
    Mlp,
}

impl From<ArchArg> for Arch {
    fn from(v: ArchArg) -> Self {
        match v {
            ArchArg::IcgNn => Arch::IcgNn,
            ArchArg::IcgNnU => Arch::IcgNnU,
            ArchArg::Mlp => Arch::Mlp,
        }
    }
}

/// Classifier hyperparameters shared by the classification commands.
#[derive(Args, Debug)]
pub struct NnHyper {
    #[arg(long, default_value_t = 2)]
    pub layers: usize,

    #[arg(long, default_value_t = 32)]
    pub hidden: usize,

    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,

    #[arg(long, default_value_t = 200)]
    pub epochs: usize,

    #[arg(long, default_value_t = 0.0)]
    pub dropout: f64,

    /// Early-stopping patience in epochs (validation accuracy)
    #[arg(long)]
    pub patience: Option<usize>,
}

impl NnHyper {
    fn train_config(
        &self,
        arch: Arch,
        seed: u64,
        masks: &(Vec<usize>, Vec<usize>, Vec<usize>),
    ) -> TrainConfig {
        TrainConfig {
            arch,
            activation: Activation::Relu,
            layers: self.layers,
            hidden: self.hidden,
            lr: self.lr,
            epochs: self.epochs,
            dropout: self.dropout,
            seed,
            train_mask: masks.0.clone(),
            val_mask: masks.1.clone(),
            test_mask: masks.2.clone(),
            patience: self.patience,
        }
    }

    fn describe(&self) -> Value {
        json!({
            "layers": self.layers,
            "hidden": self.hidden,
            "lr": self.lr,
            "epochs": self.epochs,
            "dropout": self.dropout,
            "patience": self.patience,
        })
    }
}

fn parse_split(split: &[f64]) -> Result<(f64, f64)> {
    if split.len() != 2 {
        bail!("--split takes exactly two fractions, train and validation");
    }
    let (a, b) = (split[0], split[1]);
    if !(a > 0.0 && b >= 0.0 && a + b < 1.0) {
        bail!("--split fractions must be positive and sum below 1, got {a} and {b}");
    }
    Ok((a, b))
}

fn metrics_json(m: &TrainMetrics, curves: bool) -> Value {
    let mut v = json!({
        "epochs_run": m.epochs_run,
        "best_epoch": m.best_epoch,
        "final_train_acc": m.final_train_acc,
        "final_val_acc": m.final_val_acc,
        "final_test_acc": m.final_test_acc,
        "val_auc": m.val_auc,
        "test_auc": m.test_auc,
        "n_classes": m.n_classes,
    });
    if curves {
        v["train_acc"] = json!(m.train_acc);
        v["val_acc"] = json!(m.val_acc);
    }
    v
}

#[derive(Args, Debug)]
pub struct NnTrainArgs {
    /// Generate a planted-community instance instead of loading files
    #[arg(long)]
    pub sbm: bool,

    #[command(flatten)]
    pub sbm_src: SbmSource,

    /// Edge list or graph snapshot to load
    #[arg(long, conflicts_with = "sbm")]
    pub graph: Option<PathBuf>,

    /// Feature csv attached to --graph
    #[arg(long, requires = "graph")]
    pub features: Option<PathBuf>,

    /// Node labels, one integer per line
    #[arg(long, requires = "graph")]
    pub labels: Option<PathBuf>,

    /// Fitted model snapshot; fitted inline when omitted
    #[arg(long)]
    pub model: Option<PathBuf>,

    /// Community count for the inline fit
    #[arg(long, default_value_t = 8)]
    pub fit_k: usize,

    #[arg(long, default_value_t = 200)]
    pub fit_epochs: usize,

    #[arg(long, default_value_t = 0.05)]
    pub fit_lr: f64,

    #[arg(long, default_value_t = 0.0)]
    pub fit_lambda: f64,

    #[arg(long, value_enum, default_value = "icg-nn-u")]
    pub arch: ArchArg,

    #[command(flatten)]
    pub nn: NnHyper,

    /// Train and validation fractions; the rest is the test mask
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 0.25])]
    pub split: Vec<f64>,

    #[arg(long, default_value_t = 1)]
    pub seed: u64,

    /// Report destination (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Per-epoch accuracy curves
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

pub fn run_nn_train(args: &NnTrainArgs) -> Result<Value> {
    let mut rb = ReportBuilder::new("nn-train");
    let split = parse_split(&args.split)?;

    let (g, labels, data_cfg) = if args.sbm {
        let (g, labels) = args.sbm_src.generate()?;
        (g, labels, args.sbm_src.describe())
    } else {
        let graph = args
            .graph
            .as_ref()
            .ok_or_else(|| anyhow::anyhow!("either --sbm or --graph is required"))?;
        let labels_path = args
            .labels
            .as_ref()
            .ok_or_else(|| anyhow::anyhow!("--labels is required with --graph"))?;
        let g = read_graph_auto(graph, args.features.as_deref(), &LoadOptions::default())
            .with_context(|| format!("loading graph from {}", graph.display()))?;
        let labels = read_labels(labels_path)?;
        if labels.len() != g.n() {
            bail!("{} labels for {} nodes", labels.len(), g.n());
        }
        let cfg = json!({
            "source": "file",
            "graph": graph.display().to_string(),
            "features": args.features.as_ref().map(|p| p.display().to_string()),
            "labels": labels_path.display().to_string(),
        });
        (g, labels, cfg)
    };
    if g.d() == 0 {
        bail!("node classification needs features; attach --features or --noise-d");
    }

    let arch: Arch = args.arch.into();
    let masks = random_split(g.n(), split, args.seed + 7);

    let mut fit_secs = 0.0;
    let mut fit_loss = None;
    let icg = if arch == Arch::Mlp {
        None
    } else if let Some(path) = &args.model {
        let m = Icg::read_snapshot(path)
            .with_context(|| format!("loading model from {}", path.display()))?;
        if m.n() != g.n() {
            bail!("model covers {} nodes, graph has {}", m.n(), g.n());
        }
        Some(m)
    } else {
        let cfg = FitConfig {
            k: args.fit_k,
            lambda: args.fit_lambda,
            epochs: args.fit_epochs,
            lr: args.fit_lr,
            algo: OptAlgo::Adam,
            init: InitMethod::Eigen,
            seed: args.seed + 31,
            log_every: 0,
        };
        let (m, rep) = fit_icg(&g, &cfg)?;
        fit_secs = rep.init_secs + rep.train_secs;
        fit_loss = Some(rep.final_loss.total);
        Some(m)
    };

    let tc = args.nn.train_config(arch, args.seed, &masks);
    let (_params, tm) = train_node_classifier(&g, icg.as_ref(), &tc, &labels)?;

    rb.config(json!({
        "data": data_cfg,
        "arch": format!("{:?}", args.arch),
        "model": args.model.as_ref().map(|p| p.display().to_string()),
        "fit_k": if icg.is_some() && args.model.is_none() { Some(args.fit_k) } else { None },
        "nn": args.nn.describe(),
        "split": args.split,
    }));
    rb.seeds(json!({
        "graph": if args.sbm { Some(args.sbm_src.graph_seed) } else { None },
        "split": args.seed + 7,
        "fit": args.seed + 31,
        "train": args.seed,
    }));

    let mut metrics = metrics_json(&tm, true);
    metrics["fit_final_loss"] = json!(fit_loss);
    metrics["n"] = json!(g.n());
    metrics["d"] = json!(g.d());
    rb.metrics(metrics);
    rb.time("fit_secs", json!(fit_secs));
    rb.time("train_secs", json!(tm.train_secs));

    let chance = 1.0 / tm.n_classes as f64;
    let train_acc = tm.final_train_acc.unwrap_or(0.0);
    rb.check(
        "fits_training_data_above_chance",
        train_acc >= chance,
        format!("train accuracy {train_acc} vs chance {chance}"),
    );

    if let Some(path) = &args.csv {
        let rows: Vec<Vec<String>> = tm
            .train_acc
            .iter()
            .enumerate()
            .map(|(e, t)| {
                let v = tm.val_acc.get(e).map_or(String::new(), |v| v.to_string());
                vec![e.to_string(), t.to_string(), v]
            })
            .collect();
        write_csv(path, &["epoch", "train_acc", "val_acc"], &rows)?;
    }

    let report = rb.finish()?;
    emit(&report, args.out.as_deref())?;
    Ok(report)
}

#[derive(Args, Debug)]
pub struct RobustnessArgs {
    #[command(flatten)]
    pub sbm: SbmSource,

    #[arg(long, default_value_t = 8)]
    pub k: usize,

    /// Fractions of nodes hidden from the model fit
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0, 0.25, 0.5])]
    pub drop_list: Vec<f64>,

    /// One full pipeline run per seed
    #[arg(long, value_delimiter = ',', default_values_t = vec![1u64, 2, 3])]
    pub seeds: Vec<u64>,

    /// Nodes per subset step of the fit
    #[arg(long, default_value_t = 120)]
    pub sgd_m: usize,

    #[arg(long, default_value_t = 1500)]
    pub sgd_steps: usize,

    #[arg(long, default_value_t = 0.5)]
    pub sgd_lr: f64,

    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,

    #[command(flatten)]
    pub nn: NnHyper,

    #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 0.25])]
    pub split: Vec<f64>,

    /// Report destination (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Per-run accuracy table
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

fn intersect(mask: &[usize], keep: &[bool]) -> Vec<usize> {
    mask.iter().copied().filter(|&i| keep[i]).collect()
}

/// Fits on the retained nodes only, then extends to the full node set: the
/// subset pipeline the robustness claim is about.
fn fit_on_retained(
    g: &GraphSignal,
    k: usize,
    lambda: f64,
    retained: &[usize],
    sgd_m: usize,
    sgd_steps: usize,
    sgd_lr: f64,
    seed: u64,
) -> Result<Icg> {
    let n = g.n();
    let sample = NodeSample { indices: retained.to_vec(), seed };
    let induced = sample_subgraph(g, &sample)?;
    let (sub, _converged) = icg_core::eigen_init(&induced, k, lambda, seed)?;

    // Scatter the subset logits back to full size; unseen rows start at
    // logit 0 and are replaced after the fit.
    let mut logits = Array2::zeros((n, k));
    for (si, &v) in retained.iter().enumerate() {
        logits.row_mut(v).assign(&sub.logits().row(si));
    }
    let start = Icg::new(logits, sub.r().to_owned(), sub.f().to_owned())?;

    let cfg = SgdConfig {
        m: sgd_m.min(retained.len()),
        steps: sgd_steps,
        lr: sgd_lr,
        lambda,
        seed,
        scale_q_grads: true,
        pool: Some(retained.to_vec()),
        log_every: 0,
    };
    let (fitted, _rep) = sgd_fit(g, &cfg, start)?;

    let dropped: Vec<usize> = {
        let mut keep = vec![false; n];
        for &v in retained {
            keep[v] = true;
        }
        (0..n).filter(|&i| !keep[i]).collect()
    };
    if dropped.is_empty() {
        return Ok(fitted);
    }
    Ok(extend_logits_least_squares(g, &fitted, &dropped)?)
}

pub fn run_robustness(args: &RobustnessArgs) -> Result<Value> {
    let mut rb = ReportBuilder::new("robustness");
    let split = parse_split(&args.split)?;
    if args.seeds.is_empty() {
        bail!("--seeds needs at least one seed");
    }
    for &f in &args.drop_list {
        if !(0.0..1.0).contains(&f) {
            bail!("drop fraction {f} leaves nothing to fit; fractions must lie in [0, 1)");
        }
    }

    let (g, labels) = args.sbm.generate()?;
    let n = g.n();

    let mut rows = Vec::new();
    let mut per_drop: Vec<(f64, Vec<f64>, Vec<f64>)> = Vec::new();
    let mut pipeline_secs = 0.0;

    for (di, &drop) in args.drop_list.iter().enumerate() {
        let mut icg_accs = Vec::new();
        let mut mlp_accs = Vec::new();
        for &seed in &args.seeds {
            let t0 = std::time::Instant::now();
            let retained: Vec<usize> = if drop == 0.0 {
                (0..n).collect()
            } else {
                let keep = (((1.0 - drop) * n as f64).round() as usize).max(1);
                let mut order: Vec<usize> = (0..n).collect();
                let mut rng = ChaCha8Rng::seed_from_u64(seed * 7919 + di as u64);
                order.shuffle(&mut rng);
                let mut kept: Vec<usize> = order.into_iter().take(keep).collect();
                kept.sort_unstable();
                kept
            };
            let mut keep_mask = vec![false; n];
            for &v in &retained {
                keep_mask[v] = true;
            }

            let icg = fit_on_retained(
                &g,
                args.k,
                args.lambda,
                &retained,
                args.sgd_m,
                args.sgd_steps,
                args.sgd_lr,
                seed,
            )?;

            let full = random_split(n, split, seed + 7);
            // Training only sees retained nodes; the test mask stays full, so
            // the dropped nodes are judged through the extension.
            let masks = (intersect(&full.0, &keep_mask), intersect(&full.1, &keep_mask), full.2);

            let (_p1, tm_icg) = train_node_classifier(
                &g,
                Some(&icg),
                &args.nn.train_config(Arch::IcgNnU, seed, &masks),
                &labels,
            )?;
            let (_p2, tm_mlp) = train_node_classifier(
                &g,
                None,
                &args.nn.train_config(Arch::Mlp, seed, &masks),
                &labels,
            )?;
            pipeline_secs += t0.elapsed().as_secs_f64();

            let a_icg = tm_icg.final_test_acc.unwrap_or(0.0);
            let a_mlp = tm_mlp.final_test_acc.unwrap_or(0.0);
            icg_accs.push(a_icg);
            mlp_accs.push(a_mlp);
            rows.push(json!({
                "drop": drop,
                "seed": seed,
                "retained": retained.len(),
                "icg_test_acc": a_icg,
                "mlp_test_acc": a_mlp,
            }));
        }
        per_drop.push((drop, icg_accs, mlp_accs));
    }

    rb.config(json!({
        "sbm": args.sbm.describe(),
        "k": args.k,
        "drop_list": args.drop_list,
        "sgd": { "m": args.sgd_m, "steps": args.sgd_steps, "lr": args.sgd_lr },
        "lambda": args.lambda,
        "nn": args.nn.describe(),
        "split": args.split,
    }));
    rb.seeds(json!({ "graph": args.sbm.graph_seed, "runs": args.seeds }));
    rb.metrics(json!({ "n": n, "runs": rows }));

    let agg: Vec<Value> = per_drop
        .iter()
        .map(|(drop, icg_accs, mlp_accs)| {
            let (mi, si) = mean_std(icg_accs);
            let (mm, sm) = mean_std(mlp_accs);
            json!({
                "drop": drop,
                "icg_mean": mi, "icg_std": si,
                "mlp_mean": mm, "mlp_std": sm,
            })
        })
        .collect();
    rb.aggregates(json!({ "per_drop": agg }));
    rb.time("pipeline_secs", json!(pipeline_secs));

    let mean_at = |target: f64| -> Option<f64> {
        per_drop
            .iter()
            .find(|(d, _, _)| (d - target).abs() < 1e-12)
            .map(|(_, accs, _)| mean_std(accs).0)
    };
    if let (Some(base), Some(half)) = (mean_at(0.0), mean_at(0.5)) {
        rb.check(
            "half_drop_stays_within_five_points",
            (base - half).abs() <= 0.05,
            format!("mean accuracy {base} at full fit vs {half} at half drop"),
        );
    }
    for (drop, icg_accs, mlp_accs) in &per_drop {
        let (mi, _) = mean_std(icg_accs);
        let (mm, _) = mean_std(mlp_accs);
        rb.check(
            &format!("beats_structureless_baseline_at_drop_{drop}"),
            mi > mm,
            format!("community model {mi} vs feature-only baseline {mm}"),
        );
    }

    if let Some(path) = &args.csv {
        let rows_csv: Vec<Vec<String>> = rows
            .iter()
            .map(|r| {
                vec![
                    r["drop"].to_string(),
                    r["seed"].to_string(),
                    r["retained"].to_string(),
                    r["icg_test_acc"].to_string(),
                    r["mlp_test_acc"].to_string(),
                ]
            })
            .collect();
        write_csv(path, &["drop", "seed", "retained", "icg_test_acc", "mlp_test_acc"], &rows_csv)?;
    }

    let report = rb.finish()?;
    emit(&report, args.out.as_deref())?;
    Ok(report)
}

#[derive(Args, Debug)]
pub struct AblateKArgs {
    #[command(flatten)]
    pub sbm: SbmSource,

    /// Community counts to sweep
    #[arg(long, value_delimiter = ',', default_values_t = vec![1usize, 2, 4, 8, 16])]
    pub k_list: Vec<usize>,

    /// One full pipeline run per seed
    #[arg(long, value_delimiter = ',', default_values_t = vec![1u64, 2, 3])]
    pub seeds: Vec<u64>,

    #[arg(long, default_value_t = 200)]
    pub fit_epochs: usize,

    #[arg(long, default_value_t = 0.05)]
    pub fit_lr: f64,

    #[arg(long, default_value_t = 0.0)]
    pub lambda: f64,

    #[command(flatten)]
    pub nn: NnHyper,

    #[arg(long, value_delimiter = ',', default_values_t = vec![0.5, 0.25])]
    pub split: Vec<f64>,

    /// Report destination (stdout when omitted)
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Per-run accuracy table
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

pub fn run_ablate_k(args: &AblateKArgs) -> Result<Value> {
    let mut rb = ReportBuilder::new("ablate-k");
    let split = parse_split(&args.split)?;
    if args.k_list.is_empty() {
        bail!("--k-list needs at least one entry");
    }
    if args.seeds.is_empty() {
        bail!("--seeds needs at least one seed");
    }
    let mut k_list = args.k_list.clone();
    k_list.sort_unstable();
    k_list.dedup();

    let (g, labels) = args.sbm.generate()?;

    let mut rows = Vec::new();
    let mut means = Vec::new();
    let mut pipeline_secs = 0.0;
    for &k in &k_list {
        let mut accs = Vec::new();
        for &seed in &args.seeds {
            let t0 = std::time::Instant::now();
            let cfg = FitConfig {
                k,
                lambda: args.lambda,
                epochs: args.fit_epochs,
                lr: args.fit_lr,
                algo: OptAlgo::Adam,
                init: InitMethod::Eigen,
                seed: seed + 31,
                log_every: 0,
            };
            let (icg, _rep) = fit_icg(&g, &cfg)?;
            let masks = random_split(g.n(), split, seed + 7);
            let (_p, tm) = train_node_classifier(
                &g,
                Some(&icg),
                &args.nn.train_config(Arch::IcgNnU, seed, &masks),
                &labels,
            )?;
            pipeline_secs += t0.elapsed().as_secs_f64();
            let acc = tm.final_test_acc.unwrap_or(0.0);
            accs.push(acc);
            rows.push(json!({ "k": k, "seed": seed, "test_acc": acc }));
        }
        let (mean, std) = mean_std(&accs);
        means.push((k, mean, std));
    }

    rb.config(json!({
        "sbm": args.sbm.describe(),
        "k_list": k_list,
        "fit_epochs": args.fit_epochs,
        "fit_lr": args.fit_lr,
        "lambda": args.lambda,
        "nn": args.nn.describe(),
        "split": args.split,
    }));
    rb.seeds(json!({ "graph": args.sbm.graph_seed, "runs": args.seeds }));
    rb.metrics(json!({ "n": g.n(), "runs": rows }));
    rb.aggregates(json!({
        "per_k": means
            .iter()
            .map(|(k, m, s)| json!({ "k": k, "mean_acc": m, "std_acc": s }))
            .collect::<Vec<_>>(),
    }));
    rb.time("pipeline_secs", json!(pipeline_secs));

    if means.len() >= 2 {
        let best = means.iter().map(|&(_, m, _)| m).fold(0.0f64, f64::max);
        if let Some(&(_, k1_mean, _)) = means.iter().find(|&&(k, _, _)| k == 1) {
            rb.check(
                "single_community_clearly_worse",
                best - k1_mean >= 0.10,
                format!("K=1 mean {k1_mean} vs best {best}"),
            );
        }
        let (k_max, last_mean, _) = *means.last().expect("nonempty");
        rb.check(
            "no_collapse_at_largest_k",
            best - last_mean <= 0.03,
            format!("K={k_max} mean {last_mean} vs best {best}"),
        );
    }

    if let Some(path) = &args.csv {
        let rows_csv: Vec<Vec<String>> = rows
            .iter()
            .map(|r| vec![r["k"].to_string(), r["seed"].to_string(), r["test_acc"].to_string()])
            .collect();
        write_csv(path, &["k", "seed", "test_acc"], &rows_csv)?;
    }

    let report = rb.finish()?;
    emit(&report, args.out.as_deref())?;
    Ok(report)
}
