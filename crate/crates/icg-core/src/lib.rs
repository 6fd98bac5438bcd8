//! Intersecting-community graphons: sparse graph handling, cut-norm
//! estimation, model fitting by gradient descent on a dense low-rank
//! parameterization, subsampled training with error guarantees, and
//! community-basis neural networks.

pub mod error;
pub mod fit;
pub mod graph;
pub mod icg;
pub mod io;
pub mod lanczos;
mod linalg;
pub mod nn;
pub mod norms;
pub mod sgd;

pub use error::{Error, Result};
pub use fit::{
    eigen_init, evaluate_grads, evaluate_loss, fit_icg, random_init, FitConfig, FitReport,
    Gradients, InitMethod, LossParts, OptAlgo,
};
pub use graph::{
    degree, gen_erdos_renyi, gen_noise_features, gen_sbm, random_split, sample_subgraph,
    sample_uniform, sample_uniform_from, CsrMatrix, GraphSignal, NodeSample,
};
pub use icg::Icg;
pub use io::{
    graph_from_snapshot_bytes, graph_from_strs, graph_snapshot_bytes, load_graph_signal,
    parse_edge_list, parse_feature_csv, read_graph_auto, read_graph_snapshot, save_edge_list,
    save_feature_csv, write_graph_snapshot, LoadOptions,
};
pub use lanczos::{leading_eigenpairs, Eigenpairs, LanczosConfig};
pub use linalg::loglog_slope;
pub use nn::{
    backward, forward, train_node_classifier, Activation, Arch, Cache, CommunityBasis, NnParams,
    TrainConfig, TrainMetrics,
};
pub use norms::{
    cut_metric_pair, cut_norm_exact, cut_norm_heuristic, cut_norm_residual, cut_norm_signal,
    frob_matrix, frob_matrix_sparse, frob_pair, frob_signal, CutNormEstimate, CutNormMethod,
    CutNormOp, IcgResidualOp, NormWeights,
};
pub use sgd::{
    extend_logits_least_squares, grad_error_study, sgd_fit, subgraph_grads, subgraph_loss,
    GradErrorReport, SgdConfig,
};
