//! Locally private graph collection and homophily-driven synthesis.
//!
//! The pipeline simulates decentralized clients that perturb their adjacency
//! rows (randomized response) and feature vectors (1-bit mechanism) before an
//! untrusted curator reconstructs a synthetic graph from the noisy reports:
//! cosine-similarity priors combined with pairwise adjacency evidence give
//! posterior link probabilities, which drive both edge selection and
//! posterior-weighted feature denoising. A built-in two-layer GCN scores the
//! result on semi-supervised node classification.

pub mod bits;
pub mod collection;
pub mod config;
pub mod dataset;
pub mod error;
pub mod features;
pub mod gcn;
pub mod mechanisms;
pub mod pipeline;
pub mod rng;
pub mod synthetic;
pub mod topology;

pub use bits::{BitMatrix, PackedBits};
pub use collection::{
    perturb_node, read_report_stream, run_collection, write_report_stream, ClientRng,
    CollectionRound, NoisyReport, PrivateNodeState,
};
pub use config::{parse_config_file, ExperimentConfig, GridSpec, Variant};
pub use dataset::{
    load_dataset, load_dataset_with_range, save_dataset, split_nodes, FeatureFormat,
    GraphDataset, GraphMeta, Role, SplitAssignment,
};
pub use error::{HogsError, Result};
pub use features::{
    build_neighbor_index, kprop_aggregate, reconstruct_features, weighted_aggregate,
    PotentialNeighborIndex, ReconstructedFeatures,
};
pub use gcn::{
    accuracy_from_logits, evaluate, normalize_adjacency, train, CsrMatrix, GcnModel,
    TrainConfig, TrainMetrics,
};
pub use mechanisms::{
    max_likelihood_ratio, one_bit_perturb, rr_perturb_bit, split_budget, BudgetSplit,
    Mechanism, OneBitParams, RrParams,
};
pub use pipeline::{
    collect_phase, edge_homophily, emit_report, format_report_table, grid_search,
    grid_search_on, or_symmetrize, read_report, run_pipeline, run_pipeline_detailed,
    run_pipeline_on, synthesize_from_round, train_once, GraphStats, GridCell, GridOutcome,
    PhaseTimingsMs, RunReport, SynthesisResult,
};
pub use rng::{stream_rng, StreamTag};
pub use topology::{
    cosine_prior, link_posterior, pair_likelihoods, reconstruct_topology,
    reconstruct_topology_blocked, LinkPosteriorSet, PosteriorEntry, SyntheticTopology,
};
