//! End-to-end pipeline: collect -> reconstruct topology -> reconstruct
//! features -> train -> evaluate, with ablation variants, repeated-seed
//! statistics, grid search, and report emission.
//!
//! Seeding: the node split is fixed by the master seed; repeat `r` runs the
//! mechanisms and training under `master_seed + r`. Variants substitute
//! exactly one phase, so for a given repeat the other phases are
//! bit-identical across variants.

use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::bits::PackedBits;
use crate::collection::{
    run_collection, ClientRng, CollectionRound, NoisyReport,
};
use crate::config::{ExperimentConfig, GridSpec, Variant};
use crate::dataset::{load_dataset_with_range, split_nodes, GraphDataset};
use crate::error::{HogsError, Result};
use crate::features::{bits_to_f64, kprop_aggregate, reconstruct_features};
use crate::gcn::{normalize_adjacency, train, GcnModel, TrainMetrics};
use crate::mechanisms::{rr_perturb_bit, split_budget, RrParams};
use crate::topology::{
    reconstruct_topology_blocked, LinkPosteriorSet, SyntheticTopology,
};

/// Summary statistics of a synthetic topology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub edges: u64,
    /// Absent when no eligible edge exists.
    pub homophily: Option<f64>,
    pub mean_degree: f64,
}

/// Cumulative per-phase wall time across all repeats, in milliseconds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimingsMs {
    pub collect: u64,
    pub topology: u64,
    pub features: u64,
    pub train: u64,
}

/// The result of one experiment (all repeats).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub accuracies: Vec<f64>,
    pub mean: f64,
    pub std: f64,
    pub graph_stats: GraphStats,
    pub timings_ms: PhaseTimingsMs,
}

/// Fraction of edges whose endpoints share a label; edges touching nodes
/// without a label entry are excluded. `None` when no edge is eligible.
pub fn edge_homophily(topology: &SyntheticTopology, labels: &[u32]) -> Option<f64> {
    let mut same = 0usize;
    let mut total = 0usize;
    for &(i, j) in topology.edges() {
        let (Some(&yi), Some(&yj)) = (labels.get(i as usize), labels.get(j as usize)) else {
            continue;
        };
        total += 1;
        if yi == yj {
            same += 1;
        }
    }
    (total > 0).then(|| same as f64 / total as f64)
}

fn graph_stats(topology: &SyntheticTopology, labels: &[u32], n: usize) -> GraphStats {
    GraphStats {
        edges: topology.edge_count() as u64,
        homophily: edge_homophily(topology, labels),
        mean_degree: if n == 0 {
            0.0
        } else {
            2.0 * topology.edge_count() as f64 / n as f64
        },
    }
}

/// OR-symmetrize the raw noisy adjacency into an undirected topology,
/// ignoring the diagonal.
pub fn or_symmetrize(round: &CollectionRound) -> SyntheticTopology {
    let adj = round.adjacency_matrix();
    let n = round.n();
    let mut edges = Vec::new();
    for i in 0..n {
        for j in (i + 1)..n {
            if adj.get(i, j) || adj.get(j, i) {
                edges.push((i as u32, j as u32));
            }
        }
    }
    SyntheticTopology::from_edges(edges).expect("no self pairs by construction")
}

/// Run the collection phase for one repeat.
///
/// In public-features mode the whole budget perturbs adjacency bits and the
/// reports carry the raw (binary) features; otherwise the budget is split by
/// delta and both mechanisms run.
pub fn collect_phase(
    cfg: &ExperimentConfig,
    ds: &GraphDataset,
    seed: u64,
) -> Result<CollectionRound> {
    if !cfg.public_features {
        let budget = split_budget(cfg.epsilon, cfg.delta)?;
        return run_collection(ds, budget, seed);
    }
    let budget = split_budget(cfg.epsilon, 0.0)?;
    let bits = ds.packed_binary_features().ok_or_else(|| {
        HogsError::Config(
            "public_features requires binary features (every value at the range bounds)".into(),
        )
    })?;
    let rr = RrParams::from_epsilon(budget.epsilon_adj)?;
    let n = ds.node_count();
    let mut reports = Vec::with_capacity(n);
    for node_id in 0..n as u32 {
        let truth = ds.adjacency_row(node_id as usize)?;
        let mut rng = ClientRng::for_node(seed, node_id);
        let mut noisy = PackedBits::zeros(n);
        for j in 0..n {
            noisy.set(j, rr_perturb_bit(truth.get(j), rr, rng.adjacency_stream()));
        }
        let mut features = PackedBits::zeros(ds.feature_dim());
        for k in 0..ds.feature_dim() {
            features.set(k, bits.get(node_id as usize, k));
        }
        reports.push(NoisyReport {
            node_id,
            noisy_adjacency: noisy,
            noisy_features: features,
            budget,
        });
    }
    CollectionRound::assemble(reports, budget, seed, n, ds.feature_dim())
}

/// Synthetic graph produced from one collection round under a variant.
#[derive(Debug, Clone)]
pub struct SynthesisResult {
    pub topology: SyntheticTopology,
    pub features: Array2<f64>,
    pub posteriors: LinkPosteriorSet,
    pub topology_ms: u64,
    pub features_ms: u64,
}

/// Apply the reconstruction phases of `cfg.variant` to a collection round.
pub fn synthesize_from_round(
    cfg: &ExperimentConfig,
    round: &CollectionRound,
) -> Result<SynthesisResult> {
    if cfg.variant == Variant::Nonprivate {
        return Err(HogsError::Config(
            "the nonprivate variant has no collection round to synthesize from".into(),
        ));
    }
    let t0 = Instant::now();
    let (reconstructed, posteriors) =
        reconstruct_topology_blocked(round, cfg.tau, cfg.block_rows)
            .map_err(|e| e.in_phase("topology"))?;
    let topology = match cfg.variant {
        Variant::NoTr => or_symmetrize(round),
        _ => reconstructed,
    };
    let topology_ms = t0.elapsed().as_millis() as u64;

    let t1 = Instant::now();
    let noisy = round.feature_matrix();
    let features = if cfg.public_features {
        // Features were transmitted in the clear; use them as-is.
        bits_to_f64(&noisy)
    } else {
        match cfg.variant {
            Variant::Hogs | Variant::NoTr => {
                reconstruct_features(&posteriors, &noisy, cfg.l)
                    .map_err(|e| e.in_phase("features"))?
                    .matrix
            }
            Variant::NoFr => bits_to_f64(&noisy),
            Variant::KpropK1 => kprop_aggregate(&topology, &bits_to_f64(&noisy), 1)
                .map_err(|e| e.in_phase("features"))?,
            Variant::KpropK2 => kprop_aggregate(&topology, &bits_to_f64(&noisy), 2)
                .map_err(|e| e.in_phase("features"))?,
            Variant::Nonprivate => unreachable!(),
        }
    };
    let features_ms = t1.elapsed().as_millis() as u64;

    Ok(SynthesisResult {
        topology,
        features,
        posteriors,
        topology_ms,
        features_ms,
    })
}

/// Run the full pipeline on an already-loaded dataset.
pub fn run_pipeline_on(cfg: &ExperimentConfig, ds: &GraphDataset) -> Result<RunReport> {
    run_pipeline_detailed(cfg, ds).map(|(report, _)| report)
}

/// Like [`run_pipeline_on`] but also returns the per-repeat best validation
/// accuracies (used by the grid search).
pub fn run_pipeline_detailed(
    cfg: &ExperimentConfig,
    ds: &GraphDataset,
) -> Result<(RunReport, Vec<f64>)> {
    cfg.validate()?;
    let split = split_nodes(ds, cfg.split_ratios, cfg.master_seed)?;
    let n = ds.node_count();

    let mut timings = PhaseTimingsMs::default();
    let mut accuracies = Vec::with_capacity(cfg.repeats);
    let mut val_accuracies = Vec::with_capacity(cfg.repeats);
    let mut stats: Option<GraphStats> = None;

    for repeat in 0..cfg.repeats {
        let seed = cfg.master_seed.wrapping_add(repeat as u64);
        let (topology, features) = if cfg.variant == Variant::Nonprivate {
            let topology = SyntheticTopology::from_edges(ds.edges().to_vec())?;
            (topology, ds.features().clone())
        } else {
            let t0 = Instant::now();
            let round = collect_phase(cfg, ds, seed).map_err(|e| e.in_phase("collect"))?;
            timings.collect += t0.elapsed().as_millis() as u64;
            let synth = synthesize_from_round(cfg, &round)?;
            timings.topology += synth.topology_ms;
            timings.features += synth.features_ms;
            (synth.topology, synth.features)
        };
        if stats.is_none() {
            stats = Some(graph_stats(&topology, ds.labels(), n));
        }

        let t0 = Instant::now();
        let adj = normalize_adjacency(&topology, n).map_err(|e| e.in_phase("train"))?;
        let mut gnn_cfg = cfg.gnn.clone();
        gnn_cfg.seed = seed;
        let mut model = GcnModel::init(
            adj,
            ds.feature_dim(),
            ds.class_count(),
            gnn_cfg.hidden_dim,
            gnn_cfg.dropout,
            seed,
        );
        let metrics = train(&mut model, &features, ds.labels(), &split, &gnn_cfg)
            .map_err(|e| e.in_phase("train"))?;
        timings.train += t0.elapsed().as_millis() as u64;
        accuracies.push(metrics.test_acc);
        val_accuracies.push(metrics.best_val_acc);
    }

    let (mean, std) = mean_std(&accuracies);
    let report = RunReport {
        config: cfg.clone(),
        accuracies,
        mean,
        std,
        graph_stats: stats.expect("repeats >= 1"),
        timings_ms: timings,
    };
    Ok((report, val_accuracies))
}

/// Load the configured dataset and run the pipeline.
pub fn run_pipeline(cfg: &ExperimentConfig) -> Result<RunReport> {
    let ds = load_dataset_with_range(
        &cfg.feature_path,
        &cfg.edge_path,
        &cfg.label_path,
        cfg.feature_range,
    )
    .map_err(|e| e.in_phase("ingest"))?;
    run_pipeline_on(cfg, &ds)
}

/// Train once on the graph exactly as stored in the configured files
/// (intended for synthetic graph directories as well as raw datasets).
pub fn train_once(cfg: &ExperimentConfig, ds: &GraphDataset) -> Result<TrainMetrics> {
    cfg.gnn.validate()?;
    let split = split_nodes(ds, cfg.split_ratios, cfg.master_seed)?;
    let topology = SyntheticTopology::from_edges(ds.edges().to_vec())?;
    let adj = normalize_adjacency(&topology, ds.node_count())?;
    let mut gnn_cfg = cfg.gnn.clone();
    gnn_cfg.seed = cfg.master_seed;
    let mut model = GcnModel::init(
        adj,
        ds.feature_dim(),
        ds.class_count(),
        gnn_cfg.hidden_dim,
        gnn_cfg.dropout,
        cfg.master_seed,
    );
    train(&mut model, ds.features(), ds.labels(), &split, &gnn_cfg)
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (xs.len() - 1) as f64;
    (mean, var.sqrt())
}

/// One evaluated grid cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub delta: f64,
    pub tau: f64,
    pub l: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub dropout: f64,
    pub mean_val_acc: f64,
    pub val_accs: Vec<f64>,
}

/// Grid search outcome: the winning configuration and the full table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridOutcome {
    pub best: ExperimentConfig,
    pub cells: Vec<GridCell>,
}

/// `a` beats `b`: higher mean validation accuracy, ties broken by smaller
/// delta, then tau, then l, then lexicographically on (lr, weight_decay,
/// dropout).
pub(crate) fn cell_beats(a: &GridCell, b: &GridCell) -> bool {
    if a.mean_val_acc != b.mean_val_acc {
        return a.mean_val_acc > b.mean_val_acc;
    }
    let ka = (a.delta, a.tau, a.l, a.lr, a.weight_decay, a.dropout);
    let kb = (b.delta, b.tau, b.l, b.lr, b.weight_decay, b.dropout);
    ka < kb
}

fn or_single<T: Clone>(list: &[T], base: T) -> Vec<T> {
    if list.is_empty() {
        vec![base]
    } else {
        list.to_vec()
    }
}

/// Sweep the grid, scoring each cell by mean validation accuracy over
/// `repeats_per_cell` runs (default 5).
pub fn grid_search_on(
    base: &ExperimentConfig,
    grid: &GridSpec,
    ds: &GraphDataset,
) -> Result<GridOutcome> {
    let deltas = or_single(&grid.delta, base.delta);
    let taus = or_single(&grid.tau, base.tau);
    let ls = or_single(&grid.l, base.l);
    let lrs = or_single(&grid.lr, base.gnn.learning_rate);
    let wds = or_single(&grid.weight_decay, base.gnn.weight_decay);
    let drops = or_single(&grid.dropout, base.gnn.dropout);
    let per_cell = grid.repeats_per_cell.unwrap_or(5);

    let mut cells = Vec::new();
    for &delta in &deltas {
        for &tau in &taus {
            for &l in &ls {
                for &lr in &lrs {
                    for &weight_decay in &wds {
                        for &dropout in &drops {
                            let mut cfg = base.clone();
                            cfg.delta = delta;
                            cfg.tau = tau;
                            cfg.l = l;
                            cfg.gnn.learning_rate = lr;
                            cfg.gnn.weight_decay = weight_decay;
                            cfg.gnn.dropout = dropout;
                            cfg.repeats = per_cell;
                            let (_, val_accs) = run_pipeline_detailed(&cfg, ds)?;
                            let (mean_val_acc, _) = mean_std(&val_accs);
                            cells.push(GridCell {
                                delta,
                                tau,
                                l,
                                lr,
                                weight_decay,
                                dropout,
                                mean_val_acc,
                                val_accs,
                            });
                        }
                    }
                }
            }
        }
    }

    let winner = cells
        .iter()
        .fold(None::<&GridCell>, |best, c| match best {
            Some(b) if !cell_beats(c, b) => Some(b),
            _ => Some(c),
        })
        .expect("grid is non-empty");
    let mut best = base.clone();
    best.delta = winner.delta;
    best.tau = winner.tau;
    best.l = winner.l;
    best.gnn.learning_rate = winner.lr;
    best.gnn.weight_decay = winner.weight_decay;
    best.gnn.dropout = winner.dropout;
    Ok(GridOutcome { best, cells })
}

/// Load the configured dataset and sweep the grid.
pub fn grid_search(base: &ExperimentConfig, grid: &GridSpec) -> Result<GridOutcome> {
    let ds = load_dataset_with_range(
        &base.feature_path,
        &base.edge_path,
        &base.label_path,
        base.feature_range,
    )
    .map_err(|e| e.in_phase("ingest"))?;
    grid_search_on(base, grid, &ds)
}

/// Plaintext summary table for a report.
pub fn format_report_table(report: &RunReport) -> String {
    let mut out = String::new();
    let c = &report.config;
    out.push_str(&format!(
        "variant={} epsilon={} delta={} tau={} l={} repeats={} seed={}\n",
        c.variant, c.epsilon, c.delta, c.tau, c.l, c.repeats, c.master_seed
    ));
    out.push_str(&format!(
        "test accuracy: mean={:.4} std={:.4}\n",
        report.mean, report.std
    ));
    out.push_str("per-repeat: ");
    for (i, a) in report.accuracies.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        out.push_str(&format!("{a:.4}"));
    }
    out.push('\n');
    let s = &report.graph_stats;
    match s.homophily {
        Some(h) => out.push_str(&format!(
            "graph: edges={} homophily={:.4} mean_degree={:.2}\n",
            s.edges, h, s.mean_degree
        )),
        None => out.push_str(&format!(
            "graph: edges={} homophily=n/a mean_degree={:.2}\n",
            s.edges, s.mean_degree
        )),
    }
    let t = &report.timings_ms;
    out.push_str(&format!(
        "timings_ms: collect={} topology={} features={} train={}\n",
        t.collect, t.topology, t.features, t.train
    ));
    out
}

/// Write the report as JSON and print the plaintext table to stdout.
pub fn emit_report(report: &RunReport, path: &Path) -> Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, report)?;
    w.flush()?;
    print!("{}", format_report_table(report));
    Ok(())
}

/// Read a previously emitted report.
pub fn read_report(path: &Path) -> Result<RunReport> {
    let file = std::fs::File::open(path)?;
    Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
}
