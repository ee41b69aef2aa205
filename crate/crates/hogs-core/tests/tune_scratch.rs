//! Scratch probes for benchmark tuning. Not part of the suite.

use hogs_core::config::{ExperimentConfig, Variant};
use hogs_core::pipeline::run_pipeline_on;
use hogs_core::synthetic::citation_benchmark;
use hogs_core::topology::SyntheticTopology;

#[test]
#[ignore]
fn probe_nonprivate_accuracy() {
    let t0 = std::time::Instant::now();
    let ds = citation_benchmark(0);
    println!("generate: {:?}", t0.elapsed());
    println!(
        "n={} d={} c={} |E|={}",
        ds.node_count(),
        ds.feature_dim(),
        ds.class_count(),
        ds.edges().len()
    );
    let topo = SyntheticTopology::from_edges(ds.edges().to_vec()).unwrap();
    let hom = hogs_core::pipeline::edge_homophily(&topo, ds.labels()).unwrap();
    println!("edge homophily = {hom:.4}");
    let density =
        ds.features().iter().filter(|v| **v != 0.0).count() as f64 / (2708.0 * 1433.0);
    println!("feature density = {density:.5}");

    let mut cfg = ExperimentConfig::default();
    cfg.variant = Variant::Nonprivate;
    cfg.repeats = 3;
    cfg.master_seed = 1;
    let t1 = std::time::Instant::now();
    let report = run_pipeline_on(&cfg, &ds).unwrap();
    println!(
        "nonprivate: mean={:.4} std={:.4} accs={:?} in {:?}",
        report.mean,
        report.std,
        report.accuracies,
        t1.elapsed()
    );
}
