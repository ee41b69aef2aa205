//! Deterministic homophilous graph generator.
//!
//! Produces planted-partition graphs with class-conditional bag-of-words
//! features: nodes draw a fixed number of distinct "words", biased toward a
//! per-class vocabulary, and a fixed share of edges joins same-class nodes.
//! Used by calibration tests and as the bundled citation-style benchmark
//! when no external dataset is mounted.

use std::collections::HashSet;

use ndarray::Array2;
use rand::Rng;

use crate::dataset::GraphDataset;
use crate::error::{HogsError, Result};
use crate::rng::{stream_rng, StreamTag};

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedConfig {
    pub nodes: usize,
    pub feature_dim: usize,
    pub classes: usize,
    /// Relative class sizes; uniform when empty. Length must equal `classes`
    /// otherwise.
    pub class_weights: Vec<f64>,
    pub edges: usize,
    /// Fraction of edges joining same-class endpoints (the planted homophily).
    pub intra_class_edge_fraction: f64,
    /// Distinct active features per node.
    pub words_per_node: usize,
    /// Probability that a word is drawn from the node's class vocabulary
    /// rather than the full vocabulary.
    pub class_word_fraction: f64,
    /// Window size of each class vocabulary.
    pub class_vocab: usize,
    /// Offset between consecutive class windows. Equal to `class_vocab`
    /// gives disjoint vocabularies; smaller values make neighboring classes
    /// share words and become confusable.
    pub class_vocab_stride: usize,
    /// Fraction of nodes that draw every word from the full vocabulary,
    /// carrying no class signal of their own.
    pub uninformative_fraction: f64,
}

impl PlantedConfig {
    fn validate(&self) -> Result<()> {
        if self.nodes < 2 || self.classes == 0 {
            return Err(HogsError::Config("need at least 2 nodes and 1 class".into()));
        }
        if !self.class_weights.is_empty() && self.class_weights.len() != self.classes {
            return Err(HogsError::Config(format!(
                "{} class weights for {} classes",
                self.class_weights.len(),
                self.classes
            )));
        }
        let span = (self.classes - 1) * self.class_vocab_stride + self.class_vocab;
        if self.class_vocab > 0 && span > self.feature_dim {
            return Err(HogsError::Config(
                "class vocabularies exceed the feature dimension".into(),
            ));
        }
        if self.words_per_node == 0 || self.words_per_node >= self.feature_dim {
            return Err(HogsError::Config(
                "words_per_node must lie in [1, feature_dim)".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.intra_class_edge_fraction)
            || !(0.0..=1.0).contains(&self.class_word_fraction)
            || !(0.0..=1.0).contains(&self.uninformative_fraction)
        {
            return Err(HogsError::Config("fractions must lie in [0, 1]".into()));
        }
        let max_edges = self.nodes * (self.nodes - 1) / 2;
        if self.edges > max_edges {
            return Err(HogsError::Config(format!(
                "{} edges requested but only {max_edges} pairs exist",
                self.edges
            )));
        }
        Ok(())
    }
}

fn assign_classes(cfg: &PlantedConfig) -> Vec<u32> {
    let weights: Vec<f64> = if cfg.class_weights.is_empty() {
        vec![1.0; cfg.classes]
    } else {
        cfg.class_weights.clone()
    };
    let total: f64 = weights.iter().sum();
    // Largest-remainder apportionment of nodes to classes.
    let exact: Vec<f64> = weights.iter().map(|w| w / total * cfg.nodes as f64).collect();
    let mut sizes: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut leftover = cfg.nodes - sizes.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..cfg.classes).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .partial_cmp(&(exact[a] - exact[a].floor()))
            .unwrap()
    });
    let mut k = 0usize;
    while leftover > 0 {
        sizes[order[k % cfg.classes]] += 1;
        k += 1;
        leftover -= 1;
    }
    let mut labels = Vec::with_capacity(cfg.nodes);
    for (c, &size) in sizes.iter().enumerate() {
        labels.extend(std::iter::repeat(c as u32).take(size));
    }
    labels
}

/// Generate a planted-partition dataset. Deterministic in `(cfg, seed)`.
pub fn planted_partition(cfg: &PlantedConfig, seed: u64) -> Result<GraphDataset> {
    cfg.validate()?;
    let mut rng = stream_rng(seed, 0, StreamTag::Synthetic);
    let labels = assign_classes(cfg);
    let n = cfg.nodes;
    let d = cfg.feature_dim;

    let mut members: Vec<Vec<u32>> = vec![Vec::new(); cfg.classes];
    for (i, &y) in labels.iter().enumerate() {
        members[y as usize].push(i as u32);
    }

    // Features: words_per_node distinct draws, biased toward the class
    // vocabulary window unless the node is uninformative.
    let mut features = Array2::zeros((n, d));
    for i in 0..n {
        let class = labels[i] as usize;
        let vocab_start = class * cfg.class_vocab_stride;
        let informative = rng.random::<f64>() >= cfg.uninformative_fraction;
        let mut chosen = HashSet::with_capacity(cfg.words_per_node);
        while chosen.len() < cfg.words_per_node {
            let word = if informative
                && cfg.class_vocab > 0
                && rng.random::<f64>() < cfg.class_word_fraction
            {
                vocab_start + rng.random_range(0..cfg.class_vocab)
            } else {
                rng.random_range(0..d)
            };
            chosen.insert(word);
        }
        for word in chosen {
            features[[i, word]] = 1.0;
        }
    }

    // Edges: an exact count of intra-class pairs, the rest cross-class.
    let intra_target =
        (cfg.edges as f64 * cfg.intra_class_edge_fraction).round() as usize;
    let has_pairable_class = members.iter().any(|m| m.len() >= 2);
    if intra_target > 0 && !has_pairable_class {
        return Err(HogsError::Config(
            "intra-class edges requested but every class has fewer than 2 nodes".into(),
        ));
    }
    let mut edge_set: HashSet<(u32, u32)> = HashSet::with_capacity(cfg.edges);
    let mut attempts = 0usize;
    let budget = 1000 * cfg.edges.max(1);
    while edge_set.len() < cfg.edges {
        attempts += 1;
        if attempts > budget {
            return Err(HogsError::Config(
                "edge sampling stalled; the requested graph is too dense".into(),
            ));
        }
        let want_intra = edge_set.len() < intra_target;
        let u = rng.random_range(0..n as u32);
        let class = labels[u as usize] as usize;
        let v = if want_intra {
            let peers = &members[class];
            if peers.len() < 2 {
                continue;
            }
            peers[rng.random_range(0..peers.len())]
        } else {
            let v = rng.random_range(0..n as u32);
            if labels[v as usize] as usize == class {
                continue;
            }
            v
        };
        if u == v {
            continue;
        }
        edge_set.insert((u.min(v), u.max(v)));
    }

    GraphDataset::new(edge_set.into_iter().collect(), features, labels, Some((0.0, 1.0)))
}

/// The bundled citation-style benchmark: 2708 nodes, 1433 binary features,
/// 7 imbalanced classes, 5278 edges at ~0.81 edge homophily, mean degree 3.9.
/// Overlapping class vocabularies and a share of uninformative nodes keep
/// the classification difficulty in the range of real citation networks.
pub fn citation_benchmark(seed: u64) -> GraphDataset {
    let cfg = PlantedConfig {
        nodes: 2708,
        feature_dim: 1433,
        classes: 7,
        class_weights: vec![818.0, 426.0, 418.0, 351.0, 298.0, 217.0, 180.0],
        edges: 5278,
        intra_class_edge_fraction: 0.81,
        words_per_node: 18,
        class_word_fraction: 0.45,
        class_vocab: 600,
        class_vocab_stride: 70,
        uninformative_fraction: 0.25,
    };
    planted_partition(&cfg, seed).expect("benchmark config is valid")
}
