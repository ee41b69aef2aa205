//! Graph dataset loading, validation, splitting, and serialization.
//!
//! On-disk formats:
//! - edge file: one `i<TAB>j` pair per line, 0-based node indices;
//! - feature file: dense CSV `node_id,v1,...,vd`, or sparse
//!   `node_id<TAB>feat_idx<TAB>value` triplets (auto-detected);
//! - label file: `node_id<TAB>class_idx`;
//! - optional JSON sidecar with graph metadata (see [`GraphMeta`]).

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::bits::{BitMatrix, PackedBits};
use crate::error::{HogsError, Result};
use crate::rng::{stream_rng, StreamTag};

/// An undirected labeled graph with bounded real node features.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphDataset {
    node_count: usize,
    feature_dim: usize,
    class_count: usize,
    /// Unordered pairs stored as (i, j) with i < j, sorted and deduplicated.
    edges: Vec<(u32, u32)>,
    /// Sorted neighbor lists, derived from `edges` at construction.
    neighbors: Vec<Vec<u32>>,
    features: Array2<f64>,
    labels: Vec<u32>,
    feature_lo: f64,
    feature_hi: f64,
}

impl GraphDataset {
    /// Build and validate a dataset. `range` overrides the feature bounds;
    /// when absent they are inferred as the (min, max) of `features`.
    pub fn new(
        edges: Vec<(u32, u32)>,
        features: Array2<f64>,
        labels: Vec<u32>,
        range: Option<(f64, f64)>,
    ) -> Result<Self> {
        let node_count = features.nrows();
        let feature_dim = features.ncols();
        if node_count == 0 {
            return Err(HogsError::Validation("dataset has no nodes".into()));
        }
        if feature_dim == 0 {
            return Err(HogsError::Validation("dataset has no features".into()));
        }
        if labels.len() != node_count {
            return Err(HogsError::Dimension {
                what: "label vector",
                expected: node_count,
                got: labels.len(),
            });
        }
        let class_count = labels.iter().copied().max().unwrap_or(0) as usize + 1;

        let (feature_lo, feature_hi) = match range {
            Some((lo, hi)) => (lo, hi),
            None => {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for &v in features.iter() {
                    lo = lo.min(v);
                    hi = hi.max(v);
                }
                (lo, hi)
            }
        };
        if !(feature_lo < feature_hi) {
            return Err(HogsError::Validation(format!(
                "feature range [{feature_lo}, {feature_hi}] is degenerate; \
                 pass an explicit range"
            )));
        }
        for &v in features.iter() {
            if !v.is_finite() || v < feature_lo || v > feature_hi {
                return Err(HogsError::Validation(format!(
                    "feature value {v} outside [{feature_lo}, {feature_hi}]"
                )));
            }
        }

        let mut canonical = BTreeSet::new();
        for (a, b) in edges {
            if a == b {
                return Err(HogsError::Validation(format!("self-edge on node {a}")));
            }
            if a as usize >= node_count || b as usize >= node_count {
                return Err(HogsError::Validation(format!(
                    "edge ({a}, {b}) references a node >= {node_count}"
                )));
            }
            canonical.insert((a.min(b), a.max(b)));
        }
        let edges: Vec<(u32, u32)> = canonical.into_iter().collect();

        let mut neighbors = vec![Vec::new(); node_count];
        for &(i, j) in &edges {
            neighbors[i as usize].push(j);
            neighbors[j as usize].push(i);
        }
        for list in &mut neighbors {
            list.sort_unstable();
        }

        Ok(Self {
            node_count,
            feature_dim,
            class_count,
            edges,
            neighbors,
            features,
            labels,
            feature_lo,
            feature_hi,
        })
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn neighbors(&self, i: usize) -> &[u32] {
        &self.neighbors[i]
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn feature_range(&self) -> (f64, f64) {
        (self.feature_lo, self.feature_hi)
    }

    /// The i-th row of the adjacency matrix as a packed bit vector.
    pub fn adjacency_row(&self, i: usize) -> Result<PackedBits> {
        if i >= self.node_count {
            return Err(HogsError::Bounds {
                index: i,
                len: self.node_count,
            });
        }
        let mut row = PackedBits::zeros(self.node_count);
        for &j in &self.neighbors[i] {
            row.set(j as usize, true);
        }
        Ok(row)
    }

    /// Pack features into bits when every value is exactly `lo` or `hi`
    /// (bit = value == hi). Returns None for genuinely real-valued data.
    pub fn packed_binary_features(&self) -> Option<BitMatrix> {
        let mut m = BitMatrix::zeros(self.node_count, self.feature_dim);
        for ((r, c), &v) in self.features.indexed_iter() {
            if v == self.feature_hi {
                m.set(r, c, true);
            } else if v != self.feature_lo {
                return None;
            }
        }
        Some(m)
    }
}

/// Train/validation/test role of every node, for a recorded seed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitAssignment {
    roles: Vec<Role>,
    seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Train,
    Validation,
    Test,
}

impl SplitAssignment {
    pub fn role(&self, node: usize) -> Role {
        self.roles[node]
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn len(&self) -> usize {
        self.roles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.roles.is_empty()
    }

    pub fn count(&self, role: Role) -> usize {
        self.roles.iter().filter(|&&r| r == role).count()
    }

    pub fn nodes_with_role(&self, role: Role) -> impl Iterator<Item = usize> + '_ {
        self.roles
            .iter()
            .enumerate()
            .filter(move |(_, &r)| r == role)
            .map(|(i, _)| i)
    }

    pub fn mask(&self, role: Role) -> Vec<bool> {
        self.roles.iter().map(|&r| r == role).collect()
    }
}

/// Randomly assign every node to train/validation/test.
///
/// Validation and test counts are `round(n * ratio)`; the remainder goes to
/// train. Deterministic for a fixed seed.
pub fn split_nodes(ds: &GraphDataset, ratios: (f64, f64, f64), seed: u64) -> Result<SplitAssignment> {
    let (rt, rv, rs) = ratios;
    if rt <= 0.0 || rv <= 0.0 || rs <= 0.0 {
        return Err(HogsError::Config(format!(
            "split ratios must be positive, got {ratios:?}"
        )));
    }
    if ((rt + rv + rs) - 1.0).abs() > 1e-9 {
        return Err(HogsError::Config(format!(
            "split ratios must sum to 1, got {ratios:?}"
        )));
    }
    let n = ds.node_count();
    let n_val = (n as f64 * rv).round() as usize;
    let n_test = (n as f64 * rs).round() as usize;
    if n_val + n_test >= n {
        return Err(HogsError::Config(format!(
            "split ratios {ratios:?} leave no training nodes for n={n}"
        )));
    }

    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = stream_rng(seed, 0, StreamTag::Split);
    // Fisher-Yates, explicit so the assignment is frozen across rand versions.
    for i in (1..n).rev() {
        let j = (rand::Rng::random::<u64>(&mut rng) % (i as u64 + 1)) as usize;
        order.swap(i, j);
    }

    let mut roles = vec![Role::Train; n];
    for &node in order.iter().skip(n - n_val - n_test).take(n_val) {
        roles[node] = Role::Validation;
    }
    for &node in order.iter().skip(n - n_test) {
        roles[node] = Role::Test;
    }
    Ok(SplitAssignment { roles, seed })
}

/// JSON metadata sidecar written next to serialized graphs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphMeta {
    pub n: usize,
    pub d: usize,
    pub c: usize,
    pub epsilon: Option<f64>,
    pub delta: Option<f64>,
    pub tau: Option<f64>,
    pub l: Option<usize>,
    pub seed: Option<u64>,
}

impl GraphMeta {
    pub fn for_dataset(ds: &GraphDataset) -> Self {
        Self {
            n: ds.node_count(),
            d: ds.feature_dim(),
            c: ds.class_count(),
            epsilon: None,
            delta: None,
            tau: None,
            l: None,
            seed: None,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let file = File::create(path)?;
        serde_json::to_writer_pretty(BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        Ok(serde_json::from_reader(BufReader::new(file))?)
    }
}

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> HogsError {
    HogsError::Parse {
        path: path.display().to_string(),
        line,
        msg: msg.into(),
    }
}

fn read_lines(path: &Path) -> Result<impl Iterator<Item = std::io::Result<String>>> {
    Ok(BufReader::new(File::open(path)?).lines())
}

/// Load a dataset from the three text files, inferring n, d, c and the
/// feature range from content.
pub fn load_dataset(feature_path: &Path, edge_path: &Path, label_path: &Path) -> Result<GraphDataset> {
    load_dataset_with_range(feature_path, edge_path, label_path, None)
}

/// [`load_dataset`] with an explicit feature range override.
pub fn load_dataset_with_range(
    feature_path: &Path,
    edge_path: &Path,
    label_path: &Path,
    range: Option<(f64, f64)>,
) -> Result<GraphDataset> {
    let labels = read_labels(label_path)?;
    let n = labels.len();
    let features = read_features(feature_path, n)?;
    let edges = read_edges(edge_path, n)?;
    GraphDataset::new(edges, features, labels, range)
}

fn read_labels(path: &Path) -> Result<Vec<u32>> {
    let mut entries: Vec<Option<u32>> = Vec::new();
    let mut seen = 0usize;
    for (lineno, line) in read_lines(path)?.enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let node: usize = parts
            .next()
            .unwrap()
            .trim()
            .parse()
            .map_err(|e| parse_err(path, lineno, format!("bad node id: {e}")))?;
        let class: u32 = parts
            .next()
            .ok_or_else(|| parse_err(path, lineno, "expected node_id<TAB>class_idx"))?
            .trim()
            .parse()
            .map_err(|e| parse_err(path, lineno, format!("bad class index: {e}")))?;
        if parts.next().is_some() {
            return Err(parse_err(path, lineno, "trailing fields in label row"));
        }
        if node >= entries.len() {
            entries.resize(node + 1, None);
        }
        if entries[node].is_some() {
            return Err(HogsError::Validation(format!(
                "duplicate label for node {node}"
            )));
        }
        entries[node] = Some(class);
        seen += 1;
    }
    if seen == 0 {
        return Err(HogsError::Validation(format!(
            "label file {} is empty",
            path.display()
        )));
    }
    entries
        .iter()
        .enumerate()
        .map(|(i, v)| {
            v.ok_or_else(|| HogsError::Validation(format!("node {i} has no label")))
        })
        .collect()
}

fn read_edges(path: &Path, n: usize) -> Result<Vec<(u32, u32)>> {
    let mut edges = Vec::new();
    for (lineno, line) in read_lines(path)?.enumerate() {
        let lineno = lineno + 1;
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split('\t');
        let a: u32 = parts
            .next()
            .unwrap()
            .trim()
            .parse()
            .map_err(|e| parse_err(path, lineno, format!("bad node id: {e}")))?;
        let b: u32 = parts
            .next()
            .ok_or_else(|| parse_err(path, lineno, "expected i<TAB>j"))?
            .trim()
            .parse()
            .map_err(|e| parse_err(path, lineno, format!("bad node id: {e}")))?;
        if parts.next().is_some() {
            return Err(parse_err(path, lineno, "trailing fields in edge row"));
        }
        if a as usize >= n || b as usize >= n {
            return Err(HogsError::Validation(format!(
                "{}:{lineno}: edge ({a}, {b}) references a node >= {n}",
                path.display()
            )));
        }
        edges.push((a, b));
    }
    Ok(edges)
}

fn read_features(path: &Path, n: usize) -> Result<Array2<f64>> {
    let mut lines = Vec::new();
    for (lineno, line) in read_lines(path)?.enumerate() {
        let line = line?;
        if !line.trim().is_empty() {
            lines.push((lineno + 1, line));
        }
    }
    if lines.is_empty() {
        return Err(HogsError::Validation(format!(
            "feature file {} is empty",
            path.display()
        )));
    }
    // Sparse triplet rows are tab-separated with exactly three fields;
    // dense rows are comma-separated.
    let first = &lines[0].1;
    let sparse = first.contains('\t') && first.split('\t').count() == 3;
    if sparse {
        read_features_sparse(path, n, &lines)
    } else {
        read_features_dense(path, n, &lines)
    }
}

fn read_features_sparse(path: &Path, n: usize, lines: &[(usize, String)]) -> Result<Array2<f64>> {
    let mut triplets: Vec<(usize, usize, f64)> = Vec::with_capacity(lines.len());
    let mut max_col = 0usize;
    for (lineno, line) in lines {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(
                path,
                *lineno,
                "expected node_id<TAB>feat_idx<TAB>value",
            ));
        }
        let node: usize = fields[0]
            .trim()
            .parse()
            .map_err(|e| parse_err(path, *lineno, format!("bad node id: {e}")))?;
        let col: usize = fields[1]
            .trim()
            .parse()
            .map_err(|e| parse_err(path, *lineno, format!("bad feature index: {e}")))?;
        let value: f64 = fields[2]
            .trim()
            .parse()
            .map_err(|e| parse_err(path, *lineno, format!("bad value: {e}")))?;
        if !value.is_finite() {
            return Err(parse_err(path, *lineno, "non-finite feature value"));
        }
        if node >= n {
            return Err(HogsError::Validation(format!(
                "{}:{lineno}: feature row references node {node} >= {n}",
                path.display()
            )));
        }
        max_col = max_col.max(col);
        triplets.push((node, col, value));
    }
    let d = max_col + 1;
    let mut m = Array2::zeros((n, d));
    let mut filled = std::collections::HashSet::new();
    for (node, col, value) in triplets {
        if !filled.insert((node, col)) {
            return Err(HogsError::Validation(format!(
                "duplicate feature entry for node {node}, feature {col}"
            )));
        }
        m[[node, col]] = value;
    }
    Ok(m)
}

fn read_features_dense(path: &Path, n: usize, lines: &[(usize, String)]) -> Result<Array2<f64>> {
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; n];
    let mut d: Option<usize> = None;
    for (lineno, line) in lines {
        let mut fields = line.split(',');
        let node: usize = fields
            .next()
            .unwrap()
            .trim()
            .parse()
            .map_err(|e| parse_err(path, *lineno, format!("bad node id: {e}")))?;
        let values: Vec<f64> = fields
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(path, *lineno, format!("bad value: {e}")))?;
        if values.is_empty() {
            return Err(parse_err(path, *lineno, "dense row has no values"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(path, *lineno, "non-finite feature value"));
        }
        match d {
            None => d = Some(values.len()),
            Some(expect) if expect != values.len() => {
                return Err(parse_err(
                    path,
                    *lineno,
                    format!("row has {} values, expected {expect}", values.len()),
                ))
            }
            _ => {}
        }
        if node >= n {
            return Err(HogsError::Validation(format!(
                "{}:{lineno}: feature row references node {node} >= {n}",
                path.display()
            )));
        }
        if rows[node].is_some() {
            return Err(HogsError::Validation(format!(
                "duplicate feature row for node {node}"
            )));
        }
        rows[node] = Some(values);
    }
    let d = d.unwrap();
    let mut m = Array2::zeros((n, d));
    for (i, row) in rows.into_iter().enumerate() {
        let row = row.ok_or_else(|| {
            HogsError::Validation(format!("node {i} has no feature row"))
        })?;
        for (j, v) in row.into_iter().enumerate() {
            m[[i, j]] = v;
        }
    }
    Ok(m)
}

/// How to serialize the feature matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureFormat {
    /// Pick sparse triplets for sparse matrices when lossless, else dense.
    Auto,
    Dense,
    /// Errors when triplets cannot reproduce the matrix (zero not in range,
    /// or the last feature column is entirely zero so d would shrink).
    SparseTriplets,
}

/// Serialize a dataset back to the three text formats.
pub fn save_dataset(
    ds: &GraphDataset,
    feature_path: &Path,
    edge_path: &Path,
    label_path: &Path,
    format: FeatureFormat,
) -> Result<()> {
    let mut edges = BufWriter::new(File::create(edge_path)?);
    for &(i, j) in ds.edges() {
        writeln!(edges, "{i}\t{j}")?;
    }
    edges.flush()?;

    let mut labels = BufWriter::new(File::create(label_path)?);
    for (i, &y) in ds.labels().iter().enumerate() {
        writeln!(labels, "{i}\t{y}")?;
    }
    labels.flush()?;

    let nonzero = ds.features().iter().filter(|v| **v != 0.0).count();
    let (lo, hi) = ds.feature_range();
    let last_col_used = ds
        .features()
        .column(ds.feature_dim() - 1)
        .iter()
        .any(|v| *v != 0.0);
    let sparse_ok = lo <= 0.0 && 0.0 <= hi && last_col_used;
    let use_sparse = match format {
        FeatureFormat::Dense => false,
        FeatureFormat::SparseTriplets => {
            if !sparse_ok {
                return Err(HogsError::Validation(
                    "sparse triplet serialization would not round-trip this matrix".into(),
                ));
            }
            true
        }
        FeatureFormat::Auto => {
            sparse_ok && nonzero * 4 < ds.node_count() * ds.feature_dim()
        }
    };

    let mut features = BufWriter::new(File::create(feature_path)?);
    if use_sparse {
        for ((i, j), &v) in ds.features().indexed_iter() {
            if v != 0.0 {
                writeln!(features, "{i}\t{j}\t{v}")?;
            }
        }
    } else {
        for (i, row) in ds.features().rows().into_iter().enumerate() {
            write!(features, "{i}")?;
            for v in row.iter() {
                write!(features, ",{v}")?;
            }
            writeln!(features)?;
        }
    }
    features.flush()?;
    Ok(())
}
