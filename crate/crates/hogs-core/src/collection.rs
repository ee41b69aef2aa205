//! Simulated decentralized collection round.
//!
//! Every client perturbs its own adjacency row (randomized response) and
//! feature vector (1-bit mechanism) using private random streams keyed by
//! `(master_seed, node_id)`, then hands the curator a [`NoisyReport`]. The
//! in-process round and the serialized report stream carry the same data, so
//! clients and curator can also run as separate processes.

use std::io::{Read, Write};

use rand_chacha::ChaCha8Rng;

use crate::bits::{BitMatrix, PackedBits};
use crate::dataset::GraphDataset;
use crate::error::{HogsError, Result};
use crate::mechanisms::{
    one_bit_perturb, rr_perturb_bit, BudgetSplit, OneBitParams, RrParams,
};
use crate::rng::{stream_rng, StreamTag};

/// What a single client holds privately before perturbation.
#[derive(Debug, Clone)]
pub struct PrivateNodeState {
    pub node_id: u32,
    pub adjacency: PackedBits,
    pub features: Vec<f64>,
    /// Public feature domain `[lo, hi]` shared by all clients.
    pub feature_range: (f64, f64),
}

impl PrivateNodeState {
    pub fn new(
        node_id: u32,
        adjacency: PackedBits,
        features: Vec<f64>,
        feature_range: (f64, f64),
    ) -> Result<Self> {
        if (node_id as usize) < adjacency.len() && adjacency.get(node_id as usize) {
            return Err(HogsError::Validation(format!(
                "adjacency row of node {node_id} has a self-loop bit"
            )));
        }
        let (lo, hi) = feature_range;
        if let Some(v) = features.iter().find(|v| !(lo..=hi).contains(v)) {
            return Err(HogsError::Validation(format!(
                "feature value {v} outside [{lo}, {hi}]"
            )));
        }
        Ok(Self {
            node_id,
            adjacency,
            features,
            feature_range,
        })
    }

    pub fn from_dataset(ds: &GraphDataset, node_id: u32) -> Result<Self> {
        let adjacency = ds.adjacency_row(node_id as usize)?;
        let features = ds.features().row(node_id as usize).to_vec();
        Self::new(node_id, adjacency, features, ds.feature_range())
    }
}

/// The private random source of one client: independent streams for the
/// adjacency and feature mechanisms.
pub struct ClientRng {
    adjacency: ChaCha8Rng,
    features: ChaCha8Rng,
}

impl ClientRng {
    pub fn for_node(master_seed: u64, node_id: u32) -> Self {
        Self {
            adjacency: stream_rng(master_seed, node_id as u64, StreamTag::Adjacency),
            features: stream_rng(master_seed, node_id as u64, StreamTag::Features),
        }
    }

    pub fn adjacency_stream(&mut self) -> &mut ChaCha8Rng {
        &mut self.adjacency
    }

    pub fn feature_stream(&mut self) -> &mut ChaCha8Rng {
        &mut self.features
    }
}

/// The pair of perturbed bit vectors a client transmits.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyReport {
    pub node_id: u32,
    pub noisy_adjacency: PackedBits,
    pub noisy_features: PackedBits,
    pub budget: BudgetSplit,
}

/// Perturb one client's state. Every adjacency bit (including the diagonal)
/// goes through randomized response; every feature entry through the 1-bit
/// mechanism.
pub fn perturb_node(
    state: &PrivateNodeState,
    budget: BudgetSplit,
    rng: &mut ClientRng,
) -> Result<NoisyReport> {
    let rr = RrParams::from_epsilon(budget.epsilon_adj)?;
    let (lo, hi) = state.feature_range;
    let one_bit = OneBitParams::new(budget.epsilon_feat, lo, hi)?;

    let n = state.adjacency.len();
    let mut noisy_adjacency = PackedBits::zeros(n);
    for j in 0..n {
        noisy_adjacency.set(j, rr_perturb_bit(state.adjacency.get(j), rr, &mut rng.adjacency));
    }

    let mut noisy_features = PackedBits::zeros(state.features.len());
    for (k, &x) in state.features.iter().enumerate() {
        noisy_features.set(k, one_bit_perturb(x, one_bit, &mut rng.features)?);
    }

    Ok(NoisyReport {
        node_id: state.node_id,
        noisy_adjacency,
        noisy_features,
        budget,
    })
}

/// One complete round of reports, one per node, under a common budget.
#[derive(Debug, Clone, PartialEq)]
pub struct CollectionRound {
    n: usize,
    d: usize,
    reports: Vec<NoisyReport>,
    master_seed: u64,
    budget: BudgetSplit,
}

impl CollectionRound {
    /// Validate and assemble reports into a round. Reports may arrive in any
    /// order; they are keyed by node id.
    pub fn assemble(
        mut reports: Vec<NoisyReport>,
        budget: BudgetSplit,
        master_seed: u64,
        n: usize,
        d: usize,
    ) -> Result<Self> {
        if reports.len() != n {
            return Err(HogsError::Protocol(format!(
                "expected {n} reports, got {}",
                reports.len()
            )));
        }
        reports.sort_by_key(|r| r.node_id);
        for (i, r) in reports.iter().enumerate() {
            if r.node_id as usize != i {
                return Err(HogsError::Protocol(format!(
                    "missing or duplicate report for node {i}"
                )));
            }
            if r.noisy_adjacency.len() != n {
                return Err(HogsError::Dimension {
                    what: "noisy adjacency",
                    expected: n,
                    got: r.noisy_adjacency.len(),
                });
            }
            if r.noisy_features.len() != d {
                return Err(HogsError::Dimension {
                    what: "noisy features",
                    expected: d,
                    got: r.noisy_features.len(),
                });
            }
            if r.budget != budget {
                return Err(HogsError::Protocol(format!(
                    "report {i} was produced under a different budget"
                )));
            }
        }
        Ok(Self {
            n,
            d,
            reports,
            master_seed,
            budget,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn budget(&self) -> BudgetSplit {
        self.budget
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn reports(&self) -> &[NoisyReport] {
        &self.reports
    }

    /// The assembled noisy adjacency matrix (row i = report i).
    pub fn adjacency_matrix(&self) -> BitMatrix {
        let rows: Vec<PackedBits> = self
            .reports
            .iter()
            .map(|r| r.noisy_adjacency.clone())
            .collect();
        BitMatrix::from_rows(&rows).expect("validated at assembly")
    }

    /// The assembled noisy feature matrix.
    pub fn feature_matrix(&self) -> BitMatrix {
        let rows: Vec<PackedBits> = self
            .reports
            .iter()
            .map(|r| r.noisy_features.clone())
            .collect();
        BitMatrix::from_rows(&rows).expect("validated at assembly")
    }
}

/// Run the whole collection round in-process.
///
/// Each report depends only on `(state_i, budget, master_seed, i)`; clients
/// never observe each other's state or noise stream.
pub fn run_collection(
    ds: &GraphDataset,
    budget: BudgetSplit,
    master_seed: u64,
) -> Result<CollectionRound> {
    let n = ds.node_count();
    let mut reports = Vec::with_capacity(n);
    for node_id in 0..n as u32 {
        let state = PrivateNodeState::from_dataset(ds, node_id)?;
        let mut rng = ClientRng::for_node(master_seed, node_id);
        reports.push(perturb_node(&state, budget, &mut rng)?);
    }
    CollectionRound::assemble(reports, budget, master_seed, n, ds.feature_dim())
}

// --- report stream serialization ---------------------------------------

const MAGIC: &[u8; 4] = b"HOGS";
const VERSION: u16 = 1;

fn write_u32(w: &mut impl Write, v: u32) -> Result<()> {
    Ok(w.write_all(&v.to_le_bytes())?)
}

fn read_exact<const N: usize>(r: &mut impl Read) -> std::io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

/// Write a round as a binary report stream:
/// header `{magic "HOGS", version u16, epsilon f64, delta f64, master_seed u64}`
/// followed by one length-prefixed record per node
/// `{u32 node_id, u32 n, u32 d, packed adjacency bits, packed feature bits}`,
/// all little-endian, bits packed LSB-first into `ceil(len/8)` bytes.
pub fn write_report_stream(round: &CollectionRound, w: &mut impl Write) -> Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&round.budget.epsilon_total.to_le_bytes())?;
    w.write_all(&round.budget.delta.to_le_bytes())?;
    w.write_all(&round.master_seed.to_le_bytes())?;
    for report in &round.reports {
        let adj = report.noisy_adjacency.to_bytes();
        let feat = report.noisy_features.to_bytes();
        let len = 12 + adj.len() + feat.len();
        write_u32(w, len as u32)?;
        write_u32(w, report.node_id)?;
        write_u32(w, round.n as u32)?;
        write_u32(w, round.d as u32)?;
        w.write_all(&adj)?;
        w.write_all(&feat)?;
    }
    Ok(())
}

/// Read a report stream back into a validated round.
pub fn read_report_stream(r: &mut impl Read) -> Result<CollectionRound> {
    let magic = read_exact::<4>(r)?;
    if &magic != MAGIC {
        return Err(HogsError::Protocol("bad magic in report stream".into()));
    }
    let version = u16::from_le_bytes(read_exact::<2>(r)?);
    if version != VERSION {
        return Err(HogsError::Protocol(format!(
            "unsupported report stream version {version}"
        )));
    }
    let epsilon = f64::from_le_bytes(read_exact::<8>(r)?);
    let delta = f64::from_le_bytes(read_exact::<8>(r)?);
    let master_seed = u64::from_le_bytes(read_exact::<8>(r)?);
    let budget = crate::mechanisms::split_budget(epsilon, delta)?;

    let mut reports = Vec::new();
    let mut dims: Option<(usize, usize)> = None;
    loop {
        let mut len_buf = [0u8; 4];
        match r.read_exact(&mut len_buf) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => break,
            Err(e) => return Err(e.into()),
        }
        let len = u32::from_le_bytes(len_buf) as usize;
        if len < 12 {
            return Err(HogsError::Protocol(format!("record length {len} too short")));
        }
        let mut payload = vec![0u8; len];
        r.read_exact(&mut payload)?;
        let node_id = u32::from_le_bytes(payload[0..4].try_into().unwrap());
        let n = u32::from_le_bytes(payload[4..8].try_into().unwrap()) as usize;
        let d = u32::from_le_bytes(payload[8..12].try_into().unwrap()) as usize;
        match dims {
            None => dims = Some((n, d)),
            Some(expect) if expect != (n, d) => {
                return Err(HogsError::Protocol(format!(
                    "record for node {node_id} declares dims ({n}, {d}), expected {expect:?}"
                )))
            }
            _ => {}
        }
        let adj_bytes = n.div_ceil(8);
        let feat_bytes = d.div_ceil(8);
        if len != 12 + adj_bytes + feat_bytes {
            return Err(HogsError::Protocol(format!(
                "record for node {node_id} has length {len}, expected {}",
                12 + adj_bytes + feat_bytes
            )));
        }
        let noisy_adjacency = PackedBits::from_bytes(n, &payload[12..12 + adj_bytes])?;
        let noisy_features = PackedBits::from_bytes(d, &payload[12 + adj_bytes..])?;
        reports.push(NoisyReport {
            node_id,
            noisy_adjacency,
            noisy_features,
            budget,
        });
    }
    let (n, d) = dims.ok_or_else(|| HogsError::Protocol("report stream has no records".into()))?;
    CollectionRound::assemble(reports, budget, master_seed, n, d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mechanisms::split_budget;
    use ndarray::array;

    fn tiny_dataset() -> GraphDataset {
        GraphDataset::new(
            vec![(0, 1), (1, 2)],
            array![[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.0, 0.0]],
            vec![0, 1, 0, 1],
            None,
        )
        .unwrap()
    }

    #[test]
    fn no_noise_limit_reproduces_input() {
        let ds = tiny_dataset();
        // Huge budgets on both mechanisms: report equals input exactly for
        // binary features.
        let budget = split_budget(128.0, 0.5).unwrap();
        let round = run_collection(&ds, budget, 11).unwrap();
        for (i, report) in round.reports().iter().enumerate() {
            let truth = ds.adjacency_row(i).unwrap();
            assert_eq!(report.noisy_adjacency, truth);
            let feats: Vec<bool> = ds.features().row(i).iter().map(|&v| v == 1.0).collect();
            assert_eq!(report.noisy_features, PackedBits::from_bools(&feats));
        }
    }

    #[test]
    fn reports_are_deterministic_per_node() {
        let ds = tiny_dataset();
        let budget = split_budget(1.0, 0.5).unwrap();
        let round = run_collection(&ds, budget, 42).unwrap();

        // Recompute client 2 in isolation; it must match the round's copy.
        let state = PrivateNodeState::from_dataset(&ds, 2).unwrap();
        let mut rng = ClientRng::for_node(42, 2);
        let solo = perturb_node(&state, budget, &mut rng).unwrap();
        assert_eq!(&solo, &round.reports()[2]);

        // Different master seeds decorrelate.
        let other = run_collection(&ds, budget, 43).unwrap();
        assert_ne!(round.reports(), other.reports());
    }

    #[test]
    fn assembly_rejects_broken_rounds() {
        let ds = tiny_dataset();
        let budget = split_budget(1.0, 0.5).unwrap();
        let round = run_collection(&ds, budget, 1).unwrap();

        let mut dup = round.reports().to_vec();
        dup[1] = dup[0].clone();
        assert!(matches!(
            CollectionRound::assemble(dup, budget, 1, 4, 2),
            Err(HogsError::Protocol(_))
        ));

        let mut short = round.reports().to_vec();
        short.pop();
        assert!(CollectionRound::assemble(short, budget, 1, 4, 2).is_err());

        let other_budget = split_budget(2.0, 0.5).unwrap();
        assert!(CollectionRound::assemble(
            round.reports().to_vec(),
            other_budget,
            1,
            4,
            2
        )
        .is_err());
    }

    #[test]
    fn expected_hamming_weight_of_noisy_zero_row() {
        // All-zero adjacency of length 3 under p1 = 1/4: expected weight 0.75.
        let budget = split_budget(2.0 * 3.0f64.ln(), 0.5).unwrap(); // eps_a = ln 3
        let state = PrivateNodeState::new(
            0,
            PackedBits::zeros(3),
            vec![0.0],
            (0.0, 1.0),
        )
        .unwrap();
        let trials = 40_000u32;
        let mut total = 0u64;
        for t in 0..trials {
            let mut rng = ClientRng::for_node(900 + t as u64, 0);
            let rep = perturb_node(&state, budget, &mut rng).unwrap();
            total += rep.noisy_adjacency.count_ones() as u64;
        }
        let mean = total as f64 / trials as f64;
        let p = 0.25;
        let sigma = (3.0 * p * (1.0 - p) / trials as f64).sqrt();
        assert!(
            (mean - 0.75).abs() < 4.0 * sigma,
            "mean weight {mean} too far from 0.75"
        );
    }

    #[test]
    fn noisy_edge_count_matches_expectation() {
        // E[ones(assembled noisy A)] = 2|E|(1-p1) + (n^2 - n - 2|E|) p1,
        // plus n diagonal bits at p1 each (clients perturb the diagonal too).
        let n = 40;
        let mut edges = Vec::new();
        for i in 0..n as u32 {
            edges.push((i, (i + 1) % n as u32));
        }
        let features = ndarray::Array2::from_elem((n, 4), 0.0)
            + ndarray::Array2::from_shape_fn((n, 4), |(i, j)| ((i + j) % 2) as f64);
        let ds = GraphDataset::new(edges, features, vec![0; n], None).unwrap();
        let budget = split_budget(2.0, 0.5).unwrap(); // eps_a = 1
        let p1 = RrParams::from_epsilon(1.0).unwrap().flip_prob();

        let rounds = 30;
        let mut ones = 0u64;
        for seed in 0..rounds {
            let round = run_collection(&ds, budget, seed).unwrap();
            for r in round.reports() {
                ones += r.noisy_adjacency.count_ones() as u64;
            }
        }
        let m = ds.edges().len() as f64;
        let nn = n as f64;
        let offdiag = 2.0 * m * (1.0 - p1) + (nn * nn - nn - 2.0 * m) * p1;
        let expected = (offdiag + nn * p1) * rounds as f64;
        let bits = nn * nn * rounds as f64;
        let sigma = (bits * p1 * (1.0 - p1)).sqrt(); // upper bound on variance
        assert!(
            (ones as f64 - expected).abs() < 4.0 * sigma,
            "noisy ones {ones} vs expected {expected}"
        );
    }

    #[test]
    fn stream_roundtrip() {
        let ds = tiny_dataset();
        let budget = split_budget(1.5, 0.3).unwrap();
        let round = run_collection(&ds, budget, 77).unwrap();
        let mut buf = Vec::new();
        write_report_stream(&round, &mut buf).unwrap();
        let back = read_report_stream(&mut buf.as_slice()).unwrap();
        assert_eq!(round, back);
    }

    #[test]
    fn stream_rejects_corruption() {
        let ds = tiny_dataset();
        let budget = split_budget(1.5, 0.3).unwrap();
        let round = run_collection(&ds, budget, 77).unwrap();
        let mut buf = Vec::new();
        write_report_stream(&round, &mut buf).unwrap();

        let mut bad_magic = buf.clone();
        bad_magic[0] = b'X';
        assert!(read_report_stream(&mut bad_magic.as_slice()).is_err());

        let mut truncated = buf.clone();
        truncated.truncate(buf.len() - 3);
        assert!(read_report_stream(&mut truncated.as_slice()).is_err());

        // Length prefix inconsistent with declared dims.
        let mut bad_len = buf.clone();
        bad_len[30] ^= 0x01; // first record's length field region
        assert!(read_report_stream(&mut bad_len.as_slice()).is_err());
    }
}
