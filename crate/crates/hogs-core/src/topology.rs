//! Curator-side topology reconstruction.
//!
//! For every unordered pair the curator combines a homophily prior (cosine
//! similarity of the noisy feature bits) with the likelihood of the two
//! observed adjacency bits under randomized response, yielding a posterior
//! link probability. Pairs at or above the threshold `tau` become edges of
//! the synthetic graph; pairs at or above `min(0.5, tau)` are retained for
//! feature reconstruction.
//!
//! The pair scan is O(n^2 d) and is dominated by the prior computation, so
//! priors are produced through a blocked Gram kernel over the packed feature
//! bits rather than isolated per-pair dot products; the full n x n posterior
//! matrix is never materialized.

use std::io::{Read, Write};

use crate::collection::CollectionRound;
use crate::error::{HogsError, Result};
use crate::mechanisms::RrParams;

/// Priors are clamped into `[PRIOR_CLAMP, 1 - PRIOR_CLAMP]`: binary-vector
/// cosines can be exactly 0 or 1, which would let the prior override the
/// adjacency evidence entirely and make Bayes' rule degenerate.
pub const PRIOR_CLAMP: f64 = 1e-9;

/// Default number of rows per Gram block.
pub const DEFAULT_BLOCK_ROWS: usize = 256;

/// Cosine similarity of two noisy feature bit vectors, clamped into
/// `[1e-9, 1 - 1e-9]`. All-zero vectors fall to the clamp floor.
pub fn cosine_prior(xi: &crate::bits::PackedBits, xj: &crate::bits::PackedBits) -> Result<f64> {
    if xi.len() != xj.len() {
        return Err(HogsError::Dimension {
            what: "cosine prior operands",
            expected: xi.len(),
            got: xj.len(),
        });
    }
    let ni = xi.count_ones();
    let nj = xj.count_ones();
    if ni == 0 || nj == 0 {
        return Ok(PRIOR_CLAMP);
    }
    let dot = xi.and_popcount(xj) as f64;
    let cos = dot / ((ni as f64).sqrt() * (nj as f64).sqrt());
    Ok(clamp_prior(cos))
}

#[inline]
fn clamp_prior(s: f64) -> f64 {
    s.clamp(PRIOR_CLAMP, 1.0 - PRIOR_CLAMP)
}

/// Likelihoods of observing the bit pair `(a_ij, a_ji)` given that the true
/// link exists (`l`) or does not (`l_prime`).
#[inline]
pub fn pair_likelihoods(obs: (bool, bool), p1: f64) -> (f64, f64) {
    debug_assert!(p1 > 0.0 && p1 <= 0.5);
    let q = 1.0 - p1;
    match obs {
        (false, false) => (p1 * p1, q * q),
        (true, true) => (q * q, p1 * p1),
        _ => (p1 * q, p1 * q),
    }
}

/// Posterior link probability `l*s / (l*s + l'*(1-s))`.
pub fn link_posterior(prior: f64, l: f64, l_prime: f64) -> Result<f64> {
    if !(prior > 0.0 && prior < 1.0) {
        return Err(HogsError::Numeric(format!(
            "prior must lie strictly inside (0, 1), got {prior}"
        )));
    }
    let num = l * prior;
    let den = num + l_prime * (1.0 - prior);
    if den <= 0.0 || !den.is_finite() {
        return Err(HogsError::Numeric(format!(
            "degenerate posterior denominator {den} (l={l}, l'={l_prime})"
        )));
    }
    Ok(num / den)
}

/// One retained pair: the prior that fed Bayes' rule (absent after a disk
/// round-trip, which stores posteriors only) and the posterior itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosteriorEntry {
    pub i: u32,
    pub j: u32,
    pub prior: Option<f64>,
    pub posterior: f64,
}

/// Sparse set of pair posteriors at or above `min(0.5, tau)`.
///
/// Absent pairs are semantically `posterior < storage floor`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkPosteriorSet {
    n: usize,
    tau: f64,
    storage_floor: f64,
    /// Sorted by (i, j), i < j.
    entries: Vec<PosteriorEntry>,
}

impl LinkPosteriorSet {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn storage_floor(&self) -> f64 {
        self.storage_floor
    }

    pub fn entries(&self) -> &[PosteriorEntry] {
        &self.entries
    }

    pub fn get(&self, i: u32, j: u32) -> Option<&PosteriorEntry> {
        let (a, b) = (i.min(j), i.max(j));
        self.entries
            .binary_search_by_key(&(a, b), |e| (e.i, e.j))
            .ok()
            .map(|idx| &self.entries[idx])
    }

    /// Serialize as a binary header `{magic "HGLP", version u16, tau f64,
    /// storage_floor f64, count u64}` followed by `{u32 i, u32 j,
    /// f64 posterior}` triplets, little-endian.
    pub fn write(&self, w: &mut impl Write) -> Result<()> {
        w.write_all(b"HGLP")?;
        w.write_all(&1u16.to_le_bytes())?;
        w.write_all(&(self.n as u64).to_le_bytes())?;
        w.write_all(&self.tau.to_le_bytes())?;
        w.write_all(&self.storage_floor.to_le_bytes())?;
        w.write_all(&(self.entries.len() as u64).to_le_bytes())?;
        for e in &self.entries {
            w.write_all(&e.i.to_le_bytes())?;
            w.write_all(&e.j.to_le_bytes())?;
            w.write_all(&e.posterior.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read(r: &mut impl Read) -> Result<Self> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != b"HGLP" {
            return Err(HogsError::Protocol("bad magic in posterior file".into()));
        }
        let mut u16buf = [0u8; 2];
        r.read_exact(&mut u16buf)?;
        if u16::from_le_bytes(u16buf) != 1 {
            return Err(HogsError::Protocol("unsupported posterior file version".into()));
        }
        let mut u64buf = [0u8; 8];
        r.read_exact(&mut u64buf)?;
        let n = u64::from_le_bytes(u64buf) as usize;
        r.read_exact(&mut u64buf)?;
        let tau = f64::from_le_bytes(u64buf);
        r.read_exact(&mut u64buf)?;
        let storage_floor = f64::from_le_bytes(u64buf);
        r.read_exact(&mut u64buf)?;
        let count = u64::from_le_bytes(u64buf) as usize;
        let mut entries = Vec::with_capacity(count);
        let mut u32buf = [0u8; 4];
        for _ in 0..count {
            r.read_exact(&mut u32buf)?;
            let i = u32::from_le_bytes(u32buf);
            r.read_exact(&mut u32buf)?;
            let j = u32::from_le_bytes(u32buf);
            r.read_exact(&mut u64buf)?;
            let posterior = f64::from_le_bytes(u64buf);
            entries.push(PosteriorEntry {
                i,
                j,
                prior: None,
                posterior,
            });
        }
        Ok(Self {
            n,
            tau,
            storage_floor,
            entries,
        })
    }
}

/// The reconstructed edge set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SyntheticTopology {
    /// Sorted unordered pairs, i < j, no self-edges.
    edges: Vec<(u32, u32)>,
}

impl SyntheticTopology {
    pub fn from_edges(mut edges: Vec<(u32, u32)>) -> Result<Self> {
        for e in &mut edges {
            if e.0 == e.1 {
                return Err(HogsError::Validation(format!("self-edge on node {}", e.0)));
            }
            *e = (e.0.min(e.1), e.0.max(e.1));
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(Self { edges })
    }

    pub fn edges(&self) -> &[(u32, u32)] {
        &self.edges
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Write as the edge-list text format (`i<TAB>j` per line).
    pub fn write_edge_list(&self, w: &mut impl Write) -> Result<()> {
        for &(i, j) in &self.edges {
            writeln!(w, "{i}\t{j}")?;
        }
        Ok(())
    }
}

/// Reconstruct the synthetic topology with the default Gram block size.
pub fn reconstruct_topology(
    round: &CollectionRound,
    tau: f64,
) -> Result<(SyntheticTopology, LinkPosteriorSet)> {
    reconstruct_topology_blocked(round, tau, DEFAULT_BLOCK_ROWS)
}

/// Reconstruct with an explicit `block_rows` knob.
pub fn reconstruct_topology_blocked(
    round: &CollectionRound,
    tau: f64,
    block_rows: usize,
) -> Result<(SyntheticTopology, LinkPosteriorSet)> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(HogsError::Config(format!("tau must lie in [0, 1], got {tau}")));
    }
    if block_rows == 0 {
        return Err(HogsError::Config("block_rows must be positive".into()));
    }
    let n = round.n();
    let feats = round.feature_matrix();
    let adj = round.adjacency_matrix();
    let p1 = RrParams::from_epsilon(round.budget().epsilon_adj)?.flip_prob();
    let storage_floor = tau.min(0.5);

    // Row norms; zero-norm rows are flagged so their priors clamp low. The
    // prior below divides by the norm product with the same expression as
    // `cosine_prior`, keeping blocked and scalar paths bit-identical.
    let norms: Vec<f64> = (0..n)
        .map(|i| (feats.row_count_ones(i) as f64).sqrt())
        .collect();

    // The three possible likelihood pairs, keyed by observed bit sum.
    let q = 1.0 - p1;
    let lik = [(p1 * p1, q * q), (p1 * q, p1 * q), (q * q, p1 * p1)];

    let mut edges = Vec::new();
    let mut entries = Vec::new();
    let mut gram = vec![0u32; block_rows * n];

    let mut block_start = 0usize;
    while block_start < n {
        let block_end = (block_start + block_rows).min(n);

        // Gram block: dots between every block row i and every j > i. The
        // j-outer loop keeps row j hot against the whole block.
        for j in (block_start + 1)..n {
            let i_hi = block_end.min(j);
            for i in block_start..i_hi {
                let dot = feats.row_dot(i, &feats, j);
                gram[(i - block_start) * n + j] = dot;
            }
        }

        for i in block_start..block_end {
            let row = &gram[(i - block_start) * n..(i - block_start + 1) * n];
            for j in (i + 1)..n {
                let prior = if norms[i] == 0.0 || norms[j] == 0.0 {
                    PRIOR_CLAMP
                } else {
                    clamp_prior(row[j] as f64 / (norms[i] * norms[j]))
                };
                let obs_sum = adj.get(i, j) as usize + adj.get(j, i) as usize;
                let (l, l_prime) = lik[obs_sum];
                let num = l * prior;
                let posterior = num / (num + l_prime * (1.0 - prior));
                if posterior >= storage_floor {
                    entries.push(PosteriorEntry {
                        i: i as u32,
                        j: j as u32,
                        prior: Some(prior),
                        posterior,
                    });
                    if posterior >= tau {
                        edges.push((i as u32, j as u32));
                    }
                }
            }
        }
        block_start = block_end;
    }

    Ok((
        SyntheticTopology { edges },
        LinkPosteriorSet {
            n,
            tau,
            storage_floor,
            entries,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::PackedBits;
    use crate::collection::run_collection;
    use crate::dataset::GraphDataset;
    use crate::mechanisms::split_budget;
    use proptest::prelude::*;

    #[test]
    fn cosine_prior_values() {
        let a = PackedBits::from_bools(&[true, false, true]);
        assert_eq!(cosine_prior(&a, &a).unwrap(), 1.0 - 1e-9);

        let x = PackedBits::from_bools(&[true, false]);
        let y = PackedBits::from_bools(&[false, true]);
        assert_eq!(cosine_prior(&x, &y).unwrap(), 1e-9);

        let u = PackedBits::from_bools(&[true, true, false]);
        let v = PackedBits::from_bools(&[true, false, false]);
        let got = cosine_prior(&u, &v).unwrap();
        assert!((got - 1.0 / 2.0f64.sqrt()).abs() < 1e-12);

        let zero = PackedBits::zeros(3);
        assert_eq!(cosine_prior(&zero, &a).unwrap(), 1e-9);

        let short = PackedBits::zeros(2);
        assert!(cosine_prior(&a, &short).is_err());
    }

    #[test]
    fn likelihood_table() {
        let (l, lp) = pair_likelihoods((true, true), 0.25);
        assert_eq!(l, 0.5625);
        assert_eq!(lp, 0.0625);

        for p in [0.1, 0.25, 0.4] {
            let (l, lp) = pair_likelihoods((false, true), p);
            assert_eq!(l, lp);
            assert_eq!(l, p * (1.0 - p));
            let sym = pair_likelihoods((true, false), p);
            assert_eq!((l, lp), sym);
        }

        // Maximal noise carries no information at all.
        let (l, lp) = pair_likelihoods((false, false), 0.5);
        assert_eq!(l, 0.25);
        assert_eq!(lp, 0.25);
    }

    #[test]
    fn posterior_worked_value() {
        // prior 1/2 and observation (1,1) under p1 = 1/4.
        let (l, lp) = pair_likelihoods((true, true), 0.25);
        assert_eq!(link_posterior(0.5, l, lp).unwrap(), 0.9);
    }

    #[test]
    fn posterior_fixed_point_and_monotonicity() {
        // Uninformative evidence leaves the prior unchanged.
        for prior in [0.1, 0.5, 0.9] {
            assert!((link_posterior(prior, 0.3, 0.3).unwrap() - prior).abs() < 1e-15);
        }
        // Strictly increasing in the prior for fixed observation.
        let (l, lp) = pair_likelihoods((true, true), 0.25);
        let mut last = 0.0;
        for k in 1..20 {
            let prior = k as f64 / 20.0;
            let p = link_posterior(prior, l, lp).unwrap();
            assert!(p > last);
            last = p;
        }
        // Observation ordering for p1 < 0.5, fixed prior.
        let prior = 0.3;
        let obs = |o| {
            let (l, lp) = pair_likelihoods(o, 0.2);
            link_posterior(prior, l, lp).unwrap()
        };
        assert!(obs((true, true)) >= obs((false, true)));
        assert_eq!(obs((false, true)), obs((true, false)));
        assert!(obs((false, true)) >= obs((false, false)));
        // Prior at the clamp ceiling can only move up on (1,1).
        let hi = 1.0 - 1e-9;
        assert!(link_posterior(hi, l, lp).unwrap() >= hi);
    }

    #[test]
    fn posterior_rejects_degenerate_inputs() {
        assert!(link_posterior(0.0, 0.5, 0.5).is_err());
        assert!(link_posterior(1.0, 0.5, 0.5).is_err());
        assert!(link_posterior(0.5, 0.0, 0.0).is_err());
    }

    fn planted(n: usize, d: usize, seed: u64) -> GraphDataset {
        crate::synthetic::planted_partition(
            &crate::synthetic::PlantedConfig {
                nodes: n,
                feature_dim: d,
                classes: 2,
                class_weights: vec![],
                edges: n,
                intra_class_edge_fraction: 0.9,
                words_per_node: d / 2,
                class_word_fraction: 0.8,
                class_vocab: d / 2,
                class_vocab_stride: d / 2,
                uninformative_fraction: 0.0,
            },
            seed,
        )
        .unwrap()
    }

    #[test]
    fn no_noise_limit_recovers_exact_edges() {
        let ds = planted(24, 16, 3);
        let budget = split_budget(128.0, 0.5).unwrap();
        let round = run_collection(&ds, budget, 5).unwrap();
        let (topo, posteriors) = reconstruct_topology(&round, 0.5).unwrap();
        assert_eq!(topo.edges(), ds.edges());
        // Retained set at floor 0.5 is exactly the true edges too.
        assert_eq!(posteriors.entries().len(), ds.edges().len());
    }

    #[test]
    fn tau_zero_keeps_every_pair() {
        let ds = planted(10, 8, 1);
        let budget = split_budget(2.0, 0.5).unwrap();
        let round = run_collection(&ds, budget, 9).unwrap();
        let (topo, posteriors) = reconstruct_topology(&round, 0.0).unwrap();
        assert_eq!(topo.edge_count(), 10 * 9 / 2);
        assert_eq!(posteriors.entries().len(), 10 * 9 / 2);
        assert_eq!(posteriors.storage_floor(), 0.0);
    }

    /// Reference double loop over scalar operations, for small graphs.
    fn naive_reconstruct(
        round: &crate::collection::CollectionRound,
        tau: f64,
    ) -> (Vec<(u32, u32)>, Vec<(u32, u32, f64)>) {
        let n = round.n();
        let p1 = RrParams::from_epsilon(round.budget().epsilon_adj)
            .unwrap()
            .flip_prob();
        let mut edges = Vec::new();
        let mut retained = Vec::new();
        for i in 0..n {
            for j in (i + 1)..n {
                let prior = cosine_prior(
                    &round.reports()[i].noisy_features,
                    &round.reports()[j].noisy_features,
                )
                .unwrap();
                let obs = (
                    round.reports()[i].noisy_adjacency.get(j),
                    round.reports()[j].noisy_adjacency.get(i),
                );
                let (l, lp) = pair_likelihoods(obs, p1);
                let post = link_posterior(prior, l, lp).unwrap();
                if post >= tau.min(0.5) {
                    retained.push((i as u32, j as u32, post));
                }
                if post >= tau {
                    edges.push((i as u32, j as u32));
                }
            }
        }
        (edges, retained)
    }

    #[test]
    fn blocked_scan_matches_naive_double_loop() {
        for seed in 0..30u64 {
            let ds = planted(6, 4, seed);
            let budget = split_budget(2.0 * 3.0f64.ln(), 0.5).unwrap(); // eps_a = ln 3
            let round = run_collection(&ds, budget, seed).unwrap();
            for tau in [0.3, 0.5, 0.8] {
                let (topo, posts) = reconstruct_topology_blocked(&round, tau, 2).unwrap();
                let (edges, retained) = naive_reconstruct(&round, tau);
                assert_eq!(topo.edges(), edges.as_slice(), "seed {seed} tau {tau}");
                let got: Vec<(u32, u32, f64)> = posts
                    .entries()
                    .iter()
                    .map(|e| (e.i, e.j, e.posterior))
                    .collect();
                assert_eq!(got, retained, "seed {seed} tau {tau}");
            }
        }
    }

    #[test]
    fn posterior_set_roundtrip() {
        let ds = planted(12, 8, 2);
        let budget = split_budget(3.0, 0.5).unwrap();
        let round = run_collection(&ds, budget, 13).unwrap();
        let (_, posteriors) = reconstruct_topology(&round, 0.7).unwrap();
        let mut buf = Vec::new();
        posteriors.write(&mut buf).unwrap();
        let back = LinkPosteriorSet::read(&mut buf.as_slice()).unwrap();
        assert_eq!(back.n(), posteriors.n());
        assert_eq!(back.tau(), posteriors.tau());
        assert_eq!(back.storage_floor(), posteriors.storage_floor());
        assert_eq!(back.entries().len(), posteriors.entries().len());
        for (a, b) in back.entries().iter().zip(posteriors.entries()) {
            assert_eq!((a.i, a.j, a.posterior), (b.i, b.j, b.posterior));
            assert_eq!(a.prior, None);
        }
    }

    #[test]
    fn calibration_on_planted_graphs() {
        // With homophilous features, true edges should score higher
        // posteriors than non-edges on average, for every eps_a >= 1.
        for eps_a in [1.0f64, 2.0, 4.0, 8.0] {
            let mut wins = 0;
            let seeds = 20;
            for seed in 0..seeds {
                let ds = planted(30, 24, 100 + seed);
                let budget = split_budget(2.0 * eps_a, 0.5).unwrap();
                let round = run_collection(&ds, budget, 200 + seed).unwrap();
                let (_, posts) = reconstruct_topology(&round, 0.0).unwrap();
                let edge_set: std::collections::HashSet<(u32, u32)> =
                    ds.edges().iter().copied().collect();
                let (mut s_true, mut c_true, mut s_false, mut c_false) = (0.0, 0, 0.0, 0);
                for e in posts.entries() {
                    if edge_set.contains(&(e.i, e.j)) {
                        s_true += e.posterior;
                        c_true += 1;
                    } else {
                        s_false += e.posterior;
                        c_false += 1;
                    }
                }
                if s_true / c_true as f64 > s_false / c_false as f64 {
                    wins += 1;
                }
            }
            assert!(
                wins >= seeds - 1,
                "eps_a={eps_a}: true edges outscored non-edges in only {wins}/{seeds} seeds"
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn posterior_stays_in_unit_interval(
            prior in 1e-9f64..=1.0 - 1e-9,
            p1 in 1e-6f64..=0.5,
            a in any::<bool>(),
            b in any::<bool>(),
        ) {
            let (l, lp) = pair_likelihoods((a, b), p1);
            let p = link_posterior(prior, l, lp).unwrap();
            prop_assert!((0.0..=1.0).contains(&p));
        }
    }
}
