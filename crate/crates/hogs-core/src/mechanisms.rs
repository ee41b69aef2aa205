//! Bit-level perturbation primitives and the privacy budget split.
//!
//! Two mechanisms cover everything the clients transmit: randomized response
//! for adjacency bits and the 1-bit mechanism for bounded real features. Both
//! release a single bit per input, which makes their worst-case likelihood
//! ratios exactly computable; `max_likelihood_ratio` checks the e^epsilon
//! bound without sampling.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{HogsError, Result};

/// Smallest flip probability we ever report. 1/(e^eps+1) underflows to zero
/// for eps beyond ~745; a subnormal floor keeps likelihood tables finite
/// while being unobservable in any simulated draw.
const FLIP_PROB_FLOOR: f64 = 1e-300;

/// How a total budget `epsilon` is divided between adjacency and feature
/// perturbation: `epsilon_adj = (1 - delta) * epsilon`, the rest to features.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BudgetSplit {
    pub epsilon_total: f64,
    pub delta: f64,
    pub epsilon_adj: f64,
    pub epsilon_feat: f64,
}

impl BudgetSplit {
    /// The mechanism that receives zero budget at a boundary delta, if any.
    pub fn degenerate_mechanism(&self) -> Option<Mechanism> {
        if self.epsilon_feat == 0.0 {
            Some(Mechanism::OneBit)
        } else if self.epsilon_adj == 0.0 {
            Some(Mechanism::Rr)
        } else {
            None
        }
    }
}

/// Divide `epsilon` between the two mechanisms.
///
/// Boundary deltas (0 or 1) are allowed for grid sweeps but leave one
/// mechanism emitting uniform noise; that case is logged.
pub fn split_budget(epsilon: f64, delta: f64) -> Result<BudgetSplit> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(HogsError::Config(format!(
            "epsilon must be positive and finite, got {epsilon}"
        )));
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(HogsError::Config(format!(
            "delta must lie in [0, 1], got {delta}"
        )));
    }
    let epsilon_adj = (1.0 - delta) * epsilon;
    // Complement against the total so both shares sum back exactly.
    let epsilon_feat = epsilon - epsilon_adj;
    let split = BudgetSplit {
        epsilon_total: epsilon,
        delta,
        epsilon_adj,
        epsilon_feat,
    };
    if let Some(m) = split.degenerate_mechanism() {
        log::warn!(
            "budget split delta={delta} leaves {m:?} with zero budget; its output is uniform noise"
        );
    }
    Ok(split)
}

/// Randomized response over a single bit: flip with probability
/// `1 / (e^epsilon + 1)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RrParams {
    flip_prob: f64,
}

impl RrParams {
    pub fn from_epsilon(epsilon: f64) -> Result<Self> {
        if epsilon < 0.0 || epsilon.is_nan() {
            return Err(HogsError::Config(format!(
                "randomized response requires epsilon >= 0, got {epsilon}"
            )));
        }
        let flip_prob = (1.0 / (epsilon.exp() + 1.0)).max(FLIP_PROB_FLOOR);
        Ok(Self { flip_prob })
    }

    /// Construct from a raw flip probability in (0, 0.5].
    pub fn from_flip_prob(flip_prob: f64) -> Result<Self> {
        if !(flip_prob > 0.0 && flip_prob <= 0.5) {
            return Err(HogsError::Config(format!(
                "flip probability must lie in (0, 0.5], got {flip_prob}"
            )));
        }
        Ok(Self { flip_prob })
    }

    pub fn flip_prob(&self) -> f64 {
        self.flip_prob
    }
}

/// The 1-bit mechanism for a real input in `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OneBitParams {
    pub epsilon: f64,
    pub lo: f64,
    pub hi: f64,
}

impl OneBitParams {
    pub fn new(epsilon: f64, lo: f64, hi: f64) -> Result<Self> {
        if epsilon < 0.0 || epsilon.is_nan() {
            return Err(HogsError::Config(format!(
                "1-bit mechanism requires epsilon >= 0, got {epsilon}"
            )));
        }
        if !(lo < hi) {
            return Err(HogsError::Config(format!(
                "feature range must satisfy lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self { epsilon, lo, hi })
    }

    /// Probability of emitting 1 for input `x`:
    /// `1/(e^eps+1) + (x-lo)/(hi-lo) * (e^eps-1)/(e^eps+1)`.
    pub fn prob_one(&self, x: f64) -> Result<f64> {
        if !(self.lo..=self.hi).contains(&x) {
            return Err(HogsError::Validation(format!(
                "1-bit input {x} outside [{}, {}]",
                self.lo, self.hi
            )));
        }
        let e = self.epsilon.exp();
        let base = 1.0 / (e + 1.0);
        let slope = if e.is_infinite() {
            1.0
        } else {
            (e - 1.0) / (e + 1.0)
        };
        Ok(base + (x - self.lo) / (self.hi - self.lo) * slope)
    }
}

#[inline]
fn bernoulli(p: f64, rng: &mut ChaCha8Rng) -> bool {
    rng.random::<f64>() < p
}

/// Perturb one bit with randomized response.
#[inline]
pub fn rr_perturb_bit(bit: bool, params: RrParams, rng: &mut ChaCha8Rng) -> bool {
    if bernoulli(params.flip_prob, rng) {
        !bit
    } else {
        bit
    }
}

/// Perturb one bounded real into a single bit with the 1-bit mechanism.
pub fn one_bit_perturb(x: f64, params: OneBitParams, rng: &mut ChaCha8Rng) -> Result<bool> {
    let p = params.prob_one(x)?;
    Ok(bernoulli(p, rng))
}

/// Which perturbation primitive a statement refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mechanism {
    Rr,
    OneBit,
}

/// Worst-case likelihood ratio of a mechanism over single-bit-adjacent
/// inputs and binary outputs.
///
/// Computed by enumerating the extreme inputs and both outputs, not by
/// returning `e^epsilon`; the privacy bound is that the result equals
/// `e^epsilon`, and tests assert it.
pub fn max_likelihood_ratio(mechanism: Mechanism, epsilon: f64) -> Result<f64> {
    let out_probs: Vec<f64> = match mechanism {
        Mechanism::Rr => {
            let p = RrParams::from_epsilon(epsilon)?.flip_prob();
            // Pr[output = 1 | input], for input 0 and 1.
            vec![p, 1.0 - p]
        }
        Mechanism::OneBit => {
            // Adjacent feature vectors differ in one coordinate; the extreme
            // single-coordinate pair is lo vs hi.
            let params = OneBitParams::new(epsilon, 0.0, 1.0)?;
            vec![params.prob_one(0.0)?, params.prob_one(1.0)?]
        }
    };
    let mut worst: f64 = 1.0;
    for &pa in &out_probs {
        for &pb in &out_probs {
            // output = 1
            if pb > 0.0 {
                worst = worst.max(pa / pb);
            }
            // output = 0
            if 1.0 - pb > 0.0 {
                worst = worst.max((1.0 - pa) / (1.0 - pb));
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream_rng, StreamTag};

    fn rng(seed: u64) -> ChaCha8Rng {
        stream_rng(seed, 0, StreamTag::Adjacency)
    }

    #[test]
    fn split_budget_examples() {
        let b = split_budget(4.0, 0.5).unwrap();
        assert_eq!(b.epsilon_adj, 2.0);
        assert_eq!(b.epsilon_feat, 2.0);
        assert_eq!(b.degenerate_mechanism(), None);

        let b = split_budget(8.0, 0.3).unwrap();
        assert!((b.epsilon_adj - 5.6).abs() < 1e-12);
        assert!((b.epsilon_feat - 2.4).abs() < 1e-12);

        let b = split_budget(4.0, 0.0).unwrap();
        assert_eq!(b.epsilon_adj, 4.0);
        assert_eq!(b.epsilon_feat, 0.0);
        assert_eq!(b.degenerate_mechanism(), Some(Mechanism::OneBit));
        // The starved mechanism outputs uniform noise.
        let p = OneBitParams::new(b.epsilon_feat, 0.0, 1.0).unwrap();
        assert_eq!(p.prob_one(0.0).unwrap(), 0.5);
        assert_eq!(p.prob_one(1.0).unwrap(), 0.5);
    }

    #[test]
    fn split_budget_shares_sum_exactly() {
        for &eps in &[0.5, 1.0, 3.0, 4.0, 8.0] {
            for &delta in &[0.0, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0] {
                let b = split_budget(eps, delta).unwrap();
                assert_eq!(b.epsilon_adj + b.epsilon_feat, eps);
                assert!((b.epsilon_adj - (1.0 - delta) * eps).abs() <= f64::EPSILON * eps);
                assert!((b.epsilon_feat - delta * eps).abs() <= f64::EPSILON * eps);
            }
        }
    }

    #[test]
    fn split_budget_rejects_bad_inputs() {
        assert!(split_budget(0.0, 0.5).is_err());
        assert!(split_budget(-1.0, 0.5).is_err());
        assert!(split_budget(4.0, -0.1).is_err());
        assert!(split_budget(4.0, 1.1).is_err());
    }

    #[test]
    fn rr_no_noise_limit_is_identity() {
        // Large epsilon drives the flip probability to (effectively) zero.
        let params = RrParams::from_epsilon(64.0).unwrap();
        let mut r = rng(1);
        for i in 0..1000 {
            let bit = i % 2 == 0;
            assert_eq!(rr_perturb_bit(bit, params, &mut r), bit);
        }
    }

    #[test]
    fn rr_zero_epsilon_is_uniform() {
        let params = RrParams::from_epsilon(0.0).unwrap();
        assert_eq!(params.flip_prob(), 0.5);
        let mut r = rng(2);
        let ones = (0..100_000)
            .filter(|_| rr_perturb_bit(false, params, &mut r))
            .count() as f64;
        let sigma = (100_000.0f64 * 0.25).sqrt();
        assert!((ones - 50_000.0).abs() < 4.0 * sigma);
    }

    #[test]
    fn rr_flip_rate_at_ln3() {
        // p1 = 1/(e^{ln 3} + 1) = 1/4; check the empirical rate at 4 sigma.
        let params = RrParams::from_epsilon(3.0f64.ln()).unwrap();
        assert!((params.flip_prob() - 0.25).abs() < 1e-15);
        let n = 200_000u64;
        let mut r = rng(3);
        let ones = (0..n)
            .filter(|_| rr_perturb_bit(false, params, &mut r))
            .count() as f64;
        let p = 0.25;
        let sigma = (n as f64 * p * (1.0 - p)).sqrt();
        assert!((ones - n as f64 * p).abs() < 4.0 * sigma);
    }

    #[test]
    fn one_bit_extremes_match_closed_form() {
        let params = OneBitParams::new(2.0, 0.0, 1.0).unwrap();
        let e = 2.0f64.exp();
        assert!((params.prob_one(1.0).unwrap() - e / (e + 1.0)).abs() < 1e-15);
        assert!((params.prob_one(0.0).unwrap() - 1.0 / (e + 1.0)).abs() < 1e-15);
        assert!((params.prob_one(0.5).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn one_bit_respects_shifted_range() {
        // The (x - lo) normalization keeps probabilities in [0, 1] when lo > 0.
        let params = OneBitParams::new(1.0, 2.0, 6.0).unwrap();
        let e = 1.0f64.exp();
        assert!((params.prob_one(6.0).unwrap() - e / (e + 1.0)).abs() < 1e-15);
        assert!((params.prob_one(2.0).unwrap() - 1.0 / (e + 1.0)).abs() < 1e-15);
        for x in [2.0, 3.0, 4.5, 6.0] {
            let p = params.prob_one(x).unwrap();
            assert!((0.0..=1.0).contains(&p));
        }
        assert!(params.prob_one(1.9).is_err());
        assert!(params.prob_one(6.1).is_err());
    }

    #[test]
    fn one_bit_on_binary_input_equals_rr() {
        // On {0,1} inputs with range [0,1] the 1-bit mechanism degenerates to
        // randomized response with the same epsilon.
        let eps = 1.7;
        let ob = OneBitParams::new(eps, 0.0, 1.0).unwrap();
        let rr = RrParams::from_epsilon(eps).unwrap();
        assert!((ob.prob_one(0.0).unwrap() - rr.flip_prob()).abs() < 1e-15);
        assert!((ob.prob_one(1.0).unwrap() - (1.0 - rr.flip_prob())).abs() < 1e-15);
    }

    #[test]
    fn likelihood_ratio_matches_exp_epsilon() {
        for &eps in &[0.5, 1.0, 2.0, 4.0, 8.0] {
            for &m in &[Mechanism::Rr, Mechanism::OneBit] {
                let ratio = max_likelihood_ratio(m, eps).unwrap();
                let rel = (ratio - eps.exp()).abs() / eps.exp();
                assert!(rel <= 1e-12, "mechanism {m:?} eps {eps}: ratio {ratio}");
            }
        }
        // rr at ln 3: (1 - 1/4) / (1/4) = 3.
        let r = max_likelihood_ratio(Mechanism::Rr, 3.0f64.ln()).unwrap();
        assert!((r - 3.0).abs() < 1e-12);
        // Indistinguishability limit.
        let r = max_likelihood_ratio(Mechanism::OneBit, 1e-9).unwrap();
        assert!((r - 1.0).abs() < 1e-8);
    }

    #[test]
    fn identical_seed_identical_stream() {
        let params = RrParams::from_epsilon(1.0).unwrap();
        let run = |seed| -> Vec<bool> {
            let mut r = rng(seed);
            (0..64).map(|_| rr_perturb_bit(false, params, &mut r)).collect()
        };
        assert_eq!(run(9), run(9));
        assert_ne!(run(9), run(10));
    }
}
