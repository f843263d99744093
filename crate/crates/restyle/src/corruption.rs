//! Corruption functions and add/delete-rate machinery.
//!
//! Three noise sub-types (drop, replace, shuffle) compose in that order;
//! each gets its own per-example probability drawn uniformly from
//! [0.2, 0.6] when enabled. Rates between an input/output pair use multiset
//! semantics ignoring order, and the tuning-range sampler wraps each true
//! rate in a uniformly sized, uniformly aligned interval clipped to [0,1].
//! All randomness flows through explicit seeded RNGs.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{RestyleError, Result};
use crate::TokenSeq;

/// Per-sub-type noise probabilities. A probability of zero disables the
/// sub-type entirely (it consumes no randomness).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub p_drop: f64,
    pub p_replace: f64,
    pub p_shuffle: f64,
}

impl NoiseSpec {
    pub const NONE: NoiseSpec = NoiseSpec { p_drop: 0.0, p_replace: 0.0, p_shuffle: 0.0 };
}

/// Which noise sub-types a task samples probabilities for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoiseToggles {
    pub drop: bool,
    pub replace: bool,
    pub shuffle: bool,
}

impl Default for NoiseToggles {
    /// Drop and replace only; shuffle off.
    fn default() -> Self {
        NoiseToggles { drop: true, replace: true, shuffle: false }
    }
}

/// True add/delete rates of an input/output pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateStats {
    pub add_rate: f64,
    pub delete_rate: f64,
}

/// Sampled conditioning intervals around the true rates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuningRanges {
    /// (low, high) for the add rate.
    pub add: (f64, f64),
    /// (low, high) for the delete rate.
    pub delete: (f64, f64),
}

impl TuningRanges {
    pub const ZERO: TuningRanges = TuningRanges { add: (0.0, 0.0), delete: (0.0, 0.0) };

    pub fn new(add: (f64, f64), delete: (f64, f64)) -> Result<TuningRanges> {
        let ranges = TuningRanges { add, delete };
        ranges.validate()?;
        Ok(ranges)
    }

    pub fn validate(&self) -> Result<()> {
        for (lo, hi) in [self.add, self.delete] {
            if !(0.0..=1.0).contains(&lo) || !(0.0..=1.0).contains(&hi) || lo > hi {
                return Err(RestyleError::Config(format!(
                    "range ({lo}, {hi}) must satisfy 0 <= low <= high <= 1"
                )));
            }
        }
        Ok(())
    }

    /// Conditioning vector in the order (add_low, add_high, del_low, del_high).
    pub fn conditioning(&self) -> [f64; 4] {
        [self.add.0, self.add.1, self.delete.0, self.delete.1]
    }
}

/// One independent coin per position; `true` marks the position as selected.
pub fn choose_mask(len: usize, p: f64, rng: &mut ChaCha8Rng) -> Vec<bool> {
    (0..len).map(|_| rng.random_bool(p)).collect()
}

/// Drops each token independently with probability `p`, preserving order.
pub fn drop_noise(s: &[usize], p: f64, rng: &mut ChaCha8Rng) -> TokenSeq {
    if p == 0.0 {
        return s.to_vec();
    }
    let mask = choose_mask(s.len(), p, rng);
    s.iter()
        .zip(&mask)
        .filter(|(_, &dropped)| !dropped)
        .map(|(&tok, _)| tok)
        .collect()
}

/// Replaces position `k` of `s_i` with `s_j[k]` with probability `p`;
/// positions beyond the end of `s_j` are never replaced. Output length
/// always equals the input length.
pub fn replace_noise(s_i: &[usize], s_j: &[usize], p: f64, rng: &mut ChaCha8Rng) -> TokenSeq {
    if p == 0.0 {
        return s_i.to_vec();
    }
    let mask = choose_mask(s_i.len(), p, rng);
    s_i.iter()
        .enumerate()
        .map(|(k, &tok)| if mask[k] && k < s_j.len() { s_j[k] } else { tok })
        .collect()
}

/// Chooses a subset with probability `p` per token and permutes the chosen
/// tokens uniformly among the chosen positions, leaving the rest in place.
pub fn shuffle_noise(s: &[usize], p: f64, rng: &mut ChaCha8Rng) -> TokenSeq {
    if p == 0.0 {
        return s.to_vec();
    }
    let mask = choose_mask(s.len(), p, rng);
    let chosen: Vec<usize> = (0..s.len()).filter(|&i| mask[i]).collect();
    let mut out = s.to_vec();
    let mut values: Vec<usize> = chosen.iter().map(|&i| s[i]).collect();
    values.shuffle(rng);
    for (&pos, &val) in chosen.iter().zip(&values) {
        out[pos] = val;
    }
    out
}

/// Applies drop, then replace (drawing replacements from `s_j`), then
/// shuffle. Sub-types with probability zero are skipped.
pub fn apply_noise(s_i: &[usize], spec: &NoiseSpec, s_j: &[usize], rng: &mut ChaCha8Rng) -> TokenSeq {
    let dropped = drop_noise(s_i, spec.p_drop, rng);
    let replaced = replace_noise(&dropped, s_j, spec.p_replace, rng);
    shuffle_noise(&replaced, spec.p_shuffle, rng)
}

/// Samples one probability per enabled sub-type from Uniform[0.2, 0.6],
/// fresh per example. Disabled sub-types get zero.
pub fn sample_noise_probs(toggles: &NoiseToggles, rng: &mut ChaCha8Rng) -> NoiseSpec {
    let mut draw = |enabled: bool| if enabled { rng.random_range(0.2..=0.6) } else { 0.0 };
    NoiseSpec {
        p_drop: draw(toggles.drop),
        p_replace: draw(toggles.replace),
        p_shuffle: draw(toggles.shuffle),
    }
}

fn multiset(seq: &[usize]) -> HashMap<usize, usize> {
    let mut counts = HashMap::new();
    for &tok in seq {
        *counts.entry(tok).or_insert(0) += 1;
    }
    counts
}

/// Multiset add/delete rates, ignoring order. A token occurring three times
/// in the input and five times in the output contributes two "added"
/// occurrences. Rates with a zero denominator are zero.
pub fn compute_rates(input: &[usize], output: &[usize]) -> RateStats {
    let in_counts = multiset(input);
    let out_counts = multiset(output);
    let added: usize = out_counts
        .iter()
        .map(|(tok, &c_out)| c_out.saturating_sub(in_counts.get(tok).copied().unwrap_or(0)))
        .sum();
    let deleted: usize = in_counts
        .iter()
        .map(|(tok, &c_in)| c_in.saturating_sub(out_counts.get(tok).copied().unwrap_or(0)))
        .sum();
    let rate = |count: usize, denom: usize| if denom == 0 { 0.0 } else { count as f64 / denom as f64 };
    RateStats {
        add_rate: rate(added, output.len()),
        delete_rate: rate(deleted, input.len()),
    }
}

/// Deterministic kernel of the range sampler: given a true rate, a width and
/// an alignment (both in [0,1]), places the range and clips it. The clipped
/// range always contains the true rate; zero width collapses to the rate
/// itself.
pub fn range_from_draws(rate: f64, width: f64, align: f64) -> (f64, f64) {
    let low = rate - align * width;
    let high = low + width;
    (low.clamp(0.0, 1.0), high.clamp(0.0, 1.0))
}

/// Samples conditioning ranges around the true rates: width ~ U[0,1],
/// alignment ~ U[0,1] per rate, then clipped to [0,1].
pub fn sample_tuning_ranges(true_rates: &RateStats, rng: &mut ChaCha8Rng) -> TuningRanges {
    let mut sample_one = |rate: f64| {
        let width: f64 = rng.random_range(0.0..=1.0);
        let align: f64 = rng.random_range(0.0..=1.0);
        range_from_draws(rate, width, align)
    };
    TuningRanges {
        add: sample_one(true_rates.add_rate),
        delete: sample_one(true_rates.delete_rate),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    fn rng(tag: u64) -> ChaCha8Rng {
        stream(42, &["corruption-test".into(), tag.into()])
    }

    #[test]
    fn drop_identity_and_annihilation() {
        let s = vec![1, 2, 3, 4, 5];
        assert_eq!(drop_noise(&s, 0.0, &mut rng(0)), s);
        assert_eq!(drop_noise(&s, 1.0, &mut rng(1)), Vec::<usize>::new());
    }

    #[test]
    fn drop_output_is_a_subsequence() {
        let mut r = rng(2);
        for trial in 0..200 {
            let s: Vec<usize> = (0..(trial % 17)).collect();
            let out = drop_noise(&s, 0.4, &mut r);
            let mut it = s.iter();
            assert!(out.iter().all(|tok| it.any(|x| x == tok)), "not a subsequence");
        }
    }

    #[test]
    fn replace_respects_shorter_source() {
        let s_i = vec![1, 1, 1, 1, 1];
        let s_j = vec![2, 2];
        assert_eq!(replace_noise(&s_i, &s_j, 0.0, &mut rng(3)), s_i);
        assert_eq!(replace_noise(&s_i, &s_j, 1.0, &mut rng(4)), vec![2, 2, 1, 1, 1]);
        let long = vec![7; 9];
        assert_eq!(replace_noise(&s_i, &long, 1.0, &mut rng(5)), vec![7; 5]);
    }

    #[test]
    fn replace_never_changes_length() {
        let mut r = rng(6);
        for len_i in 0..12 {
            for len_j in 0..12 {
                let s_i: Vec<usize> = (0..len_i).collect();
                let s_j: Vec<usize> = (100..100 + len_j).collect();
                assert_eq!(replace_noise(&s_i, &s_j, 0.5, &mut r).len(), len_i);
            }
        }
    }

    #[test]
    fn shuffle_is_a_permutation() {
        let mut r = rng(7);
        for trial in 0..300 {
            let s: Vec<usize> = (0..(trial % 13)).map(|i| i * 3 % 7).collect();
            let out = shuffle_noise(&s, 0.6, &mut r);
            let mut a = s.clone();
            let mut b = out.clone();
            a.sort_unstable();
            b.sort_unstable();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn shuffle_leaves_singletons_and_identity_cases() {
        for p in [0.0, 0.3, 1.0] {
            assert_eq!(shuffle_noise(&[9], p, &mut rng(8)), vec![9]);
        }
        let s = vec![4, 5, 6];
        assert_eq!(shuffle_noise(&s, 0.0, &mut rng(9)), s);
    }

    #[test]
    fn apply_noise_identity_and_drop_first_order() {
        let s = vec![1, 2, 3];
        let s_j = vec![8, 8, 8];
        assert_eq!(apply_noise(&s, &NoiseSpec::NONE, &s_j, &mut rng(10)), s);
        let all_drop = NoiseSpec { p_drop: 1.0, p_replace: 0.7, p_shuffle: 0.7 };
        assert_eq!(apply_noise(&s, &all_drop, &s_j, &mut rng(11)), Vec::<usize>::new());
    }

    #[test]
    fn apply_noise_without_shuffle_preserves_post_drop_length() {
        let spec = NoiseSpec { p_drop: 0.4, p_replace: 0.5, p_shuffle: 0.0 };
        let s: Vec<usize> = (0..20).collect();
        let s_j: Vec<usize> = (50..80).collect();
        let mut r1 = rng(12);
        let mut r2 = r1.clone();
        let after_drop = drop_noise(&s, spec.p_drop, &mut r1);
        let out = apply_noise(&s, &spec, &s_j, &mut r2);
        assert_eq!(out.len(), after_drop.len());
    }

    #[test]
    fn noise_probs_respect_toggles_and_bounds() {
        let mut r = rng(13);
        let toggles = NoiseToggles { drop: true, replace: true, shuffle: false };
        let mut sum = 0.0;
        let n = 3000;
        for _ in 0..n {
            let spec = sample_noise_probs(&toggles, &mut r);
            assert!((0.2..=0.6).contains(&spec.p_drop));
            assert!((0.2..=0.6).contains(&spec.p_replace));
            assert_eq!(spec.p_shuffle, 0.0);
            sum += spec.p_drop;
        }
        let mean = sum / n as f64;
        assert!((mean - 0.4).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn rates_match_the_multiset_fixture() {
        let stats = compute_rates(&[7, 7, 7], &[7, 7, 7, 7, 7]);
        assert_eq!(stats.add_rate, 0.4);
        assert_eq!(stats.delete_rate, 0.0);
    }

    #[test]
    fn rates_identity_and_disjoint() {
        let s = vec![1, 2, 3];
        let same = compute_rates(&s, &s);
        assert_eq!((same.add_rate, same.delete_rate), (0.0, 0.0));
        let disjoint = compute_rates(&[1, 2], &[3, 4, 5]);
        assert_eq!((disjoint.add_rate, disjoint.delete_rate), (1.0, 1.0));
    }

    #[test]
    fn rates_define_zero_on_empty_sides() {
        let e: Vec<usize> = vec![];
        let out = compute_rates(&e, &[1, 2]);
        assert_eq!((out.add_rate, out.delete_rate), (1.0, 0.0));
        let inp = compute_rates(&[1, 2], &e);
        assert_eq!((inp.add_rate, inp.delete_rate), (0.0, 1.0));
        let both = compute_rates(&e, &e);
        assert_eq!((both.add_rate, both.delete_rate), (0.0, 0.0));
    }

    #[test]
    fn range_kernel_contains_rate_and_clips() {
        assert_eq!(range_from_draws(0.37, 0.0, 0.9), (0.37, 0.37));
        assert_eq!(range_from_draws(0.0, 0.8, 0.5), (0.0, 0.4));
        let (lo, hi) = range_from_draws(1.0, 0.6, 0.1);
        assert!(lo <= 1.0 && hi == 1.0 && lo <= 1.0 - 0.06 + 1e-12);
    }

    #[test]
    fn sampled_ranges_cover_the_true_rate() {
        let mut r = rng(14);
        for i in 0..2000 {
            let rate = (i % 101) as f64 / 100.0;
            let stats = RateStats { add_rate: rate, delete_rate: 1.0 - rate };
            let ranges = sample_tuning_ranges(&stats, &mut r);
            for ((lo, hi), rate) in [
                (ranges.add, stats.add_rate),
                (ranges.delete, stats.delete_rate),
            ] {
                assert!(lo <= rate + 1e-12 && rate <= hi + 1e-12, "({lo},{hi}) misses {rate}");
                assert!((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi) && lo <= hi);
            }
        }
    }

    #[test]
    fn deterministic_under_seeded_rng() {
        let s: Vec<usize> = (0..30).collect();
        let s_j: Vec<usize> = (100..140).collect();
        let spec = NoiseSpec { p_drop: 0.3, p_replace: 0.4, p_shuffle: 0.5 };
        let a = apply_noise(&s, &spec, &s_j, &mut rng(15));
        let b = apply_noise(&s, &spec, &s_j, &mut rng(15));
        assert_eq!(a, b);
    }
}
