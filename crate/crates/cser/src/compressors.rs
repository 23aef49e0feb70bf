//! Sparsifying compressors with residual computation and size accounting.
//!
//! Every compressor maps a dense vector to a vector supported on a subset of
//! coordinates; the dropped part is the residual the optimizers feed back or
//! reset. `Identity` keeps everything, `Zero` drops everything, `TopK` keeps
//! the largest-magnitude coordinates, and `RandomK` / `Grbs` keep a random
//! selection drawn from counter-based randomness keyed on (seed, round) only.
//! Two workers sharing a spec therefore always select the same support in the
//! same round, which is what makes the compressed messages directly summable.

use crate::numerics::{self, norm_sq, BlockPartition, Vector};
use crate::rng::{keyed_rng, stream};
use crate::{Error, Result};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Wire convention: values travel as 32-bit floats.
pub const VALUE_BITS: u64 = 32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompressorKind {
    Identity,
    Zero,
    RandomK,
    TopK,
    Grbs,
}

/// Which compressor to apply, with its parameters and randomness seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressorSpec {
    pub kind: CompressorKind,
    /// Compression ratio R >= 1 (kept fraction is roughly 1/R).
    #[serde(default = "default_ratio")]
    pub ratio: f64,
    /// Block count, used by `Grbs` only; 0 means auto (min(d, 512)).
    #[serde(default)]
    pub blocks: usize,
    /// Seed of the selection stream shared by all workers.
    #[serde(default)]
    pub seed: u64,
}

fn default_ratio() -> f64 {
    1.0
}

impl CompressorSpec {
    pub fn identity() -> Self {
        CompressorSpec { kind: CompressorKind::Identity, ratio: 1.0, blocks: 0, seed: 0 }
    }

    pub fn zero() -> Self {
        CompressorSpec { kind: CompressorKind::Zero, ratio: 1.0, blocks: 0, seed: 0 }
    }

    pub fn top_k(ratio: f64) -> Self {
        CompressorSpec { kind: CompressorKind::TopK, ratio, blocks: 0, seed: 0 }
    }

    pub fn random_k(ratio: f64, seed: u64) -> Self {
        CompressorSpec { kind: CompressorKind::RandomK, ratio, blocks: 0, seed }
    }

    pub fn grbs(ratio: f64, blocks: usize, seed: u64) -> Self {
        CompressorSpec { kind: CompressorKind::Grbs, ratio, blocks, seed }
    }

    /// Number of coordinates a `RandomK`/`TopK` spec keeps in dimension `d`.
    pub fn kept_coords(&self, d: usize) -> usize {
        (((d as f64) / self.ratio).floor() as usize).clamp(1, d)
    }

    /// Number of blocks a `Grbs` spec keeps.
    pub fn kept_blocks(&self) -> usize {
        ((self.blocks as f64 / self.ratio).floor() as usize).clamp(1, self.blocks.max(1))
    }

    /// Nominal approximation factor delta in [0, 1]: the guaranteed (for the
    /// deterministic kinds) or expected (for the randomized kinds) kept share
    /// of squared mass.
    pub fn delta_nominal(&self, d: usize) -> f64 {
        match self.kind {
            CompressorKind::Identity => 1.0,
            CompressorKind::Zero => 0.0,
            CompressorKind::RandomK | CompressorKind::TopK => self.kept_coords(d) as f64 / d as f64,
            CompressorKind::Grbs => 1.0 / self.ratio,
        }
    }

    /// Constraint violations of this spec in dimension `d`, empty when valid.
    pub fn violations(&self, d: usize, name: &str) -> Vec<String> {
        let mut out = Vec::new();
        match self.kind {
            CompressorKind::Identity | CompressorKind::Zero => {}
            CompressorKind::RandomK | CompressorKind::TopK => {
                if self.ratio < 1.0 {
                    out.push(format!("{name}: ratio must be >= 1, got {}", self.ratio));
                }
            }
            CompressorKind::Grbs => {
                if self.ratio < 1.0 {
                    out.push(format!("{name}: ratio must be >= 1, got {}", self.ratio));
                }
                if self.blocks == 0 || self.blocks > d {
                    out.push(format!(
                        "{name}: grbs blocks must satisfy 1 <= blocks <= d = {d}, got {}",
                        self.blocks
                    ));
                }
            }
        }
        out
    }
}

/// Support of a compressed message.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Support {
    Full,
    /// Sorted, deduplicated coordinate indices.
    Indices(Vec<usize>),
    /// Sorted kept block ids over a partition.
    Blocks { partition: BlockPartition, kept: Vec<usize> },
}

/// A compressed vector: dense representation zero outside the support, plus
/// the cached encoded size.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompressedMessage {
    pub dense: Vector,
    pub support: Support,
    pub payload_bits: u64,
}

impl CompressedMessage {
    pub fn new(dense: Vector, support: Support) -> Self {
        let payload_bits = encoded_size_bits_of(&dense, &support);
        CompressedMessage { dense, support, payload_bits }
    }

    pub fn dim(&self) -> usize {
        self.dense.len()
    }

    /// Value bits (32 per transmitted coordinate), excluding index metadata.
    pub fn value_bits(&self) -> u64 {
        value_index_bits(&self.dense, &self.support).0
    }

    /// Support-descriptor metadata bits.
    pub fn index_bits(&self) -> u64 {
        value_index_bits(&self.dense, &self.support).1
    }
}

/// Bits needed to address one of `n` items.
pub fn ceil_log2(n: usize) -> u64 {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as u64
    }
}

fn value_index_bits(dense: &Vector, support: &Support) -> (u64, u64) {
    match support {
        Support::Full => (VALUE_BITS * dense.len() as u64, 0),
        Support::Indices(idx) => (
            VALUE_BITS * idx.len() as u64,
            idx.len() as u64 * ceil_log2(dense.len()),
        ),
        Support::Blocks { partition, kept } => {
            let coords: usize = kept.iter().map(|&b| partition.size(b)).sum();
            (
                VALUE_BITS * coords as u64,
                kept.len() as u64 * ceil_log2(partition.num_blocks()),
            )
        }
    }
}

/// Encoded transmission size of a message in bits.
pub fn encoded_size_bits(msg: &CompressedMessage) -> u64 {
    encoded_size_bits_of(&msg.dense, &msg.support)
}

fn encoded_size_bits_of(dense: &Vector, support: &Support) -> u64 {
    let (v, i) = value_index_bits(dense, support);
    v + i
}

/// Applies the compressor to `v` for the given round (rounds start at 1).
pub fn compress(spec: &CompressorSpec, v: &Vector, round: u64) -> Result<CompressedMessage> {
    if round == 0 {
        return Err(Error::Protocol(
            "compress: round numbering starts at 1".into(),
        ));
    }
    let d = v.len();
    match spec.kind {
        CompressorKind::Identity => Ok(CompressedMessage::new(v.clone(), Support::Full)),
        CompressorKind::Zero => Ok(CompressedMessage::new(
            Vector::zeros(d),
            Support::Indices(Vec::new()),
        )),
        CompressorKind::TopK => {
            let k = spec.kept_coords(d);
            let mut order: Vec<usize> = (0..d).collect();
            // descending magnitude, lower index wins ties
            order.sort_unstable_by(|&a, &b| {
                v[b].abs()
                    .partial_cmp(&v[a].abs())
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
            let mut kept: Vec<usize> = order[..k].to_vec();
            kept.sort_unstable();
            Ok(sparse_message(v, kept))
        }
        CompressorKind::RandomK => {
            let k = spec.kept_coords(d);
            let kept = sample_sorted(&[spec.seed, stream::COMPRESSOR_SELECT, round], d, k);
            Ok(sparse_message(v, kept))
        }
        CompressorKind::Grbs => {
            let partition = numerics::partition(d, spec.blocks)?;
            let m = spec.kept_blocks();
            let kept = sample_sorted(
                &[spec.seed, stream::COMPRESSOR_SELECT, round],
                spec.blocks,
                m,
            );
            let mut dense = Vector::zeros(d);
            for &b in &kept {
                for i in partition.range(b) {
                    dense[i] = v[i];
                }
            }
            Ok(CompressedMessage::new(dense, Support::Blocks { partition, kept }))
        }
    }
}

fn sparse_message(v: &Vector, kept: Vec<usize>) -> CompressedMessage {
    let mut dense = Vector::zeros(v.len());
    for &i in &kept {
        dense[i] = v[i];
    }
    CompressedMessage::new(dense, Support::Indices(kept))
}

fn sample_sorted(key: &[u64], universe: usize, amount: usize) -> Vec<usize> {
    let mut rng = keyed_rng(key);
    let mut kept = rand::seq::index::sample(&mut rng, universe, amount).into_vec();
    kept.sort_unstable();
    kept
}

/// Residual `v - C(v)`; zero exactly on the kept support of sparsifiers.
pub fn residual(v: &Vector, msg: &CompressedMessage) -> Result<Vector> {
    if v.len() != msg.dense.len() {
        return Err(Error::DimensionMismatch {
            expected: v.len(),
            got: msg.dense.len(),
        });
    }
    Ok(v.sub(&msg.dense))
}

/// Monte-Carlo estimate of `E[|C(v) - v|^2 / |v|^2]` over standard-normal v.
pub fn delta_estimate(spec: &CompressorSpec, trials: u64, d: usize, rng_seed: u64) -> Result<f64> {
    Ok(delta_estimate_stats(spec, trials, d, rng_seed)?.0)
}

/// Same estimate, with the standard error of the mean.
pub fn delta_estimate_stats(
    spec: &CompressorSpec,
    trials: u64,
    d: usize,
    rng_seed: u64,
) -> Result<(f64, f64)> {
    assert!(trials >= 1, "delta_estimate needs at least one trial");
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for trial in 0..trials {
        let mut rng = keyed_rng(&[rng_seed, stream::DELTA_ESTIMATE, trial]);
        let v = Vector::from_vec(
            (0..d).map(|_| StandardNormal.sample(&mut rng)).collect(),
        );
        let msg = compress(spec, &v, trial + 1)?;
        let den = norm_sq(&v);
        let ratio = if den == 0.0 {
            0.0
        } else {
            norm_sq(&residual(&v, &msg)?) / den
        };
        sum += ratio;
        sum_sq += ratio * ratio;
    }
    let n = trials as f64;
    let mean = sum / n;
    let var = (sum_sq / n - mean * mean).max(0.0);
    let se = if trials > 1 { (var / (n - 1.0)).sqrt() } else { 0.0 };
    Ok((mean, se))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn identity_keeps_everything() {
        let v = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        let msg = compress(&CompressorSpec::identity(), &v, 5).unwrap();
        assert_eq!(msg.dense, v);
        assert_eq!(msg.support, Support::Full);
        assert_eq!(msg.payload_bits, 3 * VALUE_BITS);
        assert_eq!(norm_sq(&residual(&v, &msg).unwrap()), 0.0);
    }

    #[test]
    fn zero_drops_everything() {
        let v = Vector::from_vec(vec![1.0, 2.0, 3.0]);
        let msg = compress(&CompressorSpec::zero(), &v, 1).unwrap();
        assert_eq!(msg.dense, Vector::zeros(3));
        assert_eq!(msg.payload_bits, 0);
        assert_eq!(residual(&v, &msg).unwrap(), v);
    }

    #[test]
    fn top_k_keeps_largest_magnitude() {
        let v = Vector::from_vec(vec![1.0, -5.0, 2.0]);
        let msg = compress(&CompressorSpec::top_k(3.0), &v, 1).unwrap();
        assert_eq!(msg.dense.as_slice(), &[0.0, -5.0, 0.0]);
        assert_eq!(msg.support, Support::Indices(vec![1]));
        assert_eq!(residual(&v, &msg).unwrap().as_slice(), &[1.0, 0.0, 2.0]);
    }

    #[test]
    fn top_k_tie_break_lower_index() {
        let v = Vector::from_vec(vec![2.0, -2.0, 2.0]);
        let msg = compress(&CompressorSpec::top_k(1.5), &v, 1).unwrap();
        // k = floor(3/1.5) = 2; ties resolved toward lower indices
        assert_eq!(msg.support, Support::Indices(vec![0, 1]));
    }

    #[test]
    fn grbs_keeps_expected_block_count() {
        let spec = CompressorSpec::grbs(2.0, 4, 42);
        let v = Vector::from_vec((0..8).map(|i| i as f64 + 1.0).collect());
        let msg = compress(&spec, &v, 3).unwrap();
        match &msg.support {
            Support::Blocks { kept, partition } => {
                assert_eq!(kept.len(), 2); // floor(B / R) = floor(4 / 2)
                assert_eq!(partition.num_blocks(), 4);
                for b in 0..4 {
                    let in_kept = kept.contains(&b);
                    for i in partition.range(b) {
                        assert_eq!(msg.dense[i], if in_kept { v[i] } else { 0.0 });
                    }
                }
            }
            other => panic!("expected block support, got {other:?}"),
        }
        // d=8, B=4, 2 blocks kept: 2*2*32 value bits + 2*2 index bits
        assert_eq!(msg.payload_bits, 132);
        assert_eq!(msg.value_bits(), 128);
        assert_eq!(msg.index_bits(), 4);
    }

    #[test]
    fn kept_counts_clamp_to_one() {
        // R larger than d or B must not silently produce the Zero compressor
        let spec = CompressorSpec::grbs(100.0, 4, 0);
        assert_eq!(spec.kept_blocks(), 1);
        let spec = CompressorSpec::top_k(1e9);
        assert_eq!(spec.kept_coords(16), 1);
    }

    #[test]
    fn round_zero_is_a_protocol_error() {
        let v = Vector::zeros(4);
        assert!(matches!(
            compress(&CompressorSpec::identity(), &v, 0),
            Err(Error::Protocol(_))
        ));
    }

    #[test]
    fn global_synchrony_same_key_same_support() {
        let spec = CompressorSpec::grbs(4.0, 16, 9);
        let a = compress(&spec, &Vector::zeros(64), 7).unwrap();
        let b = compress(&spec, &Vector::from_vec(vec![1.0; 64]), 7).unwrap();
        assert_eq!(a.support, b.support);

        let rk = CompressorSpec::random_k(4.0, 9);
        let a = compress(&rk, &Vector::zeros(64), 7).unwrap();
        let b = compress(&rk, &Vector::from_vec(vec![1.0; 64]), 7).unwrap();
        assert_eq!(a.support, b.support);
    }

    #[test]
    fn encoded_size_full_and_indices() {
        let msg = compress(&CompressorSpec::identity(), &Vector::zeros(100), 1).unwrap();
        assert_eq!(encoded_size_bits(&msg), 3200);

        // 10 of 100 coordinates: 10 * (32 + ceil(log2 100) = 7)
        let msg = compress(&CompressorSpec::random_k(10.0, 1), &Vector::from_vec(vec![1.0; 100]), 1).unwrap();
        assert_eq!(encoded_size_bits(&msg), 10 * (32 + 7));
    }

    #[test]
    fn delta_estimate_exact_endpoints() {
        let est = delta_estimate(&CompressorSpec::identity(), 32, 16, 0).unwrap();
        assert_eq!(est, 0.0);
        let est = delta_estimate(&CompressorSpec::zero(), 32, 16, 0).unwrap();
        assert_eq!(est, 1.0);
    }

    #[test]
    fn delta_estimate_grbs_matches_expectation() {
        // statistical oracle: expected dropped share is 1 - 1/R
        let spec = CompressorSpec::grbs(4.0, 64, 11);
        let (mean, se) = delta_estimate_stats(&spec, 10_000, 4096, 5).unwrap();
        assert!((mean - 0.75).abs() < 0.02, "mean = {mean}");
        assert!((mean - 0.75).abs() <= 3.0 * se, "mean = {mean}, se = {se}");
    }

    #[test]
    fn delta_nominal_per_kind() {
        assert_eq!(CompressorSpec::identity().delta_nominal(10), 1.0);
        assert_eq!(CompressorSpec::zero().delta_nominal(10), 0.0);
        assert_eq!(CompressorSpec::top_k(4.0).delta_nominal(8), 0.25);
        assert_eq!(CompressorSpec::grbs(8.0, 16, 0).delta_nominal(128), 0.125);
    }

    proptest! {
        #[test]
        fn top_k_contract_holds_exactly(vals in proptest::collection::vec(-1e3f64..1e3, 2..1000),
                                        ratio in 1.0f64..20.0) {
            let v = Vector::from_vec(vals);
            let spec = CompressorSpec::top_k(ratio);
            let msg = compress(&spec, &v, 1).unwrap();
            let k = spec.kept_coords(v.len());
            let dropped = norm_sq(&residual(&v, &msg).unwrap());
            let budget = (1.0 - k as f64 / v.len() as f64) * norm_sq(&v);
            // provable: the dropped coordinates are the d-k smallest squares
            prop_assert!(dropped <= budget * (1.0 + 1e-12) + 1e-300);
        }

        #[test]
        fn residual_plus_dense_reconstructs(vals in proptest::collection::vec(-1e6f64..1e6, 1..256),
                                            kind_sel in 0usize..4, seed in 0u64..1000) {
            let v = Vector::from_vec(vals);
            let d = v.len();
            let spec = match kind_sel {
                0 => CompressorSpec::identity(),
                1 => CompressorSpec::zero(),
                2 => CompressorSpec::top_k(3.0),
                _ => CompressorSpec::grbs(3.0, (d / 2).max(1), seed),
            };
            let msg = compress(&spec, &v, 1 + seed).unwrap();
            let r = residual(&v, &msg).unwrap();
            let rebuilt = msg.dense.add(&r);
            prop_assert_eq!(rebuilt.max_abs_diff(&v), 0.0);
        }

        #[test]
        fn compress_is_deterministic(vals in proptest::collection::vec(-1e3f64..1e3, 4..64),
                                     round in 1u64..100, seed in 0u64..100) {
            let v = Vector::from_vec(vals);
            let spec = CompressorSpec::grbs(2.0, 4, seed);
            let a = compress(&spec, &v, round).unwrap();
            let b = compress(&spec, &v, round).unwrap();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn payload_cache_matches_recomputation(vals in proptest::collection::vec(-1e3f64..1e3, 4..64),
                                               round in 1u64..50) {
            let v = Vector::from_vec(vals);
            for spec in [CompressorSpec::identity(), CompressorSpec::zero(),
                         CompressorSpec::top_k(2.0), CompressorSpec::random_k(2.0, 3)] {
                let msg = compress(&spec, &v, round).unwrap();
                prop_assert_eq!(msg.payload_bits, encoded_size_bits(&msg));
            }
        }
    }
}
