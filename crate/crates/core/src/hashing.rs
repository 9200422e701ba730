//! Seeded hash primitives shared by every sketch.
//!
//! All randomness in a sketch is a pure function of a [`HashSeed`]: a master
//! seed plus a purpose tag, a merge-round number and a column number. Equal
//! tuples must produce identical hash streams across processes and runs
//! (snapshot files depend on it), distinct tuples must look independent.
//! The mixer is a fixed multiply-xorshift finalizer owned by this crate so
//! that on-disk artifacts can never drift with a dependency upgrade.

/// What a derived hash stream is used for. Folding the purpose into the key
/// keeps e.g. membership and checksum streams of the same column disjoint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum HashPurpose {
    /// Routes an index to a bucket column depth.
    Membership = 1,
    /// 32-bit bucket checksums.
    Checksum = 2,
    /// Per-column residue bases of the baseline sampler.
    BaselineResidue = 3,
}

/// Fully-qualified seed for one hash stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct HashSeed {
    pub master_seed: u64,
    pub purpose: HashPurpose,
    /// Merge-round number; 0 for standalone sketches.
    pub round: u32,
    pub column: u32,
}

impl HashSeed {
    pub fn new(master_seed: u64, purpose: HashPurpose, round: u32, column: u32) -> Self {
        Self { master_seed, purpose, round, column }
    }

    /// Collapses the tuple to a 64-bit key. Hot paths derive this once per
    /// column and then call the `*_keyed` functions per index.
    pub fn key(&self) -> u64 {
        let mut k = splitmix64(self.master_seed);
        k = splitmix64(k ^ self.purpose as u64);
        k = splitmix64(k ^ u64::from(self.round));
        splitmix64(k ^ u64::from(self.column))
    }
}

/// The (master seed, round) pair a sketch instance is built from. Column
/// and purpose are appended per hash stream; node identity is deliberately
/// absent so sketches of different nodes with equal rounds stay mergeable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SketchSeed {
    pub master_seed: u64,
    pub round: u32,
}

impl SketchSeed {
    pub fn new(master_seed: u64) -> Self {
        Self { master_seed, round: 0 }
    }

    pub fn for_round(master_seed: u64, round: u32) -> Self {
        Self { master_seed, round }
    }

    pub fn hash_seed(&self, purpose: HashPurpose, column: u32) -> HashSeed {
        HashSeed::new(self.master_seed, purpose, self.round, column)
    }
}

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// 64-bit finalizer with full avalanche: one widening multiply, high half
/// folded onto the low half. The high product bits depend on every input
/// bit, so the fold avalanches every output bit (including the trailing
/// bits consumed by [`bucket_depth`]). One multiply instead of the usual
/// xorshift-multiply pair; sketch updates are hash-throughput-bound.
#[inline]
fn mix64(z: u64) -> u64 {
    let wide = u128::from(z) * u128::from(0xa076_1d64_78bd_642fu64);
    (wide as u64) ^ ((wide >> 64) as u64)
}

/// Pre-mixed index term shared by every keyed hash of one index. Hot loops
/// that hash the same index under many keys (one membership + one checksum
/// key per column) hoist this multiply out of the per-column work.
#[inline]
pub fn index_premix(idx: u64) -> u64 {
    idx.wrapping_mul(GOLDEN_GAMMA)
}

/// Keyed hash of an [`index_premix`]ed index.
#[inline]
pub fn hash64_premixed(key: u64, premixed: u64) -> u64 {
    mix64(key ^ premixed)
}

/// Keyed 64-bit hash of an index.
#[inline]
pub fn hash64_keyed(key: u64, idx: u64) -> u64 {
    hash64_premixed(key, index_premix(idx))
}

/// Keyed 32-bit checksum of an index.
#[inline]
pub fn checksum32_keyed(key: u64, idx: u64) -> u32 {
    hash64_keyed(key, idx) as u32
}

/// Column-membership hash: uniform 64-bit value routing `idx` within one
/// column. Pure in (seed, idx).
pub fn membership_hash(seed: &HashSeed, idx: u64) -> u64 {
    hash64_keyed(seed.key(), idx)
}

/// Bucket checksum hash, 32 bits wide: collisions cost a 2^-32 per-bucket
/// false accept, and halving the bucket to 12 bytes is the entire point.
pub fn checksum_hash(seed: &HashSeed, idx: u64) -> u32 {
    checksum32_keyed(seed.key(), idx)
}

/// Number of rows of a column an index occupies: row 0 unconditionally,
/// then one more row per trailing zero bit of its membership hash, capped
/// at `num_rows`. Gives the geometric level distribution P(depth > r) = 2^-r.
#[inline]
pub fn bucket_depth(col_hash: u64, num_rows: u32) -> u32 {
    num_rows.min(1 + col_hash.trailing_zeros())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn seed(master: u64, purpose: HashPurpose, round: u32, column: u32) -> HashSeed {
        HashSeed::new(master, purpose, round, column)
    }

    #[test]
    fn hashes_are_pure_functions_of_the_tuple() {
        let a = seed(7, HashPurpose::Membership, 3, 5);
        let b = seed(7, HashPurpose::Membership, 3, 5);
        for idx in [0u64, 1, 5, u64::MAX] {
            assert_eq!(membership_hash(&a, idx), membership_hash(&b, idx));
            assert_eq!(checksum_hash(&a, idx), checksum_hash(&b, idx));
        }
        // Keyed fast path is the same function.
        let k = a.key();
        assert_eq!(hash64_keyed(k, 5), membership_hash(&a, 5));
        assert_eq!(checksum32_keyed(k, 5), checksum_hash(&a, 5));
    }

    #[test]
    fn distinct_tuples_disagree_almost_everywhere() {
        // Vary one field at a time; outputs on the same indices must differ
        // on >= 99% of draws.
        let mut rng = ChaCha12Rng::seed_from_u64(0x5eed);
        let mut agree = 0u32;
        let total = 10_000u32;
        for t in 0..total {
            let master: u64 = rng.random();
            let round: u32 = rng.random_range(0..64);
            let column: u32 = rng.random_range(0..16);
            let idx: u64 = rng.random();
            let base = seed(master, HashPurpose::Membership, round, column);
            let varied = match t % 4 {
                0 => seed(master ^ 1, HashPurpose::Membership, round, column),
                1 => seed(master, HashPurpose::Checksum, round, column),
                2 => seed(master, HashPurpose::Membership, round + 1, column),
                _ => seed(master, HashPurpose::Membership, round, column + 1),
            };
            if membership_hash(&base, idx) == membership_hash(&varied, idx) {
                agree += 1;
            }
        }
        assert!(agree <= total / 100, "{agree} collisions in {total} draws");
    }

    #[test]
    fn depth_matches_trailing_bit_scan() {
        // Independent straight-line oracle: count trailing zeros by walking
        // bits, then cap. Compared against bucket_depth on random words.
        fn depth_oracle(h: u64, num_rows: u32) -> u32 {
            let mut d = 1u32;
            let mut x = h;
            while d < num_rows && x != 0 && x & 1 == 0 {
                d += 1;
                x >>= 1;
            }
            if h == 0 {
                num_rows
            } else {
                d
            }
        }
        let mut rng = ChaCha12Rng::seed_from_u64(1);
        for _ in 0..1_000 {
            let h: u64 = rng.random();
            let rows = rng.random_range(1..=64);
            assert_eq!(bucket_depth(h, rows), depth_oracle(h, rows));
        }
    }

    #[test]
    fn depth_edge_cases() {
        assert_eq!(bucket_depth(0b1, 8), 1);
        assert_eq!(bucket_depth(0b1000, 8), 4);
        assert_eq!(bucket_depth(0, 40), 40); // all-zero hash hits the cap
        assert_eq!(bucket_depth(0b10000, 3), 3); // cap below trailing zeros
    }

    #[test]
    fn depth_distribution_is_geometric() {
        let s = seed(99, HashPurpose::Membership, 0, 2);
        let k = s.key();
        let n = 100_000u64;
        let depth1 = (0..n)
            .filter(|&i| bucket_depth(hash64_keyed(k, i), 64) == 1)
            .count() as f64;
        let frac = depth1 / n as f64;
        assert!((frac - 0.5).abs() < 0.01, "P(depth==1) = {frac}");
    }

    #[test]
    fn checksum_has_no_collisions_on_ten_thousand_indices() {
        let s = seed(0xc0ffee, HashPurpose::Checksum, 0, 0);
        let k = s.key();
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let mut seen_idx = std::collections::HashSet::new();
        let mut seen_sum = std::collections::HashMap::new();
        while seen_idx.len() < 10_000 {
            let idx: u64 = rng.random();
            if !seen_idx.insert(idx) {
                continue;
            }
            let c = checksum32_keyed(k, idx);
            if let Some(prev) = seen_sum.insert(c, idx) {
                panic!("checksum collision: indices {prev} and {idx} -> {c:#x}");
            }
        }
    }
}
