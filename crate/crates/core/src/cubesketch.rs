//! XOR-bucket l0-sampler.
//!
//! A sketch is a `num_rows x num_columns` grid of 12-byte buckets. Per
//! column an index lands in rows `0..d` where `d` is geometric in the
//! index's membership hash (row 0 always). Each landed bucket XORs in the
//! raw index and a 32-bit checksum. Everything is XOR, so update order is
//! irrelevant, applying an index twice cancels it, and merging two sketches
//! is elementwise XOR — the properties the graph engine builds on.
//!
//! A bucket holding exactly one live index `i` reads `(i, checksum(i))` and
//! the checksum test recognizes it; deeper rows thin the population
//! geometrically so some bucket is single with constant probability per
//! column. Query failure probability falls off as 2^-num_columns.

use crate::hashing::{
    bucket_depth, checksum32_keyed, hash64_premixed, index_premix, HashPurpose, SketchSeed,
};
use crate::{Error, Result};
use std::io::{Read, Write};

/// Geometry and seed of a sketch. Two sketches interoperate (merge,
/// comparison) only when their params are identical.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SketchParams {
    n: u64,
    num_rows: u32,
    num_columns: u32,
    seed: SketchSeed,
}

/// Default query failure probability; eight columns would be overkill,
/// six too weak. log2(1/0.01) rounds up to 7 columns.
pub const DEFAULT_DELTA: f64 = 0.01;

pub const BUCKET_BYTES: usize = 12;
pub const HEADER_BYTES: usize = 28;

impl SketchParams {
    /// Sketch over vectors of length `n` with the default failure
    /// probability [`DEFAULT_DELTA`].
    pub fn new(n: u64, seed: SketchSeed) -> Result<Self> {
        Self::with_failure_probability(n, DEFAULT_DELTA, seed)
    }

    /// `num_columns = ceil(log2(1/delta))`; delta only picks the width and
    /// is not part of the sketch state.
    pub fn with_failure_probability(n: u64, delta: f64, seed: SketchSeed) -> Result<Self> {
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::InvalidParams(format!(
                "delta must be in (0, 1), got {delta}"
            )));
        }
        let cols = ((1.0 / delta).log2().ceil() as u32).max(1);
        Self::with_columns(n, cols, seed)
    }

    pub fn with_columns(n: u64, num_columns: u32, seed: SketchSeed) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParams(format!(
                "vector length must be >= 2, got {n}"
            )));
        }
        if num_columns == 0 {
            return Err(Error::InvalidParams("need at least one column".into()));
        }
        Ok(Self { n, num_rows: ceil_log2(n), num_columns, seed })
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn num_rows(&self) -> u32 {
        self.num_rows
    }

    pub fn num_columns(&self) -> u32 {
        self.num_columns
    }

    pub fn seed(&self) -> SketchSeed {
        self.seed
    }

    /// Bucket-array footprint: `num_rows * num_columns * 12` bytes.
    pub fn payload_bytes(&self) -> usize {
        self.num_rows as usize * self.num_columns as usize * BUCKET_BYTES
    }

    /// On-disk size including the fixed header.
    pub fn serialized_bytes(&self) -> usize {
        HEADER_BYTES + self.payload_bytes()
    }
}

/// ceil(log2 n) for n >= 2.
pub(crate) fn ceil_log2(n: u64) -> u32 {
    64 - (n - 1).leading_zeros()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Bucket {
    /// XOR of all live indices routed here.
    pub alpha: u64,
    /// XOR of their 32-bit checksums.
    pub gamma: u32,
}

impl Bucket {
    fn is_zero(&self) -> bool {
        self.alpha == 0 && self.gamma == 0
    }
}

/// Outcome of sampling a sketch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleResult {
    /// A live index of the sketched vector.
    Good(u64),
    /// Every bucket is zero; the sketched vector is (whp) the zero vector.
    ZeroVector,
    /// Nonzero sketch but no bucket passed the checksum test.
    Fail,
}

#[derive(Clone, Copy)]
struct ColumnKeys {
    membership: u64,
    checksum: u64,
}

#[derive(Clone)]
pub struct CubeSketch {
    params: SketchParams,
    // Derived from params.seed at construction; never serialized.
    keys: Vec<ColumnKeys>,
    // Column-major: buckets[col * num_rows + row]. An update XORs a prefix
    // of rows within each column, so keeping a column contiguous turns the
    // hot write into one or two cache lines. Serialization stays row-major.
    buckets: Vec<Bucket>,
}

impl CubeSketch {
    pub fn new(params: SketchParams) -> Self {
        let keys = (0..params.num_columns)
            .map(|col| ColumnKeys {
                membership: params.seed.hash_seed(HashPurpose::Membership, col).key(),
                checksum: params.seed.hash_seed(HashPurpose::Checksum, col).key(),
            })
            .collect();
        let buckets =
            vec![Bucket::default(); (params.num_rows * params.num_columns) as usize];
        Self { params, keys, buckets }
    }

    pub fn params(&self) -> &SketchParams {
        &self.params
    }

    /// Bucket array in storage (column-major) order.
    pub fn buckets(&self) -> Vec<Bucket> {
        self.buckets.clone()
    }

    /// Toggles index `idx`: inserts it if absent from the sketched set,
    /// removes it if present. One call per +-1 stream delta.
    pub fn update(&mut self, idx: u64) -> Result<()> {
        if idx >= self.params.n {
            return Err(Error::IndexOutOfRange { index: idx, len: self.params.n });
        }
        let rows = self.params.num_rows as usize;
        let pre = index_premix(idx);
        if rows >= 3 {
            for (keys, column) in self.keys.iter().zip(self.buckets.chunks_exact_mut(rows)) {
                let depth =
                    bucket_depth(hash64_premixed(keys.membership, pre), rows as u32) as usize;
                let checksum = hash64_premixed(keys.checksum, pre) as u32;
                // Depth is geometric (P(>=2) = 1/2, P(>=3) = 1/4), so a
                // data-dependent loop bound mispredicts almost every column.
                // XOR rows 0..3 unconditionally, masking rows 1 and 2 to
                // zero when shallower; only depth > 3 (P = 1/8) branches.
                let m1 = ((depth >= 2) as u64).wrapping_neg();
                let m2 = ((depth >= 3) as u64).wrapping_neg();
                let head: &mut [Bucket; 3] = (&mut column[..3]).try_into().unwrap();
                head[0].alpha ^= idx;
                head[0].gamma ^= checksum;
                head[1].alpha ^= idx & m1;
                head[1].gamma ^= checksum & m1 as u32;
                head[2].alpha ^= idx & m2;
                head[2].gamma ^= checksum & m2 as u32;
                if depth > 3 {
                    for b in &mut column[3..depth] {
                        b.alpha ^= idx;
                        b.gamma ^= checksum;
                    }
                }
            }
        } else {
            for (keys, column) in self.keys.iter().zip(self.buckets.chunks_exact_mut(rows)) {
                let depth =
                    bucket_depth(hash64_premixed(keys.membership, pre), rows as u32) as usize;
                let checksum = hash64_premixed(keys.checksum, pre) as u32;
                // depth <= rows always, so the slice never panics.
                for b in &mut column[..depth] {
                    b.alpha ^= idx;
                    b.gamma ^= checksum;
                }
            }
        }
        Ok(())
    }

    /// Applies a whole batch of toggles; bit-identical to updating each
    /// index in turn (XOR commutes). Rejects the batch wholesale before
    /// touching any bucket.
    ///
    /// This is the engine's bulk path: per column the three head rows
    /// accumulate in registers across the batch and hit memory once, so
    /// per-index cost collapses to hashing.
    pub fn update_many(&mut self, indices: &[u64]) -> Result<()> {
        for &idx in indices {
            if idx >= self.params.n {
                return Err(Error::IndexOutOfRange { index: idx, len: self.params.n });
            }
        }
        let rows = self.params.num_rows as usize;
        if rows < 3 {
            for &idx in indices {
                self.update(idx)?;
            }
            return Ok(());
        }
        for (keys, column) in self.keys.iter().zip(self.buckets.chunks_exact_mut(rows)) {
            let mut acc = [Bucket::default(); 3];
            for &idx in indices {
                let pre = index_premix(idx);
                let depth =
                    bucket_depth(hash64_premixed(keys.membership, pre), rows as u32) as usize;
                let checksum = hash64_premixed(keys.checksum, pre) as u32;
                let m1 = ((depth >= 2) as u64).wrapping_neg();
                let m2 = ((depth >= 3) as u64).wrapping_neg();
                acc[0].alpha ^= idx;
                acc[0].gamma ^= checksum;
                acc[1].alpha ^= idx & m1;
                acc[1].gamma ^= checksum & m1 as u32;
                acc[2].alpha ^= idx & m2;
                acc[2].gamma ^= checksum & m2 as u32;
                if depth > 3 {
                    for b in &mut column[3..depth] {
                        b.alpha ^= idx;
                        b.gamma ^= checksum;
                    }
                }
            }
            let head: &mut [Bucket; 3] = (&mut column[..3]).try_into().unwrap();
            for (b, a) in head.iter_mut().zip(&acc) {
                b.alpha ^= a.alpha;
                b.gamma ^= a.gamma;
            }
        }
        Ok(())
    }

    /// Returns a live index of the sketched vector, `ZeroVector` when every
    /// bucket is zero, `Fail` otherwise. Scan order is fixed (column by
    /// column, shallow rows first) so equal sketches sample equal indices.
    pub fn sample(&self) -> SampleResult {
        let rows = self.params.num_rows as usize;
        let mut all_zero = true;
        for (keys, column) in self.keys.iter().zip(self.buckets.chunks_exact(rows)) {
            for b in column {
                if b.is_zero() {
                    continue;
                }
                all_zero = false;
                // alpha >= n can only come from a multi-index collision that
                // also forged the checksum; never report it.
                if b.alpha < self.params.n
                    && b.gamma == checksum32_keyed(keys.checksum, b.alpha)
                {
                    return SampleResult::Good(b.alpha);
                }
            }
        }
        if all_zero {
            SampleResult::ZeroVector
        } else {
            SampleResult::Fail
        }
    }

    /// XORs `other` into `self`; the result sketches the symmetric
    /// difference of the two sketched sets.
    pub fn merge_from(&mut self, other: &Self) -> Result<()> {
        if self.params != other.params {
            return Err(Error::Mismatch(format!(
                "cannot merge sketches with different params: {:?} vs {:?}",
                self.params, other.params
            )));
        }
        for (a, b) in self.buckets.iter_mut().zip(&other.buckets) {
            a.alpha ^= b.alpha;
            a.gamma ^= b.gamma;
        }
        Ok(())
    }

    pub fn merged(a: &Self, b: &Self) -> Result<Self> {
        let mut out = a.clone();
        out.merge_from(b)?;
        Ok(out)
    }

    pub fn is_zero(&self) -> bool {
        self.buckets.iter().all(Bucket::is_zero)
    }

    /// Little-endian, fixed-width: header (n, num_rows, num_columns,
    /// master_seed, round), then buckets row-major as (alpha, gamma).
    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(&self.params.n.to_le_bytes())?;
        w.write_all(&self.params.num_rows.to_le_bytes())?;
        w.write_all(&self.params.num_columns.to_le_bytes())?;
        w.write_all(&self.params.seed.master_seed.to_le_bytes())?;
        w.write_all(&self.params.seed.round.to_le_bytes())?;
        let rows = self.params.num_rows as usize;
        for row in 0..rows {
            for col in 0..self.params.num_columns as usize {
                let b = &self.buckets[col * rows + row];
                w.write_all(&b.alpha.to_le_bytes())?;
                w.write_all(&b.gamma.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.params.serialized_bytes());
        self.write_to(&mut out).expect("vec write cannot fail");
        out
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let n = read_u64(r)?;
        let num_rows = read_u32(r)?;
        let num_columns = read_u32(r)?;
        let master_seed = read_u64(r)?;
        let round = read_u32(r)?;
        let params = SketchParams::with_columns(
            n,
            num_columns,
            SketchSeed::for_round(master_seed, round),
        )?;
        if params.num_rows != num_rows {
            return Err(Error::InvalidParams(format!(
                "header claims {num_rows} rows, length {n} requires {}",
                params.num_rows
            )));
        }
        let mut sketch = Self::new(params);
        let rows = num_rows as usize;
        for row in 0..rows {
            for col in 0..num_columns as usize {
                let b = &mut sketch.buckets[col * rows + row];
                b.alpha = read_u64(r)?;
                b.gamma = read_u32(r)?;
            }
        }
        Ok(sketch)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        let sketch = Self::read_from(&mut cursor)?;
        if !cursor.is_empty() {
            return Err(Error::InvalidParams(format!(
                "{} trailing bytes after sketch",
                cursor.len()
            )));
        }
        Ok(sketch)
    }
}

impl PartialEq for CubeSketch {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params && self.buckets == other.buckets
    }
}

impl std::fmt::Debug for CubeSketch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CubeSketch")
            .field("params", &self.params)
            .field("nonzero_buckets", &self.buckets.iter().filter(|b| !b.is_zero()).count())
            .finish()
    }
}

pub(crate) fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

pub(crate) fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}
