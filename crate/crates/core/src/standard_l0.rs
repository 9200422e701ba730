//! Classic l0-sampler kept as the comparison baseline and cross-check.
//!
//! Buckets hold three accumulators instead of two XOR words: `a += idx *
//! delta`, `b += delta`, and a polynomial checksum `c += delta * r^idx mod
//! p` for a per-column base `r`. A bucket with a single live index `i` of
//! multiplicity `m` reads `(i*m, m, m*r^i)`, recognized by divisibility plus
//! the checksum congruence. Index routing (membership hash, geometric
//! depth) is identical to the cube sketch's, so the two samplers differ
//! only in bucket contents.
//!
//! Two word regimes: `W64` (i64/u64 accumulators, default prime 2^61 - 1)
//! while indices fit 32 bits, `W128` beyond that (i128/u128, default prime
//! 2^127 - 1). `p` is an arbitrary prime parameter greater than `n`, so
//! reduction is generic division — no structure in `p` is assumed. Every
//! update spends Theta(log idx) multiply/mod steps per column on the
//! modular exponentiation; `mod_mul_ops` counts them.

use crate::cubesketch::{ceil_log2, read_u32, read_u64, SketchParams};
use crate::hashing::{bucket_depth, hash64_keyed, HashPurpose, SketchSeed};
use crate::{Error, Result};
use std::io::{Read, Write};

pub const DEFAULT_P64: u64 = (1 << 61) - 1;
pub const DEFAULT_P128: u128 = u128::MAX >> 1; // 2^127 - 1

/// Indices above this need 128-bit accumulators and modulus.
pub const W64_MAX_LENGTH: u64 = 1 << 32;

pub const BUCKET_BYTES_W64: usize = 24;
pub const BUCKET_BYTES_W128: usize = 48;
pub const HEADER_BYTES: usize = 45;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WordRegime {
    W64,
    W128,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StdParams {
    n: u64,
    num_rows: u32,
    num_columns: u32,
    regime: WordRegime,
    p: u128,
    seed: SketchSeed,
}

impl StdParams {
    /// Default geometry for length `n`: same rows/columns as the cube
    /// sketch, regime and prime picked by `n`.
    pub fn new(n: u64, seed: SketchSeed) -> Result<Self> {
        let regime = if n <= W64_MAX_LENGTH { WordRegime::W64 } else { WordRegime::W128 };
        Self::with_regime(n, regime, seed)
    }

    pub fn with_regime(n: u64, regime: WordRegime, seed: SketchSeed) -> Result<Self> {
        let p = match regime {
            WordRegime::W64 => u128::from(DEFAULT_P64),
            WordRegime::W128 => DEFAULT_P128,
        };
        Self::with_modulus(n, regime, p, seed)
    }

    /// `p` must be an odd prime greater than `n`; primality is the
    /// caller's responsibility. W64 additionally needs `p < 2^63` so
    /// residues and accumulators fit their words.
    pub fn with_modulus(n: u64, regime: WordRegime, p: u128, seed: SketchSeed) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParams(format!(
                "vector length must be >= 2, got {n}"
            )));
        }
        if p <= u128::from(n) || p < 3 || p & 1 == 0 {
            return Err(Error::InvalidParams(format!(
                "modulus must be an odd prime > n, got p={p}, n={n}"
            )));
        }
        match regime {
            WordRegime::W64 => {
                if n > W64_MAX_LENGTH {
                    return Err(Error::InvalidParams(format!(
                        "length {n} exceeds the W64 regime; use W128"
                    )));
                }
                if p >= 1 << 63 {
                    return Err(Error::InvalidParams(format!(
                        "W64 modulus must be < 2^63, got {p}"
                    )));
                }
            }
            WordRegime::W128 => {
                if p >= 1 << 127 {
                    return Err(Error::InvalidParams(format!(
                        "W128 modulus must be < 2^127, got {p}"
                    )));
                }
            }
        }
        Ok(Self {
            n,
            num_rows: ceil_log2(n),
            num_columns: 7,
            regime,
            p,
            seed,
        })
    }

    /// Mirror an existing cube-sketch geometry (for size/speed comparisons
    /// at identical rows/columns).
    pub fn matching(cube: &SketchParams, regime: WordRegime) -> Result<Self> {
        let mut params = Self::with_regime(cube.n(), regime, cube.seed())?;
        params.num_rows = cube.num_rows();
        params.num_columns = cube.num_columns();
        Ok(params)
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

    pub fn regime(&self) -> WordRegime {
        self.regime
    }

    pub fn p(&self) -> u128 {
        self.p
    }

    pub fn seed(&self) -> SketchSeed {
        self.seed
    }

    pub fn bucket_bytes(&self) -> usize {
        match self.regime {
            WordRegime::W64 => BUCKET_BYTES_W64,
            WordRegime::W128 => BUCKET_BYTES_W128,
        }
    }

    pub fn payload_bytes(&self) -> usize {
        self.num_rows as usize * self.num_columns as usize * self.bucket_bytes()
    }

    pub fn serialized_bytes(&self) -> usize {
        HEADER_BYTES + self.payload_bytes()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StdBucket64 {
    pub a: i64,
    pub b: i64,
    pub c: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StdBucket128 {
    pub a: i128,
    pub b: i128,
    pub c: u128,
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Buckets {
    W64(Vec<StdBucket64>),
    W128(Vec<StdBucket128>),
}

/// Outcome of sampling: `Good` carries the index and its net multiplicity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StdSampleResult {
    Good { index: u64, value: i128 },
    ZeroVector,
    Fail,
}

#[derive(Debug, Clone)]
pub struct StdSketch {
    params: StdParams,
    membership_keys: Vec<u64>,
    /// Per-column exponentiation base in [1, p).
    r: Vec<u128>,
    buckets: Buckets,
    mod_mul_ops: u64,
}

impl StdSketch {
    pub fn new(params: StdParams) -> Self {
        let membership_keys: Vec<u64> = (0..params.num_columns)
            .map(|col| params.seed.hash_seed(HashPurpose::Membership, col).key())
            .collect();
        let r = (0..params.num_columns)
            .map(|col| {
                let key = params.seed.hash_seed(HashPurpose::BaselineResidue, col).key();
                let wide =
                    (u128::from(hash64_keyed(key, 0)) << 64) | u128::from(hash64_keyed(key, 1));
                1 + wide % (params.p - 1)
            })
            .collect();
        let len = (params.num_rows * params.num_columns) as usize;
        let buckets = match params.regime {
            WordRegime::W64 => Buckets::W64(vec![StdBucket64::default(); len]),
            WordRegime::W128 => Buckets::W128(vec![StdBucket128::default(); len]),
        };
        Self { params, membership_keys, r, buckets, mod_mul_ops: 0 }
    }

    pub fn params(&self) -> &StdParams {
        &self.params
    }

    /// Multiply/mod steps spent in modular exponentiation so far.
    /// Diagnostics only; not state, not serialized.
    pub fn mod_mul_ops(&self) -> u64 {
        self.mod_mul_ops
    }

    /// Applies `delta` to every index of a batch; equivalent to updating
    /// each in turn (addition commutes). Rejects the batch wholesale
    /// before touching any bucket. Counterpart of the cube sketch's bulk
    /// path so throughput comparisons drive both through one protocol;
    /// per-index cost stays dominated by the checksum exponentiation.
    pub fn update_many(&mut self, indices: &[u64], delta: i64) -> Result<()> {
        for &idx in indices {
            if idx >= self.params.n {
                return Err(Error::IndexOutOfRange { index: idx, len: self.params.n });
            }
        }
        for &idx in indices {
            self.update(idx, delta)?;
        }
        Ok(())
    }

    /// Adds `delta` to coordinate `idx`.
    pub fn update(&mut self, idx: u64, delta: i64) -> Result<()> {
        if idx >= self.params.n {
            return Err(Error::IndexOutOfRange { index: idx, len: self.params.n });
        }
        if delta == 0 {
            return Ok(());
        }
        let rows = self.params.num_rows;
        let cols = self.params.num_columns as usize;
        let p = self.params.p;
        for col in 0..cols {
            let depth = bucket_depth(hash64_keyed(self.membership_keys[col], idx), rows);
            match &mut self.buckets {
                Buckets::W64(buckets) => {
                    let p = p as u64;
                    let (pow, ops) = modpow64(self.r[col] as u64, idx, p);
                    self.mod_mul_ops += u64::from(ops);
                    let term = mulmod64(delta.rem_euclid(p as i64) as u64, pow, p);
                    self.mod_mul_ops += 1;
                    for row in 0..depth as usize {
                        let bkt = &mut buckets[row * cols + col];
                        bkt.a += idx as i64 * delta;
                        bkt.b += delta;
                        bkt.c = addmod64(bkt.c, term, p);
                    }
                }
                Buckets::W128(buckets) => {
                    let (pow, ops) = modpow128(self.r[col], idx, p);
                    self.mod_mul_ops += u64::from(ops);
                    let term = mulmod128(i128::from(delta).rem_euclid(p as i128) as u128, pow, p);
                    self.mod_mul_ops += 1;
                    for row in 0..depth as usize {
                        let bkt = &mut buckets[row * cols + col];
                        bkt.a += i128::from(idx) * i128::from(delta);
                        bkt.b += i128::from(delta);
                        bkt.c = addmod128(bkt.c, term, p);
                    }
                }
            }
        }
        Ok(())
    }

    /// First bucket (column-major, shallow rows first) whose contents are
    /// consistent with a single live index wins.
    pub fn sample(&mut self) -> StdSampleResult {
        let rows = self.params.num_rows as usize;
        let cols = self.params.num_columns as usize;
        let n = self.params.n;
        let p = self.params.p;
        let mut all_zero = true;
        for col in 0..cols {
            for row in 0..rows {
                let (a, b, c) = match &self.buckets {
                    Buckets::W64(bkts) => {
                        let bkt = bkts[row * cols + col];
                        (i128::from(bkt.a), i128::from(bkt.b), u128::from(bkt.c))
                    }
                    Buckets::W128(bkts) => {
                        let bkt = bkts[row * cols + col];
                        (bkt.a, bkt.b, bkt.c)
                    }
                };
                if a == 0 && b == 0 && c == 0 {
                    continue;
                }
                all_zero = false;
                if b == 0 || a % b != 0 {
                    continue;
                }
                let q = a / b;
                if q < 0 || q as u128 >= u128::from(n) {
                    continue;
                }
                let (pow, ops) = modpow128(self.r[col], q as u64 as u64, p);
                self.mod_mul_ops += u64::from(ops);
                let expect = mulmod128(b.rem_euclid(p as i128) as u128, pow, p);
                self.mod_mul_ops += 1;
                if expect == c {
                    return StdSampleResult::Good { index: q as u64, value: b };
                }
            }
        }
        if all_zero {
            StdSampleResult::ZeroVector
        } else {
            StdSampleResult::Fail
        }
    }

    pub fn is_zero(&self) -> bool {
        match &self.buckets {
            Buckets::W64(b) => b.iter().all(|x| *x == StdBucket64::default()),
            Buckets::W128(b) => b.iter().all(|x| *x == StdBucket128::default()),
        }
    }

    pub fn merge_from(&mut self, other: &Self) -> Result<()> {
        if self.params != other.params {
            return Err(Error::Mismatch(format!(
                "cannot merge sketches with different params: {:?} vs {:?}",
                self.params, other.params
            )));
        }
        let p = self.params.p;
        match (&mut self.buckets, &other.buckets) {
            (Buckets::W64(xs), Buckets::W64(ys)) => {
                for (x, y) in xs.iter_mut().zip(ys) {
                    x.a += y.a;
                    x.b += y.b;
                    x.c = addmod64(x.c, y.c, p as u64);
                }
            }
            (Buckets::W128(xs), Buckets::W128(ys)) => {
                for (x, y) in xs.iter_mut().zip(ys) {
                    x.a += y.a;
                    x.b += y.b;
                    x.c = addmod128(x.c, y.c, p);
                }
            }
            _ => unreachable!("regime equality is part of params equality"),
        }
        Ok(())
    }

    pub fn merged(a: &Self, b: &Self) -> Result<Self> {
        let mut out = a.clone();
        out.merge_from(b)?;
        Ok(out)
    }

    /// Same layout discipline as the cube sketch: fixed little-endian
    /// header, then buckets row-major.
    pub fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(&self.params.n.to_le_bytes())?;
        w.write_all(&self.params.num_rows.to_le_bytes())?;
        w.write_all(&self.params.num_columns.to_le_bytes())?;
        w.write_all(&self.params.seed.master_seed.to_le_bytes())?;
        w.write_all(&self.params.seed.round.to_le_bytes())?;
        w.write_all(&[match self.params.regime {
            WordRegime::W64 => 0u8,
            WordRegime::W128 => 1u8,
        }])?;
        w.write_all(&self.params.p.to_le_bytes())?;
        match &self.buckets {
            Buckets::W64(buckets) => {
                for b in buckets {
                    w.write_all(&b.a.to_le_bytes())?;
                    w.write_all(&b.b.to_le_bytes())?;
                    w.write_all(&b.c.to_le_bytes())?;
                }
            }
            Buckets::W128(buckets) => {
                for b in buckets {
                    w.write_all(&b.a.to_le_bytes())?;
                    w.write_all(&b.b.to_le_bytes())?;
                    w.write_all(&b.c.to_le_bytes())?;
                }
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
        let mut flag = [0u8; 1];
        r.read_exact(&mut flag)?;
        let regime = match flag[0] {
            0 => WordRegime::W64,
            1 => WordRegime::W128,
            other => {
                return Err(Error::InvalidParams(format!("unknown regime flag {other}")))
            }
        };
        let p = read_u128(r)?;
        let mut params =
            StdParams::with_modulus(n, regime, p, SketchSeed::for_round(master_seed, round))?;
        params.num_rows = num_rows;
        params.num_columns = num_columns;
        if params.num_rows == 0 || params.num_columns == 0 {
            return Err(Error::InvalidParams("empty bucket grid".into()));
        }
        let mut sketch = Self::new(params);
        match &mut sketch.buckets {
            Buckets::W64(buckets) => {
                for b in buckets {
                    b.a = read_u64(r)? as i64;
                    b.b = read_u64(r)? as i64;
                    b.c = read_u64(r)?;
                }
            }
            Buckets::W128(buckets) => {
                for b in buckets {
                    b.a = read_u128(r)? as i128;
                    b.b = read_u128(r)? as i128;
                    b.c = read_u128(r)?;
                }
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

impl PartialEq for StdSketch {
    fn eq(&self, other: &Self) -> bool {
        self.params == other.params && self.buckets == other.buckets
    }
}

fn read_u128<R: Read>(r: &mut R) -> Result<u128> {
    let mut buf = [0u8; 16];
    r.read_exact(&mut buf)?;
    Ok(u128::from_le_bytes(buf))
}

#[inline]
fn addmod64(x: u64, y: u64, p: u64) -> u64 {
    let s = x + y; // x, y < p < 2^63: no overflow
    if s >= p {
        s - p
    } else {
        s
    }
}

#[inline]
fn addmod128(x: u128, y: u128, p: u128) -> u128 {
    let s = x + y; // x, y < p < 2^127: no overflow
    if s >= p {
        s - p
    } else {
        s
    }
}

#[inline]
fn mulmod64(x: u64, y: u64, p: u64) -> u64 {
    (u128::from(x) * u128::from(y) % u128::from(p)) as u64
}

/// Square-and-multiply; returns (base^exp mod p, multiply/mod steps).
fn modpow64(base: u64, exp: u64, p: u64) -> (u64, u32) {
    let mut result = 1 % p;
    let mut b = base % p;
    let mut e = exp;
    let mut ops = 0;
    while e > 0 {
        if e & 1 == 1 {
            result = mulmod64(result, b, p);
            ops += 1;
        }
        e >>= 1;
        if e > 0 {
            b = mulmod64(b, b, p);
            ops += 1;
        }
    }
    (result, ops)
}

/// (x * y) mod p for 128-bit operands: full 256-bit product, then generic
/// long division (binary restoring; p carries no exploitable structure).
fn mulmod128(x: u128, y: u128, p: u128) -> u128 {
    let [l0, l1, l2, l3] = mul_128_to_256(x, y);
    let hi = (u128::from(l3) << 64) | u128::from(l2);
    let lo = (u128::from(l1) << 64) | u128::from(l0);
    let mut rem = hi % p;
    // Fold in the low 128 bits one at a time. rem < p < 2^127, so the
    // shift cannot overflow.
    for i in (0..128).rev() {
        rem = (rem << 1) | ((lo >> i) & 1);
        if rem >= p {
            rem -= p;
        }
    }
    rem
}

fn modpow128(base: u128, exp: u64, p: u128) -> (u128, u32) {
    let mut result = 1 % p;
    let mut b = base % p;
    let mut e = exp;
    let mut ops = 0;
    while e > 0 {
        if e & 1 == 1 {
            result = mulmod128(result, b, p);
            ops += 1;
        }
        e >>= 1;
        if e > 0 {
            b = mulmod128(b, b, p);
            ops += 1;
        }
    }
    (result, ops)
}

/// 128x128 -> 256-bit multiply, little-endian u64 limbs.
fn mul_128_to_256(x: u128, y: u128) -> [u64; 4] {
    let (x0, x1) = (x as u64, (x >> 64) as u64);
    let (y0, y1) = (y as u64, (y >> 64) as u64);
    let p00 = u128::from(x0) * u128::from(y0);
    let p01 = u128::from(x0) * u128::from(y1);
    let p10 = u128::from(x1) * u128::from(y0);
    let p11 = u128::from(x1) * u128::from(y1);
    let limb0 = p00 as u64;
    let t1 = (p00 >> 64) + u128::from(p01 as u64) + u128::from(p10 as u64);
    let limb1 = t1 as u64;
    let t2 = (t1 >> 64) + (p01 >> 64) + (p10 >> 64) + u128::from(p11 as u64);
    let limb2 = t2 as u64;
    let limb3 = ((t2 >> 64) + (p11 >> 64)) as u64;
    [limb0, limb1, limb2, limb3]
}
