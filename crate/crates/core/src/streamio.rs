//! Stream files, the graph-to-stream synthesizer, a dense-graph
//! generator, and the exact adjacency oracle used to check the engine.
//!
//! A stream is a header (node count, update count) followed by insert and
//! delete records. Validity is the usual dynamic-graph rule: an edge may
//! be inserted only while absent and deleted only while present, so the
//! multiset of live edges is always a simple graph. The synthesizer turns
//! a target graph into a valid stream with churn (edges that come and go)
//! and an optional set of nodes whose edges are all retracted by the end.

use crate::graph_engine::{partition_of, Dsu};
use crate::{Error, Result};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const STREAM_MAGIC: [u8; 8] = *b"SKCCSTRM";
pub const STREAM_VERSION: u32 = 1;
pub const HEADER_BYTES: u64 = 24;
pub const RECORD_BYTES: u64 = 9;

const OP_INSERT: u8 = 1;
const OP_DELETE: u8 = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum UpdateOp {
    Insert,
    Delete,
}

/// One stream record: toggle edge (u, v).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamUpdate {
    pub op: UpdateOp,
    pub u: u32,
    pub v: u32,
}

impl StreamUpdate {
    pub fn insert(u: u32, v: u32) -> Self {
        Self { op: UpdateOp::Insert, u, v }
    }

    pub fn delete(u: u32, v: u32) -> Self {
        Self { op: UpdateOp::Delete, u, v }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamHeader {
    pub num_nodes: u32,
    pub num_updates: u64,
}

// ---------------------------------------------------------------------
// Edge sets
// ---------------------------------------------------------------------

/// Membership bitset over the C(V,2) unordered node pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeSet {
    num_nodes: u32,
    bits: Vec<u64>,
    len: u64,
}

impl EdgeSet {
    pub fn new(num_nodes: u32) -> Self {
        let slots = u64::from(num_nodes) * u64::from(num_nodes.saturating_sub(1)) / 2;
        Self {
            num_nodes,
            bits: vec![0; slots.div_ceil(64) as usize],
            len: 0,
        }
    }

    pub fn num_nodes(&self) -> u32 {
        self.num_nodes
    }

    /// Live edge count.
    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Row-major rank of pair (min, max) in the upper triangle.
    fn slot(&self, u: u32, v: u32) -> u64 {
        debug_assert!(u != v && u < self.num_nodes && v < self.num_nodes);
        let (a, b) = if u < v { (u, v) } else { (v, u) };
        let (a64, v64) = (u64::from(a), u64::from(self.num_nodes));
        // Pairs in rows before a, then offset within row a. The product
        // fits: a < V <= 2^32 keeps it under 2^64 via u128.
        let before = (u128::from(a64) * u128::from(2 * v64 - a64 - 1) / 2) as u64;
        before + u64::from(b - a) - 1
    }

    pub fn contains(&self, u: u32, v: u32) -> bool {
        let s = self.slot(u, v);
        self.bits[(s / 64) as usize] >> (s % 64) & 1 == 1
    }

    /// Returns false if the edge was already present.
    pub fn insert(&mut self, u: u32, v: u32) -> bool {
        let s = self.slot(u, v);
        let word = &mut self.bits[(s / 64) as usize];
        let mask = 1u64 << (s % 64);
        if *word & mask != 0 {
            return false;
        }
        *word |= mask;
        self.len += 1;
        true
    }

    /// Returns false if the edge was absent.
    pub fn remove(&mut self, u: u32, v: u32) -> bool {
        let s = self.slot(u, v);
        let word = &mut self.bits[(s / 64) as usize];
        let mask = 1u64 << (s % 64);
        if *word & mask == 0 {
            return false;
        }
        *word &= !mask;
        self.len -= 1;
        true
    }

    /// Set edges in (min, max) slot order.
    pub fn iter(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        let v = self.num_nodes;
        (0..v).flat_map(move |a| {
            (a + 1..v).filter_map(move |b| self.contains(a, b).then_some((a, b)))
        })
    }
}

/// Scans a stream for validity (ids in range, no self-loops, insert only
/// while absent, delete only while present) and returns the final edge
/// set. `position` in errors is the zero-based update index.
pub fn validate_stream<I>(num_nodes: u32, updates: I) -> Result<EdgeSet>
where
    I: IntoIterator<Item = StreamUpdate>,
{
    let mut edges = EdgeSet::new(num_nodes);
    for (position, upd) in updates.into_iter().enumerate() {
        let position = position as u64;
        apply_checked(&mut edges, upd, position)?;
    }
    Ok(edges)
}

fn apply_checked(edges: &mut EdgeSet, upd: StreamUpdate, position: u64) -> Result<()> {
    let v = edges.num_nodes();
    if upd.u == upd.v {
        return Err(Error::StreamValidity {
            position,
            msg: format!("self-loop on node {}", upd.u),
        });
    }
    if upd.u >= v || upd.v >= v {
        return Err(Error::StreamValidity {
            position,
            msg: format!("node id out of range: ({}, {}) with {v} nodes", upd.u, upd.v),
        });
    }
    let ok = match upd.op {
        UpdateOp::Insert => edges.insert(upd.u, upd.v),
        UpdateOp::Delete => edges.remove(upd.u, upd.v),
    };
    if !ok {
        let state = match upd.op {
            UpdateOp::Insert => "already present",
            UpdateOp::Delete => "not present",
        };
        return Err(Error::StreamValidity {
            position,
            msg: format!("{:?} of edge ({}, {}) {state}", upd.op, upd.u, upd.v),
        });
    }
    Ok(())
}

// ---------------------------------------------------------------------
// Adjacency oracle
// ---------------------------------------------------------------------

/// Exact mirror of the dynamic graph: a bit per node pair plus a
/// union-find sweep for components. The slow, trusted reference the
/// sketch engine is checked against.
#[derive(Debug, Clone)]
pub struct AdjacencyOracle {
    edges: EdgeSet,
    applied: u64,
}

impl AdjacencyOracle {
    pub fn new(num_nodes: u32) -> Self {
        Self { edges: EdgeSet::new(num_nodes), applied: 0 }
    }

    pub fn num_nodes(&self) -> u32 {
        self.edges.num_nodes()
    }

    pub fn num_edges(&self) -> u64 {
        self.edges.len()
    }

    pub fn contains(&self, u: u32, v: u32) -> bool {
        self.edges.contains(u, v)
    }

    /// Applies one update, rejecting anything stream-invalid.
    pub fn apply(&mut self, upd: StreamUpdate) -> Result<()> {
        apply_checked(&mut self.edges, upd, self.applied)?;
        self.applied += 1;
        Ok(())
    }

    pub fn edges(&self) -> &EdgeSet {
        &self.edges
    }

    /// `partition[v]` = smallest node id in v's component.
    pub fn components(&self) -> Vec<u32> {
        let v = self.edges.num_nodes();
        let mut dsu = Dsu::new(v);
        for (a, b) in self.edges.iter() {
            dsu.union(a, b);
        }
        partition_of(&mut dsu, v)
    }
}

// ---------------------------------------------------------------------
// Stream synthesis
// ---------------------------------------------------------------------

/// Most nodes a synthesized stream may leave disconnected.
pub const MAX_DISCONNECT: u32 = 150;

pub struct SynthesizedStream {
    pub updates: Vec<StreamUpdate>,
    /// Nodes whose incident final-graph edges were all retracted; isolated
    /// once the stream ends.
    pub disconnected: Vec<u32>,
    /// Edges live after the last update.
    pub final_edges: u64,
}

struct TimedUpdate {
    ts: u64,
    u: u32,
    v: u32,
    seq: u32,
    op: UpdateOp,
}

/// Turns `final_graph` into a valid update stream.
///
/// Every node pair gets an alternating op sequence I, D, I, D, ...; its
/// length is odd exactly when the pair should survive (a final-graph edge
/// not incident to a disconnected node), with `churn` expected extra
/// insert/delete pairs prepended per pair. Each sequence gets increasing
/// random timestamps and the whole thing is sorted globally, which
/// interleaves pairs while preserving per-pair order, so insert-before-
/// delete and strict alternation hold by construction and the final graph
/// is fixed by parity.
pub fn synthesize_stream(
    final_graph: &EdgeSet,
    seed: u64,
    churn: f64,
    disconnect_count: u32,
) -> Result<SynthesizedStream> {
    let num_nodes = final_graph.num_nodes();
    if num_nodes < 2 {
        return Err(Error::InvalidParams("need at least 2 nodes".into()));
    }
    if !(churn.is_finite() && churn >= 0.0) {
        return Err(Error::InvalidParams(format!("churn must be >= 0, got {churn}")));
    }
    if disconnect_count > MAX_DISCONNECT || disconnect_count > num_nodes {
        return Err(Error::InvalidParams(format!(
            "disconnect_count {disconnect_count} exceeds limit {}",
            MAX_DISCONNECT.min(num_nodes)
        )));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);

    let mut disconnected: Vec<u32> = sample(&mut rng, num_nodes as usize, disconnect_count as usize)
        .into_iter()
        .map(|i| i as u32)
        .collect();
    disconnected.sort_unstable();
    let mut is_disconnected = vec![false; num_nodes as usize];
    for &d in &disconnected {
        is_disconnected[d as usize] = true;
    }

    let mut timed: Vec<TimedUpdate> = Vec::new();
    let mut final_edges = 0u64;
    // P(another churn pair); mean churn pairs per slot.
    let p_more = churn / (1.0 + churn);
    let mut emit_slot = |rng: &mut ChaCha12Rng, timed: &mut Vec<TimedUpdate>, u: u32, v: u32| {
        let survives = final_graph.contains(u, v)
            && !is_disconnected[u as usize]
            && !is_disconnected[v as usize];
        let mut pairs = 0u32;
        while p_more > 0.0 && rng.random::<f64>() < p_more {
            pairs += 1;
        }
        let ops = 2 * pairs + u32::from(survives);
        if ops == 0 {
            return;
        }
        if survives {
            final_edges += 1;
        }
        let mut stamps: Vec<u64> = (0..ops).map(|_| rng.random()).collect();
        stamps.sort_unstable();
        for (seq, ts) in stamps.into_iter().enumerate() {
            let op = if seq % 2 == 0 { UpdateOp::Insert } else { UpdateOp::Delete };
            timed.push(TimedUpdate { ts, u, v, seq: seq as u32, op });
        }
    };

    if churn > 0.0 {
        // Churn can touch any pair, so every slot draws.
        for u in 0..num_nodes - 1 {
            for v in u + 1..num_nodes {
                emit_slot(&mut rng, &mut timed, u, v);
            }
        }
    } else {
        for (u, v) in final_graph.iter() {
            emit_slot(&mut rng, &mut timed, u, v);
        }
    }

    // Ties broken by slot then sequence; any total order keyed on (u, v,
    // seq) after ts preserves per-slot order.
    timed.sort_unstable_by_key(|t| (t.ts, t.u, t.v, t.seq));
    let updates = timed
        .into_iter()
        .map(|t| StreamUpdate { op: t.op, u: t.u, v: t.v })
        .collect();
    Ok(SynthesizedStream { updates, disconnected, final_edges })
}

// ---------------------------------------------------------------------
// Dense graph generation
// ---------------------------------------------------------------------

/// Samples a simple undirected graph of roughly `edge_probability *
/// C(V,2)` edges by recursive quadrant descent: each level picks a
/// quadrant of the adjacency matrix with the skewed weights, biasing mass
/// toward low node ids. Self-loops are redrawn and duplicates skipped;
/// if the skew starves some region the remainder is filled by scanning
/// free slots, keeping the edge count exact.
pub fn generate_dense_graph(
    num_nodes: u32,
    edge_probability: f64,
    skew: f64,
    seed: u64,
) -> Result<EdgeSet> {
    if num_nodes < 2 {
        return Err(Error::InvalidParams("need at least 2 nodes".into()));
    }
    if !num_nodes.is_power_of_two() {
        return Err(Error::InvalidParams(format!(
            "node count must be a power of two, got {num_nodes}"
        )));
    }
    if !(edge_probability > 0.0 && edge_probability <= 1.0) {
        return Err(Error::InvalidParams(format!(
            "edge probability must lie in (0, 1], got {edge_probability}"
        )));
    }
    if !(0.0..=0.2).contains(&skew) {
        return Err(Error::InvalidParams(format!(
            "skew must lie in [0, 0.2], got {skew}"
        )));
    }
    let slots = u64::from(num_nodes) * u64::from(num_nodes - 1) / 2;
    let target = ((edge_probability * slots as f64).round() as u64).clamp(1, slots);

    // Quadrant weights (a, b, c, d) as cumulative u32 thresholds.
    let a = 0.25 + skew;
    let b = 0.25;
    let c = 0.25;
    let scale = |x: f64| (x * 2f64.powi(32)) as u64;
    let (ta, tb, tc) = (scale(a), scale(a + b), scale(a + b + c));

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut edges = EdgeSet::new(num_nodes);
    let levels = num_nodes.trailing_zeros();
    // Uniform coupon collection needs ~1.4x target attempts at p = 1/2;
    // 8x bounds the duplicate-heavy tail under skew without stalling.
    let max_attempts = 8 * target;
    let mut attempts = 0u64;
    while edges.len() < target && attempts < max_attempts {
        attempts += 1;
        let (mut u, mut v) = (0u32, 0u32);
        for _ in 0..levels {
            let r = u64::from(rng.random::<u32>());
            let (ubit, vbit) = if r < ta {
                (0, 0)
            } else if r < tb {
                (0, 1)
            } else if r < tc {
                (1, 0)
            } else {
                (1, 1)
            };
            u = u << 1 | ubit;
            v = v << 1 | vbit;
        }
        if u != v {
            edges.insert(u, v);
        }
    }
    // Deterministic fill for whatever the skewed sampler starved.
    'fill: for u in 0..num_nodes - 1 {
        if edges.len() >= target {
            break 'fill;
        }
        for v in u + 1..num_nodes {
            if edges.len() >= target {
                break 'fill;
            }
            edges.insert(u, v);
        }
    }
    Ok(edges)
}

// ---------------------------------------------------------------------
// Binary stream files
// ---------------------------------------------------------------------

fn parse_err(offset: u64, msg: impl Into<String>) -> Error {
    Error::StreamParse { offset, msg: msg.into() }
}

/// Writes header plus records; N is taken from the slice length.
pub fn write_stream(path: &Path, num_nodes: u32, updates: &[StreamUpdate]) -> Result<()> {
    if num_nodes < 2 {
        return Err(Error::InvalidParams("stream header needs >= 2 nodes".into()));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(&STREAM_MAGIC)?;
    w.write_all(&STREAM_VERSION.to_le_bytes())?;
    w.write_all(&num_nodes.to_le_bytes())?;
    w.write_all(&(updates.len() as u64).to_le_bytes())?;
    for upd in updates {
        let op = match upd.op {
            UpdateOp::Insert => OP_INSERT,
            UpdateOp::Delete => OP_DELETE,
        };
        w.write_all(&[op])?;
        w.write_all(&upd.u.to_le_bytes())?;
        w.write_all(&upd.v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// Streaming reader; constant memory, yields one update at a time.
pub struct StreamReader {
    header: StreamHeader,
    inner: BufReader<File>,
    next: u64,
}

impl StreamReader {
    pub fn open(path: &Path) -> Result<Self> {
        let file = File::open(path)?;
        let body = file.metadata()?.len().saturating_sub(HEADER_BYTES);
        let mut inner = BufReader::new(file);

        let mut head = [0u8; HEADER_BYTES as usize];
        inner
            .read_exact(&mut head)
            .map_err(|_| parse_err(0, "file shorter than the 24-byte header"))?;
        if head[..8] != STREAM_MAGIC {
            return Err(parse_err(0, "bad magic, not a stream file"));
        }
        let version = u32::from_le_bytes(head[8..12].try_into().unwrap());
        if version != STREAM_VERSION {
            return Err(parse_err(8, format!("unsupported version {version}")));
        }
        let num_nodes = u32::from_le_bytes(head[12..16].try_into().unwrap());
        if num_nodes < 2 {
            return Err(parse_err(12, format!("node count {num_nodes} below 2")));
        }
        let num_updates = u64::from_le_bytes(head[16..24].try_into().unwrap());
        if body != num_updates * RECORD_BYTES {
            return Err(parse_err(
                HEADER_BYTES + body - body % RECORD_BYTES,
                format!(
                    "body is {body} bytes, header promises {} ({num_updates} records)",
                    num_updates * RECORD_BYTES
                ),
            ));
        }
        Ok(Self { header: StreamHeader { num_nodes, num_updates }, inner, next: 0 })
    }

    pub fn header(&self) -> StreamHeader {
        self.header
    }
}

impl Iterator for StreamReader {
    type Item = Result<StreamUpdate>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.next >= self.header.num_updates {
            return None;
        }
        let offset = HEADER_BYTES + self.next * RECORD_BYTES;
        self.next += 1;
        let mut rec = [0u8; RECORD_BYTES as usize];
        if let Err(e) = self.inner.read_exact(&mut rec) {
            return Some(Err(parse_err(offset, format!("short read: {e}"))));
        }
        let op = match rec[0] {
            OP_INSERT => UpdateOp::Insert,
            OP_DELETE => UpdateOp::Delete,
            other => return Some(Err(parse_err(offset, format!("bad op byte {other:#04x}")))),
        };
        Some(Ok(StreamUpdate {
            op,
            u: u32::from_le_bytes(rec[1..5].try_into().unwrap()),
            v: u32::from_le_bytes(rec[5..9].try_into().unwrap()),
        }))
    }
}

pub fn read_stream(path: &Path) -> Result<(StreamHeader, Vec<StreamUpdate>)> {
    let reader = StreamReader::open(path)?;
    let header = reader.header();
    let updates = reader.collect::<Result<Vec<_>>>()?;
    Ok((header, updates))
}

// ---------------------------------------------------------------------
// Text codec
// ---------------------------------------------------------------------

/// Debug codec: header line "V N", then one "I u v" or "D u v" per line.
pub fn write_text_stream<W: Write>(
    mut w: W,
    num_nodes: u32,
    updates: &[StreamUpdate],
) -> Result<()> {
    writeln!(w, "{num_nodes} {}", updates.len())?;
    for upd in updates {
        let tag = match upd.op {
            UpdateOp::Insert => 'I',
            UpdateOp::Delete => 'D',
        };
        writeln!(w, "{tag} {} {}", upd.u, upd.v)?;
    }
    Ok(())
}

/// Errors carry the byte offset of the offending line.
pub fn read_text_stream<R: BufRead>(mut r: R) -> Result<(StreamHeader, Vec<StreamUpdate>)> {
    let mut line = String::new();
    let mut offset = 0u64;
    r.read_line(&mut line)?;
    let mut head = line.split_whitespace();
    let num_nodes: u32 = head
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_err(0, "header line must be \"V N\""))?;
    let num_updates: u64 = head
        .next()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| parse_err(0, "header line must be \"V N\""))?;
    if head.next().is_some() {
        return Err(parse_err(0, "trailing tokens on header line"));
    }
    if num_nodes < 2 {
        return Err(parse_err(0, format!("node count {num_nodes} below 2")));
    }
    offset += line.len() as u64;

    let mut updates = Vec::new();
    loop {
        line.clear();
        if r.read_line(&mut line)? == 0 {
            break;
        }
        if line.trim().is_empty() {
            offset += line.len() as u64;
            continue;
        }
        let mut toks = line.split_whitespace();
        let op = match toks.next() {
            Some("I") => UpdateOp::Insert,
            Some("D") => UpdateOp::Delete,
            other => {
                return Err(parse_err(offset, format!("expected I or D, got {other:?}")));
            }
        };
        let mut id = |name: &str| -> Result<u32> {
            toks.next()
                .and_then(|t| t.parse().ok())
                .ok_or_else(|| parse_err(offset, format!("missing or bad node id {name}")))
        };
        let (u, v) = (id("u")?, id("v")?);
        if toks.next().is_some() {
            return Err(parse_err(offset, "trailing tokens on update line"));
        }
        updates.push(StreamUpdate { op, u, v });
        offset += line.len() as u64;
    }
    if updates.len() as u64 != num_updates {
        return Err(parse_err(
            offset,
            format!("header promises {num_updates} updates, found {}", updates.len()),
        ));
    }
    Ok((StreamHeader { num_nodes, num_updates }, updates))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::{HashSet, VecDeque};

    // -- edge set ------------------------------------------------------

    #[test]
    fn edge_set_slots_are_a_bijection() {
        let v = 37u32;
        let set = EdgeSet::new(v);
        let mut seen = HashSet::new();
        for a in 0..v {
            for b in a + 1..v {
                let s = set.slot(a, b);
                assert_eq!(s, set.slot(b, a), "slot must ignore orientation");
                assert!(seen.insert(s), "slot collision at ({a}, {b})");
                assert!(s < u64::from(v) * u64::from(v - 1) / 2);
            }
        }
        assert_eq!(seen.len() as u64, u64::from(v) * u64::from(v - 1) / 2);
    }

    #[test]
    fn edge_set_toggles_and_counts() {
        let mut set = EdgeSet::new(8);
        assert!(set.insert(3, 5));
        assert!(!set.insert(5, 3), "reinsert must report already-present");
        assert!(set.contains(5, 3));
        assert_eq!(set.len(), 1);
        assert!(set.remove(3, 5));
        assert!(!set.remove(3, 5));
        assert!(set.is_empty());
        assert_eq!(set.iter().count(), 0);
    }

    // -- validity ------------------------------------------------------

    #[test]
    fn validity_scan_accepts_legal_and_pinpoints_illegal() {
        let v = 8;
        let good = vec![
            StreamUpdate::insert(0, 1),
            StreamUpdate::insert(1, 2),
            StreamUpdate::delete(0, 1),
            StreamUpdate::insert(0, 1),
        ];
        let set = validate_stream(v, good).unwrap();
        assert_eq!(set.len(), 2);

        let double_insert = vec![StreamUpdate::insert(0, 1), StreamUpdate::insert(1, 0)];
        match validate_stream(v, double_insert) {
            Err(Error::StreamValidity { position: 1, .. }) => {}
            other => panic!("expected validity error at 1, got {other:?}"),
        }
        match validate_stream(v, vec![StreamUpdate::delete(2, 3)]) {
            Err(Error::StreamValidity { position: 0, .. }) => {}
            other => panic!("expected validity error at 0, got {other:?}"),
        }
        assert!(validate_stream(v, vec![StreamUpdate::insert(4, 4)]).is_err());
        assert!(validate_stream(v, vec![StreamUpdate::insert(0, 8)]).is_err());
    }

    // -- oracle --------------------------------------------------------

    #[test]
    fn empty_oracle_is_all_singletons() {
        let oracle = AdjacencyOracle::new(5);
        assert_eq!(oracle.components(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn oracle_merges_on_insert() {
        let mut oracle = AdjacencyOracle::new(4);
        oracle.apply(StreamUpdate::insert(0, 1)).unwrap();
        assert_eq!(oracle.components(), vec![0, 0, 2, 3]);
        assert!(oracle.apply(StreamUpdate::insert(1, 0)).is_err());
    }

    /// Independent reference: BFS over an adjacency list rebuilt from
    /// scratch, no bitsets or union-find involved.
    fn bfs_partition(v: u32, edges: &[(u32, u32)]) -> Vec<u32> {
        let mut adj = vec![Vec::new(); v as usize];
        for &(a, b) in edges {
            adj[a as usize].push(b);
            adj[b as usize].push(a);
        }
        let mut label = vec![u32::MAX; v as usize];
        for start in 0..v {
            if label[start as usize] != u32::MAX {
                continue;
            }
            let mut queue = VecDeque::from([start]);
            label[start as usize] = start;
            while let Some(x) = queue.pop_front() {
                for &y in &adj[x as usize] {
                    if label[y as usize] == u32::MAX {
                        label[y as usize] = start;
                        queue.push_back(y);
                    }
                }
            }
        }
        label
    }

    #[test]
    fn oracle_partition_matches_bfs_reference() {
        let v = 128u32;
        let mut oracle = AdjacencyOracle::new(v);
        let mut live = HashSet::new();
        let mut state = 99u64;
        let mut step = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            state >> 32
        };
        for _ in 0..10_000 {
            let a = (step() % u64::from(v)) as u32;
            let mut b = (step() % u64::from(v)) as u32;
            if a == b {
                b = (b + 1) % v;
            }
            let key = (a.min(b), a.max(b));
            let upd = if live.contains(&key) {
                live.remove(&key);
                StreamUpdate::delete(a, b)
            } else {
                live.insert(key);
                StreamUpdate::insert(a, b)
            };
            oracle.apply(upd).unwrap();
        }
        let edges: Vec<(u32, u32)> = live.iter().copied().collect();
        assert_eq!(oracle.num_edges() as usize, edges.len());
        assert_eq!(oracle.components(), bfs_partition(v, &edges));
    }

    // -- synthesis -----------------------------------------------------

    #[test]
    fn single_edge_churn_free_stream_is_one_insert() {
        let mut g = EdgeSet::new(2);
        g.insert(0, 1);
        let out = synthesize_stream(&g, 7, 0.0, 0).unwrap();
        assert_eq!(out.updates, vec![StreamUpdate::insert(0, 1)]);
        assert_eq!(out.final_edges, 1);
        assert!(out.disconnected.is_empty());
    }

    #[test]
    fn churn_prepends_alternating_insert_delete_pairs() {
        let mut g = EdgeSet::new(2);
        g.insert(0, 1);
        // Some seed draws exactly one churn pair; the slot then reads
        // I, D, I in stream order.
        let mut seen_three = false;
        for seed in 0..64 {
            let out = synthesize_stream(&g, seed, 1.0, 0).unwrap();
            assert_eq!(out.updates.len() % 2, 1, "parity must stay odd");
            for (i, upd) in out.updates.iter().enumerate() {
                let want = if i % 2 == 0 { UpdateOp::Insert } else { UpdateOp::Delete };
                assert_eq!(upd.op, want, "alternation broken at {i} (seed {seed})");
            }
            validate_stream(2, out.updates.iter().copied()).unwrap();
            if out.updates.len() == 3 {
                seen_three = true;
            }
        }
        assert!(seen_three, "no seed produced exactly one churn pair");
    }

    #[test]
    fn replay_recovers_final_graph_and_validity_holds() {
        let v = 64u32;
        let g = generate_dense_graph(v, 0.3, 0.05, 11).unwrap();
        let out = synthesize_stream(&g, 5, 0.8, 0).unwrap();
        let replayed = validate_stream(v, out.updates.iter().copied()).unwrap();
        assert_eq!(replayed, g, "stream must replay to the declared graph");
        assert_eq!(out.final_edges, g.len());
        assert!(out.updates.len() as u64 >= g.len());
        // Churn 0.8 over all slots should add plenty of extra pairs.
        assert!(out.updates.len() as u64 > g.len());
    }

    #[test]
    fn disconnected_nodes_end_up_isolated() {
        let v = 64u32;
        let g = generate_dense_graph(v, 0.4, 0.0, 3).unwrap();
        let out = synthesize_stream(&g, 21, 0.2, 5).unwrap();
        assert_eq!(out.disconnected.len(), 5);
        let mut oracle = AdjacencyOracle::new(v);
        for upd in &out.updates {
            oracle.apply(*upd).unwrap();
        }
        assert_eq!(oracle.num_edges(), out.final_edges);
        let parts = oracle.components();
        for &d in &out.disconnected {
            assert_eq!(parts[d as usize], d, "node {d} still attached");
            for x in 0..v {
                if x != d {
                    assert!(!oracle.contains(d, x));
                }
            }
        }
    }

    #[test]
    fn synthesis_is_deterministic_and_validates_inputs() {
        let g = generate_dense_graph(32, 0.5, 0.05, 2).unwrap();
        let a = synthesize_stream(&g, 9, 0.5, 2).unwrap();
        let b = synthesize_stream(&g, 9, 0.5, 2).unwrap();
        assert_eq!(a.updates, b.updates);
        assert_eq!(a.disconnected, b.disconnected);
        assert!(synthesize_stream(&g, 9, -0.1, 0).is_err());
        assert!(synthesize_stream(&g, 9, 0.0, 151).is_err());
        assert!(synthesize_stream(&g, 9, 0.0, 33).is_err(), "more nodes than exist");
    }

    // -- dense generator -----------------------------------------------

    #[test]
    fn two_node_full_graph_is_the_single_edge() {
        let g = generate_dense_graph(2, 1.0, 0.0, 1).unwrap();
        assert_eq!(g.iter().collect::<Vec<_>>(), vec![(0, 1)]);
    }

    #[test]
    fn density_lands_within_ten_percent() {
        let v = 256u32;
        let slots = u64::from(v) * u64::from(v - 1) / 2;
        let g = generate_dense_graph(v, 0.5, 0.05, 4).unwrap();
        let lo = (0.45 * slots as f64) as u64;
        let hi = (0.55 * slots as f64) as u64;
        assert!(
            (lo..=hi).contains(&g.len()),
            "density off target: {} of {slots}",
            g.len()
        );
    }

    #[test]
    fn generator_emits_simple_graph_only() {
        // EdgeSet cannot hold self-loops or duplicates by construction;
        // check the iterator agrees with the count and stays in range.
        let v = 1024u32;
        let g = generate_dense_graph(v, 0.1, 0.1, 6).unwrap();
        let mut seen = HashSet::new();
        for (a, b) in g.iter() {
            assert!(a < b && b < v);
            assert!(seen.insert((a, b)));
        }
        assert_eq!(seen.len() as u64, g.len());
        assert!(generate_dense_graph(100, 0.5, 0.0, 1).is_err(), "non power of two");
        assert!(generate_dense_graph(64, 0.0, 0.0, 1).is_err());
        assert!(generate_dense_graph(64, 0.5, 0.9, 1).is_err());
    }

    #[test]
    fn skew_biases_mass_toward_low_ids() {
        let v = 512u32;
        let g = generate_dense_graph(v, 0.2, 0.2, 8).unwrap();
        let mut degree = vec![0u64; v as usize];
        for (a, b) in g.iter() {
            degree[a as usize] += 1;
            degree[b as usize] += 1;
        }
        let low: u64 = degree[..256].iter().sum();
        let high: u64 = degree[256..].iter().sum();
        assert!(low > high, "expected low-id half to be denser: {low} vs {high}");
    }

    // -- binary format -------------------------------------------------

    #[test]
    fn three_update_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.stream");
        let updates = vec![
            StreamUpdate::insert(0, 1),
            StreamUpdate::insert(1, 2),
            StreamUpdate::delete(0, 1),
        ];
        write_stream(&path, 3, &updates).unwrap();
        assert_eq!(
            std::fs::metadata(&path).unwrap().len(),
            HEADER_BYTES + 3 * RECORD_BYTES
        );
        let (header, got) = read_stream(&path).unwrap();
        assert_eq!(header, StreamHeader { num_nodes: 3, num_updates: 3 });
        assert_eq!(got, updates);
    }

    #[test]
    fn truncated_file_reports_the_cut_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.stream");
        let updates = vec![StreamUpdate::insert(0, 1), StreamUpdate::insert(1, 2)];
        write_stream(&path, 3, &updates).unwrap();
        let full = std::fs::read(&path).unwrap();
        // Cut mid-record: 4 bytes into the second record.
        let cut = (HEADER_BYTES + RECORD_BYTES + 4) as usize;
        std::fs::write(&path, &full[..cut]).unwrap();
        match StreamReader::open(&path).map(|r| r.header()) {
            Err(Error::StreamParse { offset, .. }) => {
                assert_eq!(offset, HEADER_BYTES + RECORD_BYTES);
            }
            other => panic!("expected parse error, got {other:?}"),
        }
        // Header-level garbage.
        std::fs::write(&path, b"NOTMAGIC").unwrap();
        match StreamReader::open(&path).map(|r| r.header()) {
            Err(Error::StreamParse { offset: 0, .. }) => {}
            other => panic!("expected parse error at 0, got {other:?}"),
        }
    }

    #[test]
    fn bad_op_byte_is_rejected_at_its_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.stream");
        write_stream(&path, 3, &[StreamUpdate::insert(0, 1)]).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes[HEADER_BYTES as usize] = 0x7f;
        std::fs::write(&path, &bytes).unwrap();
        let mut reader = StreamReader::open(&path).unwrap();
        match reader.next() {
            Some(Err(Error::StreamParse { offset, .. })) => assert_eq!(offset, HEADER_BYTES),
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn large_stream_round_trips_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("big.stream");
        let v = 2048u32;
        // Valid by construction: toggle edges, inserting when absent.
        let mut live = EdgeSet::new(v);
        let mut state = 1234u64;
        let mut updates = Vec::with_capacity(1_000_000);
        for _ in 0..1_000_000 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let a = ((state >> 33) % u64::from(v)) as u32;
            let mut b = ((state >> 11) % u64::from(v)) as u32;
            if a == b {
                b = (b + 1) % v;
            }
            updates.push(if live.insert(a, b) {
                StreamUpdate::insert(a, b)
            } else {
                live.remove(a, b);
                StreamUpdate::delete(a, b)
            });
        }
        write_stream(&path, v, &updates).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len() as u64, HEADER_BYTES + 1_000_000 * RECORD_BYTES);
        // Canonical-encoding fingerprint, FNV-1a. Pins the format: any
        // byte-level change to header or record layout shows up here.
        let mut h = 0xcbf29ce484222325u64;
        for &byte in &bytes {
            h = (h ^ u64::from(byte)).wrapping_mul(0x100000001b3);
        }
        assert_eq!(h, FROZEN_BIG_STREAM_FNV);

        let (header, got) = read_stream(&path).unwrap();
        assert_eq!(header.num_updates, 1_000_000);
        assert_eq!(got, updates);
        let rewritten = dir.path().join("big2.stream");
        write_stream(&rewritten, v, &got).unwrap();
        assert_eq!(std::fs::read(&rewritten).unwrap(), bytes);
    }

    const FROZEN_BIG_STREAM_FNV: u64 = 2662191595171946673;

    // -- text codec ------------------------------------------------------

    #[test]
    fn text_codec_round_trips_and_rejects_garbage() {
        let updates = vec![
            StreamUpdate::insert(0, 1),
            StreamUpdate::delete(0, 1),
            StreamUpdate::insert(2, 3),
        ];
        let mut buf = Vec::new();
        write_text_stream(&mut buf, 4, &updates).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "4 3\nI 0 1\nD 0 1\nI 2 3\n"
        );
        let (header, got) = read_text_stream(&buf[..]).unwrap();
        assert_eq!(header, StreamHeader { num_nodes: 4, num_updates: 3 });
        assert_eq!(got, updates);

        assert!(read_text_stream(&b"oops\n"[..]).is_err());
        assert!(read_text_stream(&b"4 1\nX 0 1\n"[..]).is_err());
        assert!(read_text_stream(&b"4 2\nI 0 1\n"[..]).is_err(), "count mismatch");
        match read_text_stream(&b"4 2\nI 0 1\nD zero 1\n"[..]) {
            Err(Error::StreamParse { offset, .. }) => assert_eq!(offset, 10),
            other => panic!("expected parse error, got {other:?}"),
        }
    }
}
