//! Node sketches and the sample-and-contract spanning forest.
//!
//! Every node keeps `R = ceil(log2 V)` cube sketches of its incidence
//! vector over the `V^2` edge-index space, one per merge round, all nodes
//! sharing the round's hash functions. XOR-merging the round-r sketches of
//! a node set yields a sketch of exactly the set's cut: edges with both
//! endpoints inside appear twice and cancel. A Boruvka pass then needs only
//! one fresh round of sketches per contraction step, which is why R of them
//! exist. Queries run on copies; ingestion state is never touched.

use crate::cubesketch::{read_u32, read_u64, CubeSketch, SampleResult, SketchParams};
use crate::hashing::SketchSeed;
use crate::{Error, Result};
use std::collections::HashMap;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::Mutex;

pub const SNAPSHOT_MAGIC: &[u8; 8] = b"SKCCSNAP";
pub const SNAPSHOT_VERSION: u32 = 1;

/// Packs an undirected edge into the `V^2` index space as `min * V + max`.
/// The cross-term cancellation above needs both endpoints to map to the
/// same index, hence the min/max normalization.
pub fn edge_index(u: u32, v: u32, num_nodes: u32) -> u64 {
    debug_assert!(u != v && u < num_nodes && v < num_nodes);
    let (lo, hi) = if u < v { (u, v) } else { (v, u) };
    u64::from(lo) * u64::from(num_nodes) + u64::from(hi)
}

/// Inverse of [`edge_index`]. `None` for indices no undirected edge maps
/// to (diagonal or lower-triangle codes), which can only arise from a
/// checksum-forging collision.
pub fn edge_from_index(idx: u64, num_nodes: u32) -> Option<(u32, u32)> {
    let v = u64::from(num_nodes);
    let (lo, hi) = (idx / v, idx % v);
    if lo < hi {
        Some((lo as u32, hi as u32))
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GraphParams {
    num_nodes: u32,
    rounds: u32,
    master_seed: u64,
}

impl GraphParams {
    pub fn new(num_nodes: u32, master_seed: u64) -> Result<Self> {
        if num_nodes < 2 {
            return Err(Error::InvalidParams(format!(
                "need at least 2 nodes, got {num_nodes}"
            )));
        }
        let rounds = crate::cubesketch::ceil_log2(u64::from(num_nodes)).max(1);
        Ok(Self { num_nodes, rounds, master_seed })
    }

    pub fn num_nodes(&self) -> u32 {
        self.num_nodes
    }

    /// Merge rounds = independent sketches per node.
    pub fn rounds(&self) -> u32 {
        self.rounds
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    /// Size of the edge-index space each sketch is defined over.
    pub fn edge_space(&self) -> u64 {
        u64::from(self.num_nodes) * u64::from(self.num_nodes)
    }

    /// Sketch geometry of round `r`; identical for all nodes so their
    /// sketches merge.
    pub fn round_sketch_params(&self, round: u32) -> SketchParams {
        SketchParams::new(self.edge_space(), SketchSeed::for_round(self.master_seed, round))
            .expect("edge space >= 4")
    }

    /// In-memory bucket bytes of one node's full sketch stack; the unit
    /// gutter capacities are derived from.
    pub fn node_sketch_bytes(&self) -> usize {
        self.rounds as usize * self.round_sketch_params(0).payload_bytes()
    }
}

/// One node's stack of per-round sketches.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeSketch {
    node: u32,
    rounds: Vec<CubeSketch>,
}

impl NodeSketch {
    pub fn new(node: u32, params: &GraphParams) -> Self {
        let rounds =
            (0..params.rounds()).map(|r| CubeSketch::new(params.round_sketch_params(r))).collect();
        Self { node, rounds }
    }

    pub fn node(&self) -> u32 {
        self.node
    }

    pub fn round(&self, r: u32) -> &CubeSketch {
        &self.rounds[r as usize]
    }

    pub fn rounds(&self) -> &[CubeSketch] {
        &self.rounds
    }

    /// Toggles one edge index in every round's sketch.
    fn toggle(&mut self, idx: u64) {
        for sketch in &mut self.rounds {
            sketch.update(idx).expect("edge index < V^2 by construction");
        }
    }

    fn toggle_many(&mut self, idxs: &[u64]) {
        for sketch in &mut self.rounds {
            sketch.update_many(idxs).expect("edge indices < V^2 by construction");
        }
    }

    fn write_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        for sketch in &self.rounds {
            sketch.write_to(w)?;
        }
        Ok(())
    }
}

/// Result of a spanning-forest query.
#[derive(Debug, Clone)]
pub struct SpanningForest {
    /// Merging edges in discovery order; acyclic by construction.
    pub edges: Vec<(u32, u32)>,
    /// `partition[v]` = smallest node id in v's component.
    pub partition: Vec<u32>,
    /// Query phases executed (including a final all-zero confirmation).
    pub rounds_used: u32,
    /// True when the round budget ran out while some component still
    /// answered Fail in the last round; the partition may then be coarser
    /// than reality. Never set when the pass ended by confirmation.
    pub exhausted: bool,
}

impl SpanningForest {
    pub fn num_components(&self) -> usize {
        let mut roots: Vec<u32> = self.partition.clone();
        roots.sort_unstable();
        roots.dedup();
        roots.len()
    }

    pub fn same_component(&self, u: u32, v: u32) -> bool {
        self.partition[u as usize] == self.partition[v as usize]
    }
}

/// Sample one cut edge of a component from its XOR-merged round sketch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CutSample {
    Edge(u32, u32),
    /// Merged sketch is all-zero: the component has no outgoing edges.
    NoCutEdges,
    Fail,
}

pub fn component_cut_sample(merged: &CubeSketch, num_nodes: u32) -> CutSample {
    match merged.sample() {
        SampleResult::ZeroVector => CutSample::NoCutEdges,
        SampleResult::Fail => CutSample::Fail,
        SampleResult::Good(idx) => match edge_from_index(idx, num_nodes) {
            Some((u, v)) => CutSample::Edge(u, v),
            // A forged checksum surfaced a non-edge code; treat as failure.
            None => CutSample::Fail,
        },
    }
}

/// Union-find with union by rank and path compression.
#[derive(Debug, Clone)]
pub struct Dsu {
    parent: Vec<u32>,
    rank: Vec<u8>,
}

impl Dsu {
    pub fn new(n: u32) -> Self {
        Self { parent: (0..n).collect(), rank: vec![0; n as usize] }
    }

    pub fn find(&mut self, x: u32) -> u32 {
        let mut root = x;
        while self.parent[root as usize] != root {
            root = self.parent[root as usize];
        }
        let mut cur = x;
        while self.parent[cur as usize] != root {
            let next = self.parent[cur as usize];
            self.parent[cur as usize] = root;
            cur = next;
        }
        root
    }

    /// True when x and y were in different sets (a merge happened).
    pub fn union(&mut self, x: u32, y: u32) -> bool {
        let (rx, ry) = (self.find(x), self.find(y));
        if rx == ry {
            return false;
        }
        let (hi, lo) = if self.rank[rx as usize] >= self.rank[ry as usize] {
            (rx, ry)
        } else {
            (ry, rx)
        };
        self.parent[lo as usize] = hi;
        if self.rank[hi as usize] == self.rank[lo as usize] {
            self.rank[hi as usize] += 1;
        }
        true
    }
}

/// The ingestion-side state: one sketch stack per node behind its own
/// lock, so workers applying batches to different nodes never serialize.
pub struct SketchEngine {
    params: GraphParams,
    nodes: Vec<Mutex<NodeSketch>>,
}

impl SketchEngine {
    pub fn new(params: GraphParams) -> Self {
        let nodes =
            (0..params.num_nodes()).map(|v| Mutex::new(NodeSketch::new(v, &params))).collect();
        Self { params, nodes }
    }

    pub fn params(&self) -> &GraphParams {
        &self.params
    }

    fn check_edge(&self, u: u32, v: u32) -> Result<()> {
        let n = self.params.num_nodes;
        if u == v || u >= n || v >= n {
            return Err(Error::InvalidParams(format!(
                "invalid edge ({u}, {v}) for {n} nodes"
            )));
        }
        Ok(())
    }

    /// Toggles edge (u, v) in both endpoints' sketch stacks. Insert and
    /// delete are the same operation.
    pub fn apply_update(&self, u: u32, v: u32) -> Result<()> {
        self.check_edge(u, v)?;
        let idx = edge_index(u, v, self.params.num_nodes);
        self.nodes[u as usize].lock().unwrap().toggle(idx);
        self.nodes[v as usize].lock().unwrap().toggle(idx);
        Ok(())
    }

    /// Applies a batch of buffered updates that all target one node: one
    /// lock acquisition, one bulk toggle per round sketch. The caller
    /// guarantees each stream update reaches both endpoints via two
    /// buffered records.
    pub fn apply_batch(&self, target: u32, others: &[u32]) -> Result<()> {
        if others.is_empty() {
            return Ok(());
        }
        for &other in others {
            self.check_edge(target, other)?;
        }
        let idxs: Vec<u64> = others
            .iter()
            .map(|&other| edge_index(target, other, self.params.num_nodes))
            .collect();
        self.nodes[target as usize].lock().unwrap().toggle_many(&idxs);
        Ok(())
    }

    /// Clones one node's sketch stack (test/diagnostic use).
    pub fn node_sketch(&self, v: u32) -> NodeSketch {
        self.nodes[v as usize].lock().unwrap().clone()
    }

    /// Computes a spanning forest of the current graph by repeated
    /// sample-and-contract on a copy of the sketches.
    ///
    /// Round r: (1) sample each live component's round-r merged sketch;
    /// (2) union the sampled edges, recording those that merge; (3) XOR the
    /// later-round sketches of merged components into the surviving root.
    /// Ends early as soon as every component reports no cut edges.
    pub fn spanning_forest(&self) -> SpanningForest {
        let v = self.params.num_nodes;
        let r_max = self.params.rounds;
        // Query copy: component root -> its merged sketch stack.
        let mut comp: HashMap<u32, Vec<CubeSketch>> = (0..v)
            .map(|node| (node, self.nodes[node as usize].lock().unwrap().rounds.clone()))
            .collect();
        let mut dsu = Dsu::new(v);
        let mut edges = Vec::new();
        let mut rounds_used = 0;
        let mut exhausted = false;

        for round in 0..r_max {
            rounds_used = round + 1;
            let mut roots: Vec<u32> = comp.keys().copied().collect();
            roots.sort_unstable(); // deterministic scan order
            let mut any_fail = false;
            let mut all_zero = true;
            let mut sampled = Vec::new();
            for &root in &roots {
                match component_cut_sample(&comp[&root][round as usize], v) {
                    CutSample::NoCutEdges => {}
                    CutSample::Fail => {
                        all_zero = false;
                        any_fail = true;
                    }
                    CutSample::Edge(a, b) => {
                        all_zero = false;
                        sampled.push((a, b));
                    }
                }
            }
            if all_zero {
                // Confirmed: no component has outgoing edges.
                return SpanningForest {
                    edges,
                    partition: partition_of(&mut dsu, v),
                    rounds_used,
                    exhausted: false,
                };
            }
            for (a, b) in sampled {
                if dsu.union(a, b) {
                    edges.push((a, b));
                }
            }
            // Fold merged components' remaining rounds into the survivor.
            let mut groups: HashMap<u32, Vec<u32>> = HashMap::new();
            for &root in &roots {
                groups.entry(dsu.find(root)).or_default().push(root);
            }
            let mut next = HashMap::with_capacity(groups.len());
            for (new_root, members) in groups {
                let mut acc: Option<Vec<CubeSketch>> = None;
                for member in members {
                    let stack = comp.remove(&member).expect("member was live");
                    match &mut acc {
                        None => acc = Some(stack),
                        Some(acc) => {
                            for r in (round + 1)..r_max {
                                acc[r as usize]
                                    .merge_from(&stack[r as usize])
                                    .expect("round params are shared");
                            }
                        }
                    }
                }
                next.insert(new_root, acc.expect("group nonempty"));
            }
            comp = next;
            if round + 1 == r_max {
                exhausted = any_fail;
            }
        }

        SpanningForest { edges, partition: partition_of(&mut dsu, v), rounds_used, exhausted }
    }

    /// Serialized engine state; bit-identical for equal ingested multisets
    /// regardless of update order, batching or worker count.
    pub fn snapshot_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        self.write_snapshot_to(&mut out).expect("vec write cannot fail");
        out
    }

    pub fn write_snapshot_to<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        w.write_all(&self.params.num_nodes.to_le_bytes())?;
        w.write_all(&self.params.rounds.to_le_bytes())?;
        w.write_all(&self.params.master_seed.to_le_bytes())?;
        for node in &self.nodes {
            node.lock().unwrap().write_to(w)?;
        }
        Ok(())
    }

    pub fn write_snapshot(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(std::fs::File::create(path)?);
        self.write_snapshot_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_snapshot_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::InvalidParams("not a snapshot file (bad magic)".into()));
        }
        let version = read_u32(r)?;
        if version != SNAPSHOT_VERSION {
            return Err(Error::InvalidParams(format!("unsupported snapshot version {version}")));
        }
        let num_nodes = read_u32(r)?;
        let rounds = read_u32(r)?;
        let master_seed = read_u64(r)?;
        let params = GraphParams::new(num_nodes, master_seed)?;
        if params.rounds != rounds {
            return Err(Error::InvalidParams(format!(
                "snapshot claims {rounds} rounds, {num_nodes} nodes require {}",
                params.rounds
            )));
        }
        let mut nodes = Vec::with_capacity(num_nodes as usize);
        for node in 0..num_nodes {
            let mut stack = Vec::with_capacity(rounds as usize);
            for round in 0..rounds {
                let sketch = CubeSketch::read_from(r)?;
                if *sketch.params() != params.round_sketch_params(round) {
                    return Err(Error::InvalidParams(format!(
                        "node {node} round {round}: sketch params disagree with header"
                    )));
                }
                stack.push(sketch);
            }
            nodes.push(Mutex::new(NodeSketch { node, rounds: stack }));
        }
        Ok(Self { params, nodes })
    }

    pub fn read_snapshot(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(std::fs::File::open(path)?);
        let engine = Self::read_snapshot_from(&mut r)?;
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::MalformedFile {
                path: path.to_path_buf(),
                msg: "trailing bytes after snapshot".into(),
            });
        }
        Ok(engine)
    }
}

pub fn partition_of(dsu: &mut Dsu, num_nodes: u32) -> Vec<u32> {
    // Canonical labels: smallest node id per component, so partitions from
    // different runs compare with ==.
    let mut min_of_root: HashMap<u32, u32> = HashMap::new();
    for v in 0..num_nodes {
        let root = dsu.find(v);
        min_of_root.entry(root).or_insert(v); // v ascending: first hit is min
    }
    (0..num_nodes).map(|v| min_of_root[&dsu.find(v)]).collect()
}
