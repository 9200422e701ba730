//! External-memory gutter tree.
//!
//! A static fanout tree over the node groups, laid out in one preallocated
//! file. Every internal node owns a `buffer_bytes` region, every leaf
//! gutter a region sized to its record capacity, and all file traffic is
//! whole `block_bytes` blocks at block-aligned offsets (enforced at the
//! lowest layer, counted for tests). Records enter at the root; a full
//! buffer flushes by distributing its records to the children, recursively
//! flushing any child that fills while receiving. A full leaf gutter turns
//! into one work-queue batch. One flusher thread owns the whole structure,
//! so a fixed insert sequence produces a fixed I/O trace.

use super::queue::WorkQueue;
use super::{BufferedUpdate, UpdateBatch};
use crate::Result;
use std::fs::{File, OpenOptions};
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

pub const RECORD_BYTES: usize = 8;

/// Whole blocks read/written against the backing file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IoStats {
    pub blocks_read: u64,
    pub blocks_written: u64,
}

/// All file access funnels through here; anything that is not exactly one
/// aligned block is a bug, not a slow path.
struct BlockFile {
    file: File,
    block_bytes: usize,
    reads: Arc<AtomicU64>,
    writes: Arc<AtomicU64>,
}

impl BlockFile {
    fn read_block(&mut self, block: u64, buf: &mut [u8]) {
        assert_eq!(buf.len(), self.block_bytes, "whole-block reads only");
        self.file.seek(SeekFrom::Start(block * self.block_bytes as u64)).unwrap();
        self.file.read_exact(buf).unwrap();
        self.reads.fetch_add(1, Ordering::Relaxed);
    }

    fn write_block(&mut self, block: u64, buf: &[u8]) {
        assert_eq!(buf.len(), self.block_bytes, "whole-block writes only");
        self.file.seek(SeekFrom::Start(block * self.block_bytes as u64)).unwrap();
        self.file.write_all(buf).unwrap();
        self.writes.fetch_add(1, Ordering::Relaxed);
    }
}

enum Children {
    Internal(Vec<usize>),
    /// Group range [lo, hi) attaches directly under this node.
    Leaves,
}

struct TreeNode {
    lo: u32,
    hi: u32,
    /// Group-range width per child (uniform split).
    child_span: u32,
    children: Children,
    first_block: u64,
    len_records: u64,
}

struct Leaf {
    first_block: u64,
    len_records: u64,
}

pub struct GutterTree {
    file: BlockFile,
    block_bytes: usize,
    records_per_block: usize,
    internal_capacity: u64,
    internal_levels: u32,
    nodes: Vec<TreeNode>,
    leaves: Vec<Leaf>,
    leaf_capacity: u64,
    group_size: u32,
    queue: Arc<WorkQueue>,
}

impl GutterTree {
    /// Builds the static topology for `num_groups` leaf gutters and
    /// preallocates the backing file at `path`.
    pub fn create(
        path: &Path,
        buffer_bytes: usize,
        block_bytes: usize,
        num_groups: u32,
        group_size: u32,
        leaf_capacity: u64,
        queue: Arc<WorkQueue>,
    ) -> Result<Self> {
        let fanout = (buffer_bytes / block_bytes) as u32;
        let mut nodes = Vec::new();
        let mut levels = 0;
        build_topology(0, num_groups, fanout, 1, &mut nodes, &mut levels);

        let blocks_per_internal = (buffer_bytes / block_bytes) as u64;
        let records_per_block = block_bytes / RECORD_BYTES;
        let blocks_per_leaf =
            (leaf_capacity * RECORD_BYTES as u64).div_ceil(block_bytes as u64);
        for (i, node) in nodes.iter_mut().enumerate() {
            node.first_block = i as u64 * blocks_per_internal;
        }
        let leaf_base = nodes.len() as u64 * blocks_per_internal;
        let leaves: Vec<Leaf> = (0..num_groups)
            .map(|g| Leaf {
                first_block: leaf_base + u64::from(g) * blocks_per_leaf,
                len_records: 0,
            })
            .collect();
        let total_blocks = leaf_base + u64::from(num_groups) * blocks_per_leaf;

        let file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(true)
            .open(path)?;
        file.set_len(total_blocks * block_bytes as u64)?;

        Ok(Self {
            file: BlockFile {
                file,
                block_bytes,
                reads: Arc::new(AtomicU64::new(0)),
                writes: Arc::new(AtomicU64::new(0)),
            },
            block_bytes,
            records_per_block,
            internal_capacity: (buffer_bytes / RECORD_BYTES) as u64,
            internal_levels: levels,
            nodes,
            leaves,
            leaf_capacity: leaf_capacity.max(1),
            group_size,
            queue,
        })
    }

    /// Internal buffer levels on the root-to-leaf path (root counts as 1).
    pub fn internal_levels(&self) -> u32 {
        self.internal_levels
    }

    pub fn internal_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn io_counters(&self) -> (Arc<AtomicU64>, Arc<AtomicU64>) {
        (self.file.reads.clone(), self.file.writes.clone())
    }

    pub fn io_stats(&self) -> IoStats {
        IoStats {
            blocks_read: self.file.reads.load(Ordering::Relaxed),
            blocks_written: self.file.writes.load(Ordering::Relaxed),
        }
    }

    /// sort(N)-style analytical block I/O for pushing `records` records
    /// through the tree: one write plus one read per level (internal
    /// levels and the leaf level), in whole blocks.
    pub fn analytic_block_io(&self, records: u64) -> u64 {
        let blocks = records.div_ceil(self.records_per_block as u64);
        2 * blocks * (u64::from(self.internal_levels) + 1)
    }

    /// Appends records to the root buffer, flushing as needed.
    pub fn append(&mut self, recs: &[BufferedUpdate]) {
        self.append_internal(0, recs);
    }

    /// Empties every buffer and leaf gutter top-down; partial leaf
    /// contents leave as short batches.
    pub fn flush_all(&mut self) {
        self.flush_subtree(0);
        for group in 0..self.leaves.len() as u32 {
            if self.leaves[group as usize].len_records > 0 {
                self.drain_leaf(group);
            }
        }
    }

    fn group_of(&self, target: u32) -> u32 {
        target / self.group_size
    }

    fn append_internal(&mut self, node: usize, recs: &[BufferedUpdate]) {
        let mut pos = 0;
        while pos < recs.len() {
            let len = self.nodes[node].len_records;
            let space = (self.internal_capacity - len) as usize;
            if space == 0 {
                self.flush_node(node);
                continue;
            }
            let take = space.min(recs.len() - pos);
            let first_block = self.nodes[node].first_block;
            self.write_records(first_block, len, &recs[pos..pos + take]);
            self.nodes[node].len_records += take as u64;
            pos += take;
        }
    }

    /// Distributes one node's buffered records to its children (order
    /// preserved per child), leaving the node empty.
    fn flush_node(&mut self, node: usize) {
        let count = self.nodes[node].len_records;
        if count == 0 {
            return;
        }
        let first_block = self.nodes[node].first_block;
        let recs = self.read_records(first_block, count);
        self.nodes[node].len_records = 0;

        let (lo, span) = (self.nodes[node].lo, self.nodes[node].child_span);
        match &self.nodes[node].children {
            Children::Internal(kids) => {
                let kids = kids.clone();
                let mut per_child: Vec<Vec<BufferedUpdate>> = vec![Vec::new(); kids.len()];
                for rec in recs {
                    let child = ((self.group_of(rec.target) - lo) / span) as usize;
                    per_child[child].push(rec);
                }
                for (child, batch) in kids.into_iter().zip(per_child) {
                    if !batch.is_empty() {
                        self.append_internal(child, &batch);
                    }
                }
            }
            Children::Leaves => {
                let width = self.nodes[node].hi - lo;
                let mut per_leaf: Vec<Vec<BufferedUpdate>> =
                    vec![Vec::new(); width as usize];
                for rec in recs {
                    per_leaf[(self.group_of(rec.target) - lo) as usize].push(rec);
                }
                for (off, batch) in per_leaf.into_iter().enumerate() {
                    if !batch.is_empty() {
                        self.append_leaf(lo + off as u32, &batch);
                    }
                }
            }
        }
    }

    fn flush_subtree(&mut self, node: usize) {
        self.flush_node(node);
        if let Children::Internal(kids) = &self.nodes[node].children {
            for kid in kids.clone() {
                self.flush_subtree(kid);
            }
        }
    }

    fn append_leaf(&mut self, group: u32, recs: &[BufferedUpdate]) {
        let mut pos = 0;
        while pos < recs.len() {
            let len = self.leaves[group as usize].len_records;
            let space = (self.leaf_capacity - len) as usize;
            if space == 0 {
                self.drain_leaf(group);
                continue;
            }
            let take = space.min(recs.len() - pos);
            let first_block = self.leaves[group as usize].first_block;
            self.write_records(first_block, len, &recs[pos..pos + take]);
            self.leaves[group as usize].len_records += take as u64;
            pos += take;
        }
    }

    /// Reads a full-or-partial leaf gutter back and emits it as one batch.
    fn drain_leaf(&mut self, group: u32) {
        let count = self.leaves[group as usize].len_records;
        if count == 0 {
            return;
        }
        let first_block = self.leaves[group as usize].first_block;
        let entries = self.read_records(first_block, count);
        self.leaves[group as usize].len_records = 0;
        self.queue.put(UpdateBatch { group, entries });
    }

    /// Appends `recs` to a region that already holds `start` records.
    /// Writes are whole blocks; a partially filled tail block is read back
    /// and overlaid, untouched blocks are never rewritten.
    fn write_records(&mut self, first_block: u64, start: u64, recs: &[BufferedUpdate]) {
        let rpb = self.records_per_block as u64;
        let mut buf = vec![0u8; self.block_bytes];
        let mut cursor = start;
        let mut pos = 0;
        while pos < recs.len() {
            let block = first_block + cursor / rpb;
            let in_block = (cursor % rpb) as usize;
            let take = (self.records_per_block - in_block).min(recs.len() - pos);
            if in_block != 0 {
                self.file.read_block(block, &mut buf);
            } else {
                buf.fill(0);
            }
            for (k, rec) in recs[pos..pos + take].iter().enumerate() {
                let at = (in_block + k) * RECORD_BYTES;
                buf[at..at + 4].copy_from_slice(&rec.target.to_le_bytes());
                buf[at + 4..at + 8].copy_from_slice(&rec.other.to_le_bytes());
            }
            self.file.write_block(block, &buf);
            cursor += take as u64;
            pos += take;
        }
    }

    fn read_records(&mut self, first_block: u64, count: u64) -> Vec<BufferedUpdate> {
        let rpb = self.records_per_block as u64;
        let mut out = Vec::with_capacity(count as usize);
        let mut buf = vec![0u8; self.block_bytes];
        let mut remaining = count;
        let mut block = first_block;
        while remaining > 0 {
            self.file.read_block(block, &mut buf);
            let take = rpb.min(remaining) as usize;
            for k in 0..take {
                let at = k * RECORD_BYTES;
                out.push(BufferedUpdate {
                    target: u32::from_le_bytes(buf[at..at + 4].try_into().unwrap()),
                    other: u32::from_le_bytes(buf[at + 4..at + 8].try_into().unwrap()),
                });
            }
            remaining -= take as u64;
            block += 1;
        }
        out
    }
}

fn build_topology(
    lo: u32,
    hi: u32,
    fanout: u32,
    level: u32,
    nodes: &mut Vec<TreeNode>,
    max_level: &mut u32,
) -> usize {
    let idx = nodes.len();
    *max_level = (*max_level).max(level);
    nodes.push(TreeNode {
        lo,
        hi,
        child_span: 1,
        children: Children::Leaves,
        first_block: 0,
        len_records: 0,
    });
    if hi - lo > fanout {
        let span = (hi - lo).div_ceil(fanout);
        let mut kids = Vec::new();
        let mut s = lo;
        while s < hi {
            let e = (s + span).min(hi);
            kids.push(build_topology(s, e, fanout, level + 1, nodes, max_level));
            s = e;
        }
        nodes[idx].child_span = span;
        nodes[idx].children = Children::Internal(kids);
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;
    use std::thread;

    fn rec(target: u32, other: u32) -> BufferedUpdate {
        BufferedUpdate { target, other }
    }

    /// Collects every batch a queue delivers until it closes.
    fn spawn_collector(
        queue: Arc<WorkQueue>,
    ) -> thread::JoinHandle<Vec<UpdateBatch>> {
        thread::spawn(move || {
            let mut got = Vec::new();
            while let Some(batch) = queue.get() {
                queue.mark_done();
                got.push(batch);
            }
            got
        })
    }

    #[test]
    fn topology_levels_and_node_counts() {
        let dir = tempfile::tempdir().unwrap();
        let queue = Arc::new(WorkQueue::new(4));
        // 1024 groups at fanout 16: root -> 16 -> 256 -> leaves.
        let tree = GutterTree::create(
            &dir.path().join("t.bin"),
            16 * 16384,
            16384,
            1024,
            1,
            8,
            queue,
        )
        .unwrap();
        assert_eq!(tree.internal_levels(), 3);
        assert_eq!(tree.internal_nodes(), 1 + 16 + 256);

        let dir2 = tempfile::tempdir().unwrap();
        let queue2 = Arc::new(WorkQueue::new(4));
        // Few groups: the root feeds leaves directly.
        let flat = GutterTree::create(
            &dir2.path().join("t.bin"),
            16 * 16384,
            16384,
            10,
            1,
            8,
            queue2,
        )
        .unwrap();
        assert_eq!(flat.internal_levels(), 1);
        assert_eq!(flat.internal_nodes(), 1);
    }

    #[test]
    fn routes_every_record_to_its_group_exactly_once() {
        let dir = tempfile::tempdir().unwrap();
        let queue = Arc::new(WorkQueue::new(8));
        // Tiny geometry: 64 B blocks (8 records), 4-block buffers, so
        // multi-level flushing happens constantly.
        let mut tree = GutterTree::create(
            &dir.path().join("t.bin"),
            4 * 64,
            64,
            16,
            2, // group_size 2: groups cover node pairs
            5,
            queue.clone(),
        )
        .unwrap();
        let collector = spawn_collector(queue.clone());

        let mut sent: HashMap<(u32, u32), u64> = HashMap::new();
        let mut state = 1u64;
        let mut recs = Vec::new();
        for _ in 0..10_000 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let target = (state >> 33) as u32 % 32;
            let other = (state >> 13) as u32 % 32;
            *sent.entry((target, other)).or_default() += 1;
            recs.push(rec(target, other));
            if recs.len() == 64 {
                tree.append(&recs);
                recs.clear();
            }
        }
        tree.append(&recs);
        tree.flush_all();
        queue.close();
        let batches = collector.join().unwrap();

        let mut got: HashMap<(u32, u32), u64> = HashMap::new();
        for batch in &batches {
            assert!(batch.entries.len() <= 5, "batch exceeds leaf capacity");
            for e in &batch.entries {
                assert_eq!(e.target / 2, batch.group, "record in wrong group's batch");
                *got.entry((e.target, e.other)).or_default() += 1;
            }
        }
        assert_eq!(got, sent);

        // Everything is empty after flush_all.
        assert!(tree.nodes.iter().all(|n| n.len_records == 0));
        assert!(tree.leaves.iter().all(|l| l.len_records == 0));
        assert!(tree.io_stats().blocks_written > 0);
    }

    #[test]
    fn preserves_per_group_fifo_order() {
        let dir = tempfile::tempdir().unwrap();
        let queue = Arc::new(WorkQueue::new(8));
        let mut tree = GutterTree::create(
            &dir.path().join("t.bin"),
            4 * 64,
            64,
            8,
            1,
            6,
            queue.clone(),
        )
        .unwrap();
        let collector = spawn_collector(queue.clone());
        for i in 0..500u32 {
            tree.append(&[rec(i % 8, i)]);
        }
        tree.flush_all();
        queue.close();
        let batches = collector.join().unwrap();
        let mut last_seen = HashMap::new();
        for batch in &batches {
            for e in &batch.entries {
                let prev = last_seen.insert(e.target, e.other);
                if let Some(prev) = prev {
                    assert!(prev < e.other, "group {} reordered: {prev} after {}", e.target, e.other);
                }
            }
        }
    }

    #[test]
    fn sequential_block_appends_write_each_block_once() {
        let dir = tempfile::tempdir().unwrap();
        let queue = Arc::new(WorkQueue::new(8));
        let mut tree = GutterTree::create(
            &dir.path().join("t.bin"),
            64 * 64,
            64,
            4,
            1,
            1000,
            queue.clone(),
        )
        .unwrap();
        // 40 block-aligned appends into the root: no flush, no reads, one
        // write per block, clean blocks never rewritten.
        let chunk: Vec<BufferedUpdate> = (0..8).map(|i| rec(i % 4, i)).collect();
        for _ in 0..40 {
            tree.append(&chunk);
        }
        let stats = tree.io_stats();
        assert_eq!(stats.blocks_written, 40);
        assert_eq!(stats.blocks_read, 0);
        queue.close();
    }

    #[test]
    fn analytic_estimate_scales_with_levels_and_blocks() {
        let dir = tempfile::tempdir().unwrap();
        let queue = Arc::new(WorkQueue::new(4));
        let tree = GutterTree::create(
            &dir.path().join("t.bin"),
            16 * 16384,
            16384,
            1024,
            1,
            8,
            queue,
        )
        .unwrap();
        // 3 internal levels + leaves, 2048 records per block.
        assert_eq!(tree.analytic_block_io(2048), 2 * 4);
        assert_eq!(tree.analytic_block_io(2049), 2 * 4 * 2);
    }
}
