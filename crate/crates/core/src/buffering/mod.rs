//! Update buffering between the stream reader and the sketch workers.
//!
//! Each stream update (u, v) becomes two buffered records, one per
//! endpoint, so every sketch mutation is a (target, other) pair routed by
//! target. Nodes are bucketed into groups; a group's gutter accumulates
//! records until it reaches capacity and leaves as one [`UpdateBatch`] on
//! the shared [`WorkQueue`](queue::WorkQueue). Three placements:
//!
//! * `None`: no buffering, every record is its own singleton batch.
//! * `LeafOnly`: one RAM gutter per group.
//! * `GutterTree`: an on-disk fanout tree with block I/O
//!   ([`tree::GutterTree`]), fed through a dedicated flusher thread.
//!
//! Batching exists so a worker can amortize sketch-row hashing across many
//! records with the same target; correctness never depends on the mode,
//! since the multiset of delivered records is identical in all three.

pub mod queue;
pub mod tree;

use crate::{Error, Result};
use queue::WorkQueue;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{mpsc, Arc};
use std::thread;
use tree::{GutterTree, IoStats};

/// One routed record: mutate `target`'s sketches with edge (target, other).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct BufferedUpdate {
    pub target: u32,
    pub other: u32,
}

/// A drained gutter: every entry's target lies in `group`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdateBatch {
    pub group: u32,
    pub entries: Vec<BufferedUpdate>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BufferMode {
    None,
    LeafOnly,
    GutterTree,
}

pub const DEFAULT_BUFFER_BYTES: usize = 8 << 20;
pub const DEFAULT_BLOCK_BYTES: usize = 16 << 10;
pub const DEFAULT_QUEUE_FACTOR: usize = 8;
pub const DEFAULT_LEAF_ONLY_FACTOR: f64 = 0.5;
pub const DEFAULT_TREE_FACTOR: f64 = 2.0;

/// Gutter records per group: `max(1, floor(factor * sketch_bytes / 8))`,
/// tying buffer depth to the work one batch amortizes.
pub fn gutter_capacity(factor: f64, node_sketch_bytes: usize) -> usize {
    ((factor * node_sketch_bytes as f64 / tree::RECORD_BYTES as f64).floor() as usize).max(1)
}

#[derive(Debug, Clone)]
pub struct BufferConfig {
    pub mode: BufferMode,
    /// Gutter capacity factor; `None` picks the per-mode default.
    pub factor: Option<f64>,
    /// Consecutive node ids per gutter.
    pub group_size: u32,
    pub buffer_bytes: usize,
    pub block_bytes: usize,
    /// Work-queue capacity as a multiple of the worker count.
    pub queue_factor: usize,
    /// Backing file for `GutterTree`; `None` places one in the system
    /// temp directory and removes it afterwards.
    pub tree_file: Option<PathBuf>,
}

impl BufferConfig {
    pub fn new(mode: BufferMode) -> Self {
        Self {
            mode,
            factor: None,
            group_size: 1,
            buffer_bytes: DEFAULT_BUFFER_BYTES,
            block_bytes: DEFAULT_BLOCK_BYTES,
            queue_factor: DEFAULT_QUEUE_FACTOR,
            tree_file: None,
        }
    }

    pub fn factor(&self) -> f64 {
        self.factor.unwrap_or(match self.mode {
            BufferMode::GutterTree => DEFAULT_TREE_FACTOR,
            _ => DEFAULT_LEAF_ONLY_FACTOR,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.group_size == 0 {
            return Err(Error::InvalidParams("group_size must be positive".into()));
        }
        if let Some(f) = self.factor {
            if !(f.is_finite() && f >= 0.0) {
                return Err(Error::InvalidParams(format!(
                    "gutter factor must be finite and non-negative, got {f}"
                )));
            }
        }
        if self.mode == BufferMode::GutterTree {
            if self.block_bytes < tree::RECORD_BYTES || self.block_bytes % tree::RECORD_BYTES != 0 {
                return Err(Error::InvalidParams(format!(
                    "block_bytes must be a positive multiple of {}, got {}",
                    tree::RECORD_BYTES,
                    self.block_bytes
                )));
            }
            if self.buffer_bytes % self.block_bytes != 0 || self.buffer_bytes / self.block_bytes < 2
            {
                return Err(Error::InvalidParams(format!(
                    "buffer_bytes must be a multiple of block_bytes with fanout >= 2, \
                     got buffer {} block {}",
                    self.buffer_bytes, self.block_bytes
                )));
            }
        }
        Ok(())
    }
}

enum Backend {
    Ram {
        gutters: Vec<Vec<BufferedUpdate>>,
        capacity: usize,
    },
    Tree(TreeFront),
}

/// The write side of the buffering layer. `insert` takes stream updates,
/// the shared queue hands batches to workers.
pub struct GutterSystem {
    backend: Backend,
    queue: Arc<WorkQueue>,
    group_size: u32,
    num_groups: u32,
}

impl GutterSystem {
    /// `node_sketch_bytes` sizes the gutters (see [`gutter_capacity`]).
    pub fn new(
        config: &BufferConfig,
        num_nodes: u32,
        node_sketch_bytes: usize,
        num_workers: usize,
    ) -> Result<Self> {
        config.validate()?;
        if num_nodes == 0 {
            return Err(Error::InvalidParams("num_nodes must be positive".into()));
        }
        let num_groups = num_nodes.div_ceil(config.group_size);
        let queue = Arc::new(WorkQueue::new(config.queue_factor * num_workers.max(1)));
        let capacity = gutter_capacity(config.factor(), node_sketch_bytes);
        let backend = match config.mode {
            BufferMode::None => Backend::Ram {
                gutters: vec![Vec::new(); num_groups as usize],
                capacity: 1,
            },
            BufferMode::LeafOnly => Backend::Ram {
                gutters: vec![Vec::with_capacity(capacity); num_groups as usize],
                capacity,
            },
            BufferMode::GutterTree => Backend::Tree(TreeFront::spawn(
                config,
                num_groups,
                capacity as u64,
                queue.clone(),
            )?),
        };
        Ok(Self {
            backend,
            queue,
            group_size: config.group_size,
            num_groups,
        })
    }

    pub fn queue(&self) -> Arc<WorkQueue> {
        self.queue.clone()
    }

    pub fn num_groups(&self) -> u32 {
        self.num_groups
    }

    /// Buffers one stream update as two records, one per endpoint.
    pub fn insert(&mut self, u: u32, v: u32) {
        self.insert_record(BufferedUpdate { target: u, other: v });
        self.insert_record(BufferedUpdate { target: v, other: u });
    }

    fn insert_record(&mut self, rec: BufferedUpdate) {
        match &mut self.backend {
            Backend::Ram { gutters, capacity } => {
                let group = rec.target / self.group_size;
                let gutter = &mut gutters[group as usize];
                gutter.push(rec);
                if gutter.len() >= *capacity {
                    let entries = std::mem::take(gutter);
                    self.queue.put(UpdateBatch { group, entries });
                }
            }
            Backend::Tree(front) => front.push(rec),
        }
    }

    /// Forces every buffered record out as a batch and waits until the
    /// workers have consumed them all. Afterwards the sketches reflect the
    /// whole prefix, so a query is safe.
    pub fn flush_all(&mut self) {
        match &mut self.backend {
            Backend::Ram { gutters, .. } => {
                for (group, gutter) in gutters.iter_mut().enumerate() {
                    if !gutter.is_empty() {
                        let entries = std::mem::take(gutter);
                        self.queue.put(UpdateBatch { group: group as u32, entries });
                    }
                }
            }
            Backend::Tree(front) => front.flush_all(),
        }
        self.queue.wait_drained();
    }

    pub fn io_stats(&self) -> IoStats {
        match &self.backend {
            Backend::Ram { .. } => IoStats::default(),
            Backend::Tree(front) => front.io_stats(),
        }
    }

    /// Per-record block-I/O budget for the current geometry, used to judge
    /// measured traffic. RAM modes budget zero.
    pub fn analytic_block_io(&self, records: u64) -> u64 {
        match &self.backend {
            Backend::Ram { .. } => 0,
            Backend::Tree(front) => front.analytic_block_io(records),
        }
    }

    /// Flushes, closes the queue, and stops the flusher thread.
    pub fn finish(mut self) -> IoStats {
        self.flush_all();
        let stats = self.io_stats();
        self.queue.close();
        if let Backend::Tree(front) = self.backend {
            front.shutdown();
        }
        stats
    }
}

enum FlusherMsg {
    Records(Vec<BufferedUpdate>),
    /// Flush everything, then ack.
    FlushAll(mpsc::SyncSender<()>),
}

/// Owns the flusher thread that owns the [`GutterTree`]. Records are
/// staged into block-sized chunks so the tree sees aligned appends.
struct TreeFront {
    staging: Vec<BufferedUpdate>,
    chunk: usize,
    tx: Option<mpsc::SyncSender<FlusherMsg>>,
    handle: Option<thread::JoinHandle<()>>,
    reads: Arc<AtomicU64>,
    writes: Arc<AtomicU64>,
    internal_levels: u32,
    records_per_block: usize,
    path: PathBuf,
    owns_file: bool,
}

impl TreeFront {
    fn spawn(
        config: &BufferConfig,
        num_groups: u32,
        leaf_capacity: u64,
        queue: Arc<WorkQueue>,
    ) -> Result<Self> {
        static SCRATCH_ID: AtomicU64 = AtomicU64::new(0);
        let (path, owns_file) = match &config.tree_file {
            Some(p) => (p.clone(), false),
            None => {
                let id = SCRATCH_ID.fetch_add(1, Ordering::Relaxed);
                let name = format!("gutter-tree-{}-{id}.bin", std::process::id());
                (std::env::temp_dir().join(name), true)
            }
        };
        let mut tree = GutterTree::create(
            &path,
            config.buffer_bytes,
            config.block_bytes,
            num_groups,
            config.group_size,
            leaf_capacity,
            queue,
        )?;
        let (reads, writes) = tree.io_counters();
        let internal_levels = tree.internal_levels();
        let records_per_block = config.block_bytes / tree::RECORD_BYTES;
        let (tx, rx) = mpsc::sync_channel::<FlusherMsg>(4);
        let handle = thread::Builder::new()
            .name("gutter-flusher".into())
            .spawn(move || {
                while let Ok(msg) = rx.recv() {
                    match msg {
                        FlusherMsg::Records(recs) => tree.append(&recs),
                        FlusherMsg::FlushAll(ack) => {
                            tree.flush_all();
                            let _ = ack.send(());
                        }
                    }
                }
            })
            .expect("spawn gutter flusher");
        Ok(Self {
            staging: Vec::with_capacity(records_per_block),
            chunk: records_per_block,
            tx: Some(tx),
            handle: Some(handle),
            reads,
            writes,
            internal_levels,
            records_per_block,
            path,
            owns_file,
        })
    }

    fn push(&mut self, rec: BufferedUpdate) {
        self.staging.push(rec);
        if self.staging.len() >= self.chunk {
            let recs = std::mem::replace(&mut self.staging, Vec::with_capacity(self.chunk));
            self.send(FlusherMsg::Records(recs));
        }
    }

    fn flush_all(&mut self) {
        if !self.staging.is_empty() {
            let recs = std::mem::replace(&mut self.staging, Vec::with_capacity(self.chunk));
            self.send(FlusherMsg::Records(recs));
        }
        let (ack_tx, ack_rx) = mpsc::sync_channel(1);
        self.send(FlusherMsg::FlushAll(ack_tx));
        ack_rx.recv().expect("flusher died before ack");
    }

    fn send(&self, msg: FlusherMsg) {
        self.tx
            .as_ref()
            .expect("flusher already shut down")
            .send(msg)
            .expect("flusher died");
    }

    fn io_stats(&self) -> IoStats {
        IoStats {
            blocks_read: self.reads.load(Ordering::Relaxed),
            blocks_written: self.writes.load(Ordering::Relaxed),
        }
    }

    fn analytic_block_io(&self, records: u64) -> u64 {
        let blocks = records.div_ceil(self.records_per_block as u64);
        2 * blocks * (u64::from(self.internal_levels) + 1)
    }

    fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        // Dropping the sender ends the flusher's recv loop.
        self.tx.take();
        if let Some(handle) = self.handle.take() {
            let _ = handle.join();
        }
        if self.owns_file {
            let _ = std::fs::remove_file(&self.path);
        }
    }
}

impl Drop for TreeFront {
    fn drop(&mut self) {
        self.stop();
    }
}
