//! Ingestion lifecycle: feeder, buffering, work queue, sketch workers.
//!
//! The feeder (the calling thread) pushes stream updates into a
//! [`GutterSystem`](crate::buffering::GutterSystem); worker threads pull
//! [`UpdateBatch`](crate::buffering::UpdateBatch)es off the shared queue
//! and toggle sketches. Insert and delete both map to the same toggle;
//! linearity is the whole point. A mid-stream query flushes the gutters,
//! waits for the queue to drain, and only then looks at the sketches.
//!
//! Final sketch state is independent of worker count and buffer mode:
//! toggles commute, each is applied exactly once, and per-node access is
//! serialized by the engine's locks.

use crate::buffering::{BufferConfig, GutterSystem, UpdateBatch};
use crate::buffering::tree::IoStats;
use crate::graph_engine::SketchEngine;
use crate::streamio::{EdgeSet, StreamUpdate};
use crate::{Error, Result};
use std::sync::Mutex;
use std::time::{Duration, Instant};

#[derive(Debug, Clone)]
pub struct IngestOptions {
    pub buffer: BufferConfig,
    pub workers: usize,
    /// Reject invalid streams (duplicate insert, delete of absent edge,
    /// self-loop, out-of-range id) at their update index. Costs one
    /// bitset probe per update.
    pub validate: bool,
    /// Flush and run the query callback every this many updates.
    pub query_every: Option<u64>,
}

impl IngestOptions {
    pub fn new(buffer: BufferConfig, workers: usize) -> Self {
        Self { buffer, workers, validate: true, query_every: None }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct IngestReport {
    pub updates: u64,
    pub wall: Duration,
    pub io: IoStats,
    pub queries: u64,
}

impl IngestReport {
    pub fn updates_per_sec(&self) -> f64 {
        self.updates as f64 / self.wall.as_secs_f64().max(1e-9)
    }
}

/// Applies one batch; entries for the same target are folded into one
/// engine call so row keys hash once per target.
pub fn apply_batch(engine: &SketchEngine, batch: &UpdateBatch) -> Result<()> {
    let mut others: Vec<u32> = Vec::with_capacity(batch.entries.len());
    let mut i = 0;
    while i < batch.entries.len() {
        let target = batch.entries[i].target;
        others.clear();
        while i < batch.entries.len() && batch.entries[i].target == target {
            others.push(batch.entries[i].other);
            i += 1;
        }
        engine.apply_batch(target, &others)?;
    }
    Ok(())
}

/// Runs the full pipeline over `updates`, invoking `on_query` at every
/// flush point (guaranteed quiescent: all prior updates applied).
///
/// The update iterator yields `Result` so file readers can surface parse
/// errors mid-stream; any error aborts ingestion and is returned after
/// the workers wind down.
pub fn ingest_with_queries<I, F>(
    engine: &SketchEngine,
    updates: I,
    options: &IngestOptions,
    mut on_query: F,
) -> Result<IngestReport>
where
    I: IntoIterator<Item = Result<StreamUpdate>>,
    F: FnMut(u64, &SketchEngine),
{
    if options.query_every == Some(0) {
        return Err(Error::InvalidParams("query_every must be positive".into()));
    }
    let num_nodes = engine.params().num_nodes();
    let mut gutters = GutterSystem::new(
        &options.buffer,
        num_nodes,
        engine.params().node_sketch_bytes(),
        options.workers,
    )?;
    let queue = gutters.queue();
    let mut live = options.validate.then(|| EdgeSet::new(num_nodes));

    let start = Instant::now();
    let mut count = 0u64;
    let mut queries = 0u64;
    // First worker error wins; later ones are dropped.
    let worker_error: Mutex<Option<Error>> = Mutex::new(None);

    let feed_result: Result<()> = std::thread::scope(|scope| {
        for _ in 0..options.workers.max(1) {
            let queue = queue.clone();
            let worker_error = &worker_error;
            scope.spawn(move || {
                while let Some(batch) = queue.get() {
                    if let Err(e) = apply_batch(engine, &batch) {
                        let mut slot = worker_error.lock().unwrap();
                        slot.get_or_insert(e);
                        queue.close();
                    }
                    queue.mark_done();
                }
            });
        }

        let feed = || -> Result<()> {
            for item in updates {
                let upd = item?;
                if let Some(live) = live.as_mut() {
                    check_update(live, upd, count)?;
                }
                gutters.insert(upd.u, upd.v);
                count += 1;
                if options.query_every.is_some_and(|k| count % k == 0) {
                    gutters.flush_all();
                    if queue.is_closed() {
                        break; // a worker failed; stop feeding
                    }
                    queries += 1;
                    on_query(count, engine);
                }
            }
            Ok(())
        };
        let fed = feed();
        // Drain whatever made it into the buffers, then close so the
        // workers exit; the scope cannot join them while the queue is
        // open. After an error this still terminates: workers consume
        // whatever was already accepted.
        gutters.flush_all();
        queue.close();
        fed
    });

    let io = gutters.finish();
    if let Some(e) = worker_error.into_inner().unwrap().take() {
        return Err(e);
    }
    feed_result?;
    Ok(IngestReport { updates: count, wall: start.elapsed(), io, queries })
}

/// [`ingest_with_queries`] without a query schedule.
pub fn ingest<I>(engine: &SketchEngine, updates: I, options: &IngestOptions) -> Result<IngestReport>
where
    I: IntoIterator<Item = Result<StreamUpdate>>,
{
    ingest_with_queries(engine, updates, options, |_, _| {})
}

/// In-memory convenience wrapper.
pub fn ingest_updates(
    engine: &SketchEngine,
    updates: &[StreamUpdate],
    options: &IngestOptions,
) -> Result<IngestReport> {
    ingest(engine, updates.iter().copied().map(Ok), options)
}

fn check_update(live: &mut EdgeSet, upd: StreamUpdate, position: u64) -> Result<()> {
    use crate::streamio::UpdateOp;
    let v = live.num_nodes();
    if upd.u == upd.v || upd.u >= v || upd.v >= v {
        return Err(Error::StreamValidity {
            position,
            msg: format!("bad endpoints ({}, {}) for {v} nodes", upd.u, upd.v),
        });
    }
    let ok = match upd.op {
        UpdateOp::Insert => live.insert(upd.u, upd.v),
        UpdateOp::Delete => live.remove(upd.u, upd.v),
    };
    if ok {
        Ok(())
    } else {
        Err(Error::StreamValidity {
            position,
            msg: format!("{:?} of edge ({}, {}) breaks stream validity", upd.op, upd.u, upd.v),
        })
    }
}
