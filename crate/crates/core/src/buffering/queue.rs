//! Bounded FIFO handoff between the stream feeder and sketch workers.

use super::UpdateBatch;
use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};

struct State {
    items: VecDeque<UpdateBatch>,
    closed: bool,
    /// Batches ever accepted by put().
    puts: u64,
    /// Batches workers reported finished via mark_done().
    dones: u64,
}

/// Blocking bounded queue of [`UpdateBatch`]; the only path from buffering
/// to the sketch workers. `put` blocks while full (backpressure, never
/// drops), `get` blocks while empty until closed. `wait_drained` parks the
/// feeder until every accepted batch has been *applied*, not merely
/// dequeued, which is what a mid-stream query needs.
pub struct WorkQueue {
    state: Mutex<State>,
    not_empty: Condvar,
    not_full: Condvar,
    drained: Condvar,
    capacity: usize,
}

impl WorkQueue {
    pub fn new(capacity: usize) -> Self {
        Self {
            state: Mutex::new(State {
                items: VecDeque::new(),
                closed: false,
                puts: 0,
                dones: 0,
            }),
            not_empty: Condvar::new(),
            not_full: Condvar::new(),
            drained: Condvar::new(),
            capacity: capacity.max(1),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Enqueues a batch, blocking while the queue is full. Returns false
    /// (dropping the batch) only if the queue was already closed.
    pub fn put(&self, batch: UpdateBatch) -> bool {
        let mut state = self.state.lock().unwrap();
        while state.items.len() >= self.capacity && !state.closed {
            state = self.not_full.wait(state).unwrap();
        }
        if state.closed {
            return false;
        }
        state.items.push_back(batch);
        state.puts += 1;
        drop(state);
        self.not_empty.notify_one();
        true
    }

    /// Dequeues the oldest batch; `None` once the queue is closed and
    /// empty (remaining items are always drained first).
    pub fn get(&self) -> Option<UpdateBatch> {
        let mut state = self.state.lock().unwrap();
        loop {
            if let Some(batch) = state.items.pop_front() {
                drop(state);
                self.not_full.notify_one();
                return Some(batch);
            }
            if state.closed {
                return None;
            }
            state = self.not_empty.wait(state).unwrap();
        }
    }

    /// Workers call this once per batch after applying it.
    pub fn mark_done(&self) {
        let mut state = self.state.lock().unwrap();
        state.dones += 1;
        if state.dones == state.puts && state.items.is_empty() {
            drop(state);
            self.drained.notify_all();
        }
    }

    /// Blocks until every batch ever put has been marked done.
    pub fn wait_drained(&self) {
        let mut state = self.state.lock().unwrap();
        while !(state.items.is_empty() && state.dones == state.puts) {
            state = self.drained.wait(state).unwrap();
        }
    }

    /// No more puts; blocked getters wake and drain what remains.
    pub fn close(&self) {
        let mut state = self.state.lock().unwrap();
        state.closed = true;
        drop(state);
        self.not_empty.notify_all();
        self.not_full.notify_all();
    }

    pub fn is_closed(&self) -> bool {
        self.state.lock().unwrap().closed
    }

    pub fn len(&self) -> usize {
        self.state.lock().unwrap().items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
