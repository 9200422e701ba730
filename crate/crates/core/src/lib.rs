//! Streaming connected components over linear edge sketches.
//!
//! A graph on `V` nodes is maintained under an insert/delete edge stream by
//! giving every node a stack of XOR-linear sketches of its incidence vector
//! (one sketch per merge round). Because the sketches are linear, the sketch
//! of a component's cut is the XOR of its members' sketches, and a spanning
//! forest falls out of O(log V) rounds of sample-and-contract without ever
//! storing the edge set.
//!
//! Modules:
//! - [`hashing`]: shared seeded hash primitives (bucket routing, checksums).
//! - [`cubesketch`]: XOR-bucket l0-sampler, 12 bytes per bucket.
//! - [`standard_l0`]: classic sum/count/polynomial-checksum l0-sampler,
//!   kept as the comparison baseline and cross-check.
//! - [`graph_engine`]: node sketches, Boruvka-style spanning forest, DSU,
//!   snapshot files.
//! - [`buffering`]: leaf gutters, an external-memory gutter tree, and the
//!   bounded work queue between stream feeder and sketch workers.
//! - [`streamio`]: stream file formats, synthetic graph/stream generation,
//!   and an exact adjacency oracle for verification.
//! - [`pipeline`]: wires a stream source, a gutter system and worker
//!   threads into one ingestion run.

pub mod buffering;
pub mod cubesketch;
mod error;
pub mod graph_engine;
pub mod hashing;
pub mod pipeline;
pub mod standard_l0;
pub mod streamio;

pub use error::{Error, Result};
