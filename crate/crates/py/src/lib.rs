//! Python bindings: the two l0 samplers, the connected-components engine,
//! and the stream generator/codec, exposed with plain Python types.
//! Updates travel as `("I"|"D", u, v)` tuples; sketch sample results come
//! back as tagged tuples (`("good", index)`, `("zero", None)`, ...).

use pyo3::exceptions::{PyIOError, PyIndexError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyBytes;
use sketchcc::cubesketch::{self, SampleResult, SketchParams};
use sketchcc::graph_engine::{GraphParams, SketchEngine};
use sketchcc::hashing::SketchSeed;
use sketchcc::pipeline::{ingest, IngestOptions};
use sketchcc::standard_l0::{self, StdParams, StdSampleResult, WordRegime};
use sketchcc::streamio::{self, AdjacencyOracle, EdgeSet, StreamUpdate, UpdateOp};
use std::path::PathBuf;

fn to_py(e: sketchcc::Error) -> PyErr {
    match e {
        sketchcc::Error::Io(io) => PyIOError::new_err(io.to_string()),
        sketchcc::Error::IndexOutOfRange { .. } => PyIndexError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

type PyUpdate = (String, u32, u32);

fn parse_updates(updates: Vec<PyUpdate>) -> PyResult<Vec<StreamUpdate>> {
    updates
        .into_iter()
        .map(|(op, u, v)| match op.as_str() {
            "I" | "insert" => Ok(StreamUpdate::insert(u, v)),
            "D" | "delete" => Ok(StreamUpdate::delete(u, v)),
            other => Err(PyValueError::new_err(format!(
                "update op must be \"I\" or \"D\", got {other:?}"
            ))),
        })
        .collect()
}

fn dump_updates(updates: &[StreamUpdate]) -> Vec<PyUpdate> {
    updates
        .iter()
        .map(|upd| {
            let op = match upd.op {
                UpdateOp::Insert => "I",
                UpdateOp::Delete => "D",
            };
            (op.to_string(), upd.u, upd.v)
        })
        .collect()
}

/// XOR-bucket l0 sampler over a length-n vector's support.
#[pyclass]
struct CubeSketch {
    inner: cubesketch::CubeSketch,
}

#[pymethods]
impl CubeSketch {
    #[new]
    #[pyo3(signature = (n, seed, columns=None))]
    fn new(n: u64, seed: u64, columns: Option<u32>) -> PyResult<Self> {
        let seed = SketchSeed::new(seed);
        let params = match columns {
            Some(c) => SketchParams::with_columns(n, c, seed),
            None => SketchParams::new(n, seed),
        }
        .map_err(to_py)?;
        Ok(Self { inner: cubesketch::CubeSketch::new(params) })
    }

    /// Toggle index membership (XOR semantics: twice = never).
    fn update(&mut self, idx: u64) -> PyResult<()> {
        self.inner.update(idx).map_err(to_py)
    }

    fn update_many(&mut self, idxs: Vec<u64>) -> PyResult<()> {
        self.inner.update_many(&idxs).map_err(to_py)
    }

    /// ("good", index) for a live support member, ("zero", None) when the
    /// sketch is of the zero vector, ("fail", None) otherwise.
    fn sample(&self) -> (&'static str, Option<u64>) {
        match self.inner.sample() {
            SampleResult::Good(idx) => ("good", Some(idx)),
            SampleResult::ZeroVector => ("zero", None),
            SampleResult::Fail => ("fail", None),
        }
    }

    fn merge_from(&mut self, other: &CubeSketch) -> PyResult<()> {
        self.inner.merge_from(&other.inner).map_err(to_py)
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.to_bytes())
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Self { inner: cubesketch::CubeSketch::from_bytes(data).map_err(to_py)? })
    }

    #[getter]
    fn n(&self) -> u64 {
        self.inner.params().n()
    }

    #[getter]
    fn num_rows(&self) -> u32 {
        self.inner.params().num_rows()
    }

    #[getter]
    fn num_columns(&self) -> u32 {
        self.inner.params().num_columns()
    }

    #[getter]
    fn payload_bytes(&self) -> usize {
        self.inner.params().payload_bytes()
    }

    fn __eq__(&self, other: &CubeSketch) -> bool {
        self.inner == other.inner
    }

    fn __repr__(&self) -> String {
        let p = self.inner.params();
        format!("CubeSketch(n={}, rows={}, cols={})", p.n(), p.num_rows(), p.num_columns())
    }
}

/// Textbook l0 sampler (exponentiation checksums) kept as the comparison
/// baseline; same update/sample/merge surface, integer deltas.
#[pyclass]
struct StdSketch {
    inner: standard_l0::StdSketch,
}

#[pymethods]
impl StdSketch {
    #[new]
    #[pyo3(signature = (n, seed, regime=None))]
    fn new(n: u64, seed: u64, regime: Option<&str>) -> PyResult<Self> {
        let seed = SketchSeed::new(seed);
        let params = match regime {
            None => StdParams::new(n, seed),
            Some("w64") => StdParams::with_regime(n, WordRegime::W64, seed),
            Some("w128") => StdParams::with_regime(n, WordRegime::W128, seed),
            Some(other) => {
                return Err(PyValueError::new_err(format!(
                    "regime must be \"w64\" or \"w128\", got {other:?}"
                )))
            }
        }
        .map_err(to_py)?;
        Ok(Self { inner: standard_l0::StdSketch::new(params) })
    }

    #[pyo3(signature = (idx, delta=1))]
    fn update(&mut self, idx: u64, delta: i64) -> PyResult<()> {
        self.inner.update(idx, delta).map_err(to_py)
    }

    #[pyo3(signature = (idxs, delta=1))]
    fn update_many(&mut self, idxs: Vec<u64>, delta: i64) -> PyResult<()> {
        self.inner.update_many(&idxs, delta).map_err(to_py)
    }

    /// ("good", index, value), ("zero", None, None) or ("fail", None, None).
    fn sample(&mut self) -> (&'static str, Option<u64>, Option<i128>) {
        match self.inner.sample() {
            StdSampleResult::Good { index, value } => ("good", Some(index), Some(value)),
            StdSampleResult::ZeroVector => ("zero", None, None),
            StdSampleResult::Fail => ("fail", None, None),
        }
    }

    fn merge_from(&mut self, other: &StdSketch) -> PyResult<()> {
        self.inner.merge_from(&other.inner).map_err(to_py)
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.to_bytes())
    }

    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        Ok(Self { inner: standard_l0::StdSketch::from_bytes(data).map_err(to_py)? })
    }

    #[getter]
    fn n(&self) -> u64 {
        self.inner.params().n()
    }

    #[getter]
    fn regime(&self) -> &'static str {
        match self.inner.params().regime() {
            WordRegime::W64 => "w64",
            WordRegime::W128 => "w128",
        }
    }

    #[getter]
    fn payload_bytes(&self) -> usize {
        self.inner.params().payload_bytes()
    }

    fn __repr__(&self) -> String {
        let p = self.inner.params();
        format!(
            "StdSketch(n={}, rows={}, cols={}, regime={:?})",
            p.n(),
            p.num_rows(),
            p.num_columns(),
            self.regime()
        )
    }
}

/// Result of a spanning-forest pass over the engine's sketches.
#[pyclass]
struct SpanningForest {
    #[pyo3(get)]
    edges: Vec<(u32, u32)>,
    /// partition[v] = smallest node id in v's component.
    #[pyo3(get)]
    partition: Vec<u32>,
    #[pyo3(get)]
    rounds_used: u32,
    #[pyo3(get)]
    exhausted: bool,
}

#[pymethods]
impl SpanningForest {
    fn num_components(&self) -> usize {
        let mut roots = self.partition.clone();
        roots.sort_unstable();
        roots.dedup();
        roots.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "SpanningForest(components={}, edges={}, rounds_used={}, exhausted={})",
            self.num_components(),
            self.edges.len(),
            self.rounds_used,
            self.exhausted
        )
    }
}

/// Per-node sketch stacks supporting fully dynamic connectivity queries.
#[pyclass]
struct GraphEngine {
    inner: SketchEngine,
}

#[pymethods]
impl GraphEngine {
    #[new]
    #[pyo3(signature = (num_nodes, seed=1))]
    fn new(num_nodes: u32, seed: u64) -> PyResult<Self> {
        Ok(Self { inner: SketchEngine::new(GraphParams::new(num_nodes, seed).map_err(to_py)?) })
    }

    /// Toggle edge (u, v); insert and delete are the same operation.
    fn apply_update(&self, u: u32, v: u32) -> PyResult<()> {
        self.inner.apply_update(u, v).map_err(to_py)
    }

    /// Run a whole update stream through the buffered pipeline; returns
    /// (updates_applied, wall_seconds, updates_per_sec).
    #[pyo3(signature = (updates, workers=1, buffering="leaf", validate=true))]
    fn ingest(
        &self,
        py: Python<'_>,
        updates: Vec<PyUpdate>,
        workers: usize,
        buffering: &str,
        validate: bool,
    ) -> PyResult<(u64, f64, f64)> {
        let updates = parse_updates(updates)?;
        let mode = match buffering {
            "none" => sketchcc::buffering::BufferMode::None,
            "leaf" => sketchcc::buffering::BufferMode::LeafOnly,
            "tree" => sketchcc::buffering::BufferMode::GutterTree,
            other => {
                return Err(PyValueError::new_err(format!(
                    "buffering must be \"none\", \"leaf\" or \"tree\", got {other:?}"
                )))
            }
        };
        let mut options =
            IngestOptions::new(sketchcc::buffering::BufferConfig::new(mode), workers);
        options.validate = validate;
        let report = py
            .detach(|| ingest(&self.inner, updates.into_iter().map(Ok), &options))
            .map_err(to_py)?;
        Ok((report.updates, report.wall.as_secs_f64(), report.updates_per_sec()))
    }

    fn spanning_forest(&self) -> SpanningForest {
        let f = self.inner.spanning_forest();
        SpanningForest {
            edges: f.edges,
            partition: f.partition,
            rounds_used: f.rounds_used,
            exhausted: f.exhausted,
        }
    }

    fn write_snapshot(&self, path: PathBuf) -> PyResult<()> {
        self.inner.write_snapshot(&path).map_err(to_py)
    }

    #[staticmethod]
    fn read_snapshot(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: SketchEngine::read_snapshot(&path).map_err(to_py)? })
    }

    #[getter]
    fn num_nodes(&self) -> u32 {
        self.inner.params().num_nodes()
    }

    #[getter]
    fn rounds(&self) -> u32 {
        self.inner.params().rounds()
    }

    fn __repr__(&self) -> String {
        format!("GraphEngine(num_nodes={}, rounds={})", self.num_nodes(), self.rounds())
    }
}

/// Random graph on a power-of-two node count; returns its edge list.
#[pyfunction]
#[pyo3(signature = (num_nodes, edge_probability=0.5, skew=0.0, seed=1))]
fn generate_dense_graph(
    num_nodes: u32,
    edge_probability: f64,
    skew: f64,
    seed: u64,
) -> PyResult<Vec<(u32, u32)>> {
    let set = streamio::generate_dense_graph(num_nodes, edge_probability, skew, seed)
        .map_err(to_py)?;
    Ok(set.iter().collect())
}

/// Shuffle a target edge set into a valid insert/delete stream with extra
/// churn; returns (updates, disconnected_nodes, final_edge_count).
#[pyfunction]
#[pyo3(signature = (num_nodes, edges, seed=1, churn=1.0, disconnect=0))]
fn synthesize_stream(
    num_nodes: u32,
    edges: Vec<(u32, u32)>,
    seed: u64,
    churn: f64,
    disconnect: u32,
) -> PyResult<(Vec<PyUpdate>, Vec<u32>, u64)> {
    let mut set = EdgeSet::new(num_nodes);
    for (u, v) in edges {
        if u == v || u >= num_nodes || v >= num_nodes {
            return Err(PyValueError::new_err(format!("invalid edge ({u}, {v})")));
        }
        if !set.insert(u, v) {
            return Err(PyValueError::new_err(format!("duplicate edge ({u}, {v})")));
        }
    }
    let synth = streamio::synthesize_stream(&set, seed, churn, disconnect).map_err(to_py)?;
    Ok((dump_updates(&synth.updates), synth.disconnected, synth.final_edges))
}

#[pyfunction]
fn write_stream(path: PathBuf, num_nodes: u32, updates: Vec<PyUpdate>) -> PyResult<()> {
    streamio::write_stream(&path, num_nodes, &parse_updates(updates)?).map_err(to_py)
}

#[pyfunction]
fn read_stream(path: PathBuf) -> PyResult<(u32, Vec<PyUpdate>)> {
    let (header, updates) = streamio::read_stream(&path).map_err(to_py)?;
    Ok((header.num_nodes, dump_updates(&updates)))
}

/// Exact component labels after replaying `updates` on an adjacency
/// bitmap; ground truth for checking the sketch engine.
#[pyfunction]
fn exact_components(num_nodes: u32, updates: Vec<PyUpdate>) -> PyResult<Vec<u32>> {
    let mut oracle = AdjacencyOracle::new(num_nodes);
    for upd in parse_updates(updates)? {
        oracle.apply(upd).map_err(to_py)?;
    }
    Ok(oracle.components())
}

#[pymodule]
fn sketchcc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<CubeSketch>()?;
    m.add_class::<StdSketch>()?;
    m.add_class::<GraphEngine>()?;
    m.add_class::<SpanningForest>()?;
    m.add_function(wrap_pyfunction!(generate_dense_graph, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize_stream, m)?)?;
    m.add_function(wrap_pyfunction!(write_stream, m)?)?;
    m.add_function(wrap_pyfunction!(read_stream, m)?)?;
    m.add_function(wrap_pyfunction!(exact_components, m)?)?;
    Ok(())
}
