//! Operator entry point for the sketch-based connected-components engine:
//! generate synthetic graph streams, ingest them through the buffered
//! pipeline, query snapshots, verify against an exact oracle, and benchmark
//! the two l0 samplers.
//!
//! Every flag can also be set through an environment variable with the
//! `SKETCHCC_` prefix (`SKETCHCC_STREAM`, `SKETCHCC_WORKERS`, ...); flags
//! win over the environment. Exit codes: 0 success, 1 verification failure,
//! 2 usage or I/O error.

use clap::{Args, Parser, Subcommand, ValueEnum};
use sketchcc::buffering::{BufferConfig, BufferMode};
use sketchcc::cubesketch::{CubeSketch, SketchParams};
use sketchcc::graph_engine::{GraphParams, SketchEngine};
use sketchcc::hashing::SketchSeed;
use sketchcc::pipeline::{ingest_with_queries, IngestOptions};
use sketchcc::standard_l0::{StdParams, StdSketch, WordRegime};
use sketchcc::streamio::{
    generate_dense_graph, read_stream, synthesize_stream, write_stream, write_text_stream,
    AdjacencyOracle, StreamReader, StreamUpdate,
};
use std::fmt::Write as _;
use std::fs::{File, OpenOptions};
use std::hint::black_box;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

const CSV_HELP: &str = "\
CSV schemas (--csv appends rows, writing the header only to a new file):
  ingest:   stream,nodes,updates,workers,buffering,gutter_factor,group_size,\
wall_secs,updates_per_sec,blocks_read,blocks_written
  bench-l0: vector_length,sampler,updates_per_sec,payload_bytes,serialized_bytes

Environment: every long flag has a SKETCHCC_-prefixed variable, e.g.
SKETCHCC_STREAM, SKETCHCC_NODES, SKETCHCC_WORKERS, SKETCHCC_BUFFERING.

Exit codes: 0 success, 1 verification failure, 2 usage or I/O error.";

#[derive(Parser)]
#[command(name = "sketchcc", version, about, after_help = CSV_HELP)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate a dense random graph and a churned insert/delete stream
    /// that replays to it.
    Gen(GenArgs),
    /// Feed a stream file through the buffered pipeline into a snapshot.
    Ingest(IngestArgs),
    /// Load a snapshot and report its connected components.
    Query(QueryArgs),
    /// Co-run the sketch engine and an exact adjacency oracle over a
    /// stream, comparing partitions at checkpoints.
    Verify(VerifyArgs),
    /// Measure update throughput and size of both l0 samplers.
    #[command(name = "bench-l0")]
    BenchL0(BenchArgs),
}

#[derive(Args)]
struct GenArgs {
    /// Node count; must be a power of two (recursive-matrix generator).
    #[arg(long, env = "SKETCHCC_NODES")]
    nodes: u32,
    /// Output stream file.
    #[arg(long, env = "SKETCHCC_STREAM")]
    stream: PathBuf,
    /// Output graph file (insert-only text stream); defaults to the
    /// stream path with `.graph.txt` appended.
    #[arg(long)]
    graph: Option<PathBuf>,
    /// Fraction of all node pairs present as edges.
    #[arg(long, default_value_t = 0.5)]
    edge_probability: f64,
    /// Quadrant skew of the recursive generator, 0 = uniform.
    #[arg(long, default_value_t = 0.0)]
    skew: f64,
    /// Expected extra insert/delete churn pairs per edge slot.
    #[arg(long, default_value_t = 1.0)]
    churn: f64,
    /// Nodes to fully disconnect by end of stream.
    #[arg(long, default_value_t = 0)]
    disconnect: u32,
    #[arg(long, env = "SKETCHCC_SEED", default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct IngestArgs {
    /// Input stream file.
    #[arg(long, env = "SKETCHCC_STREAM")]
    stream: PathBuf,
    /// Output snapshot file.
    #[arg(long, env = "SKETCHCC_SNAPSHOT")]
    snapshot: PathBuf,
    #[command(flatten)]
    pipeline: PipelineArgs,
    /// Flush and report component counts every this percent of the stream.
    #[arg(long, env = "SKETCHCC_QUERY_EVERY", value_name = "PERCENT")]
    query_every: Option<u64>,
    /// Skip per-update stream validity checking.
    #[arg(long)]
    no_validate: bool,
    /// Append a throughput row to this CSV file.
    #[arg(long, env = "SKETCHCC_CSV")]
    csv: Option<PathBuf>,
}

/// Pipeline shape shared by ingest and verify.
#[derive(Args)]
struct PipelineArgs {
    /// Sketch worker threads.
    #[arg(long, env = "SKETCHCC_WORKERS", default_value_t = 1)]
    workers: usize,
    #[arg(long, env = "SKETCHCC_BUFFERING", value_enum, default_value_t = Buffering::Leaf)]
    buffering: Buffering,
    /// Gutter capacity as a fraction of one node's sketch bytes;
    /// default 0.5 for leaf, 2.0 for tree.
    #[arg(long, env = "SKETCHCC_GUTTER_FACTOR")]
    gutter_factor: Option<f64>,
    /// Consecutive node ids sharing one gutter.
    #[arg(long, env = "SKETCHCC_GROUP_SIZE", default_value_t = 1)]
    group_size: u32,
    /// Backing file for tree buffering; defaults to a temp file.
    #[arg(long, env = "SKETCHCC_TREE_FILE")]
    tree_file: Option<PathBuf>,
    /// Engine master seed; snapshots are only comparable across runs
    /// sharing it.
    #[arg(long, env = "SKETCHCC_SEED", default_value_t = 1)]
    seed: u64,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Buffering {
    /// Hand every update straight to the work queue.
    None,
    /// RAM gutters, one batch per fill.
    Leaf,
    /// External-memory gutter tree.
    Tree,
}

impl Buffering {
    fn mode(self) -> BufferMode {
        match self {
            Buffering::None => BufferMode::None,
            Buffering::Leaf => BufferMode::LeafOnly,
            Buffering::Tree => BufferMode::GutterTree,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Buffering::None => "none",
            Buffering::Leaf => "leaf",
            Buffering::Tree => "tree",
        }
    }
}

#[derive(Args)]
struct QueryArgs {
    /// Snapshot file to load.
    #[arg(long, env = "SKETCHCC_SNAPSHOT")]
    snapshot: PathBuf,
}

#[derive(Args)]
struct VerifyArgs {
    /// Input stream file.
    #[arg(long, env = "SKETCHCC_STREAM")]
    stream: PathBuf,
    /// Compare engine and oracle partitions every this percent of the
    /// stream (plus once at the end).
    #[arg(long, env = "SKETCHCC_QUERY_EVERY", value_name = "PERCENT", default_value_t = 10)]
    query_every: u64,
    /// Also check this snapshot's partition against the oracle's final
    /// one (detects corrupted or stale snapshots).
    #[arg(long, env = "SKETCHCC_SNAPSHOT")]
    snapshot: Option<PathBuf>,
    #[arg(long, env = "SKETCHCC_SEED", default_value_t = 1)]
    seed: u64,
}

#[derive(Args)]
struct BenchArgs {
    /// Vector lengths to benchmark.
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "10000,1000000,1000000000000"
    )]
    lengths: Vec<u64>,
    /// Minimum measurement time per sampler per length.
    #[arg(long, default_value_t = 0.4)]
    min_secs: f64,
    /// Write rows to this CSV file instead of stdout.
    #[arg(long, env = "SKETCHCC_CSV")]
    csv: Option<PathBuf>,
    /// Write a log-log throughput plot to this SVG file.
    #[arg(long)]
    plot: Option<PathBuf>,
    #[arg(long, env = "SKETCHCC_SEED", default_value_t = 7)]
    seed: u64,
}

type AnyError = Box<dyn std::error::Error>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = match cli.cmd {
        Cmd::Gen(a) => cmd_gen(a),
        Cmd::Ingest(a) => cmd_ingest(a),
        Cmd::Query(a) => cmd_query(a),
        Cmd::Verify(a) => cmd_verify(a),
        Cmd::BenchL0(a) => cmd_bench_l0(a),
    };
    match run {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

// -----------------------------------------------------------------------
// gen
// -----------------------------------------------------------------------

fn cmd_gen(a: GenArgs) -> Result<ExitCode, AnyError> {
    let graph = generate_dense_graph(a.nodes, a.edge_probability, a.skew, a.seed)?;
    // Offset the stream seed so graph shape and churn schedule are
    // independent draws.
    let synth = synthesize_stream(&graph, a.seed.wrapping_add(1), a.churn, a.disconnect)?;

    let graph_path = a.graph.unwrap_or_else(|| {
        let mut os = a.stream.clone().into_os_string();
        os.push(".graph.txt");
        PathBuf::from(os)
    });
    let inserts: Vec<StreamUpdate> =
        graph.iter().map(|(u, v)| StreamUpdate::insert(u, v)).collect();
    write_text_stream(BufWriter::new(File::create(&graph_path)?), a.nodes, &inserts)?;
    write_stream(&a.stream, a.nodes, &synth.updates)?;

    println!(
        "nodes={} edges={} updates={} disconnected={}",
        a.nodes,
        graph.len(),
        synth.updates.len(),
        synth.disconnected.len()
    );
    println!("graph:  {}", graph_path.display());
    println!("stream: {}", a.stream.display());
    Ok(ExitCode::SUCCESS)
}

// -----------------------------------------------------------------------
// ingest
// -----------------------------------------------------------------------

fn buffer_config(p: &PipelineArgs) -> BufferConfig {
    let mut cfg = BufferConfig::new(p.buffering.mode());
    cfg.factor = p.gutter_factor;
    cfg.group_size = p.group_size;
    cfg.tree_file = p.tree_file.clone();
    cfg
}

fn cmd_ingest(a: IngestArgs) -> Result<ExitCode, AnyError> {
    let reader = StreamReader::open(&a.stream)?;
    let header = reader.header();
    let engine = SketchEngine::new(GraphParams::new(header.num_nodes, a.pipeline.seed)?);

    let mut options = IngestOptions::new(buffer_config(&a.pipeline), a.pipeline.workers);
    options.validate = !a.no_validate;
    if let Some(pct) = a.query_every {
        if pct == 0 || pct > 100 {
            return Err(format!("--query-every must be in 1..=100, got {pct}").into());
        }
        options.query_every = Some((header.num_updates * pct / 100).max(1));
    }

    let report = ingest_with_queries(&engine, reader, &options, |applied, eng| {
        let forest = eng.spanning_forest();
        println!(
            "after {applied} updates: {} components (forest {} edges, {} rounds)",
            forest.num_components(),
            forest.edges.len(),
            forest.rounds_used
        );
    })?;
    engine.write_snapshot(&a.snapshot)?;

    let secs = report.wall.as_secs_f64();
    println!(
        "ingested {} updates in {:.3}s: {:.3e} updates/sec ({} workers, {} buffering)",
        report.updates,
        secs,
        report.updates_per_sec(),
        a.pipeline.workers,
        a.pipeline.buffering.label()
    );
    if a.pipeline.buffering == Buffering::Tree {
        println!(
            "gutter tree io: {} blocks read, {} blocks written",
            report.io.blocks_read, report.io.blocks_written
        );
    }
    println!("snapshot: {}", a.snapshot.display());

    if let Some(csv) = &a.csv {
        let mut row = String::new();
        write!(
            row,
            "{},{},{},{},{},{},{},{:.6},{:.1},{},{}",
            a.stream.display(),
            header.num_nodes,
            report.updates,
            a.pipeline.workers,
            a.pipeline.buffering.label(),
            buffer_config(&a.pipeline).factor(),
            a.pipeline.group_size,
            secs,
            report.updates_per_sec(),
            report.io.blocks_read,
            report.io.blocks_written
        )?;
        append_csv(
            csv,
            "stream,nodes,updates,workers,buffering,gutter_factor,group_size,\
             wall_secs,updates_per_sec,blocks_read,blocks_written",
            &row,
        )?;
    }
    Ok(ExitCode::SUCCESS)
}

fn append_csv(path: &Path, header: &str, row: &str) -> Result<(), AnyError> {
    let fresh = !path.exists();
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    if fresh {
        writeln!(f, "{header}")?;
    }
    writeln!(f, "{row}")?;
    Ok(())
}

// -----------------------------------------------------------------------
// query
// -----------------------------------------------------------------------

fn cmd_query(a: QueryArgs) -> Result<ExitCode, AnyError> {
    let start = Instant::now();
    let engine = SketchEngine::read_snapshot(&a.snapshot)?;
    let forest = engine.spanning_forest();
    let wall = start.elapsed();
    println!("nodes={}", engine.params().num_nodes());
    println!("components={}", forest.num_components());
    println!("forest_edges={}", forest.edges.len());
    println!("rounds_used={}", forest.rounds_used);
    println!("exhausted={}", forest.exhausted);
    println!("wall_ms={:.1}", wall.as_secs_f64() * 1e3);
    Ok(ExitCode::SUCCESS)
}

// -----------------------------------------------------------------------
// verify
// -----------------------------------------------------------------------

fn cmd_verify(a: VerifyArgs) -> Result<ExitCode, AnyError> {
    if a.query_every == 0 || a.query_every > 100 {
        return Err(format!("--query-every must be in 1..=100, got {}", a.query_every).into());
    }
    let (header, updates) = read_stream(&a.stream)?;
    let engine = SketchEngine::new(GraphParams::new(header.num_nodes, a.seed)?);
    let mut oracle = AdjacencyOracle::new(header.num_nodes);
    let every = (updates.len() as u64 * a.query_every / 100).max(1);

    let mut checks = 0u64;
    let mut failures = 0u64;
    let mut check_time = 0.0f64;
    let mut check = |engine: &SketchEngine, oracle: &AdjacencyOracle, at: usize| {
        let t = Instant::now();
        let forest = engine.spanning_forest();
        check_time += t.elapsed().as_secs_f64();
        checks += 1;
        let want = oracle.components();
        if forest.partition != want {
            failures += 1;
            println!("MISMATCH after {at} updates:");
            dump_partition_diff(&forest.partition, &want);
        }
    };

    for (i, upd) in updates.iter().enumerate() {
        oracle
            .apply(*upd)
            .map_err(|e| format!("invalid stream, update {i}: {e}"))?;
        engine.apply_update(upd.u, upd.v)?;
        if (i + 1) as u64 % every == 0 || i + 1 == updates.len() {
            check(&engine, &oracle, i + 1);
        }
    }
    if updates.is_empty() {
        check(&engine, &oracle, 0);
    }

    if let Some(snap) = &a.snapshot {
        let snapped = SketchEngine::read_snapshot(snap)?;
        if snapped.params().num_nodes() != header.num_nodes {
            return Err(format!(
                "snapshot has {} nodes, stream has {}",
                snapped.params().num_nodes(),
                header.num_nodes
            )
            .into());
        }
        checks += 1;
        let forest = snapped.spanning_forest();
        let want = oracle.components();
        if forest.partition != want {
            failures += 1;
            println!("MISMATCH between snapshot and oracle final partition:");
            dump_partition_diff(&forest.partition, &want);
        } else {
            println!("snapshot partition matches the oracle");
        }
    }

    println!(
        "checks={} failures={} avg_check_ms={:.2}",
        checks,
        failures,
        check_time / checks.max(1) as f64 * 1e3
    );
    if failures > 0 {
        eprintln!("verification failed");
        Ok(ExitCode::from(1))
    } else {
        Ok(ExitCode::SUCCESS)
    }
}

/// First few nodes whose component labels disagree.
fn dump_partition_diff(got: &[u32], want: &[u32]) {
    let mut shown = 0;
    for (v, (g, w)) in got.iter().zip(want).enumerate() {
        if g != w {
            println!("  node {v}: engine component {g}, oracle component {w}");
            shown += 1;
            if shown == 10 {
                let total = got.iter().zip(want).filter(|(g, w)| g != w).count();
                println!("  ... {} differing nodes total", total);
                break;
            }
        }
    }
}

// -----------------------------------------------------------------------
// bench-l0
// -----------------------------------------------------------------------

fn measured_rate(mut batch: impl FnMut(), batch_updates: u64, min_secs: f64) -> f64 {
    batch(); // warm caches and branch predictors
    let start = Instant::now();
    let mut total = 0u64;
    loop {
        batch();
        total += batch_updates;
        if start.elapsed().as_secs_f64() >= min_secs {
            break;
        }
    }
    total as f64 / start.elapsed().as_secs_f64()
}

struct BenchRow {
    length: u64,
    sampler: &'static str,
    rate: f64,
    payload: usize,
    serialized: usize,
}

fn cmd_bench_l0(a: BenchArgs) -> Result<ExitCode, AnyError> {
    let mut rows = Vec::new();
    for &n in &a.lengths {
        // Cheap seeded generator; avoids dragging a rand dependency in for
        // one index block.
        let mut state = a.seed | 1;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            state % n
        };
        let idxs: Vec<u64> = (0..200_000).map(|_| next()).collect();

        let cube_params = SketchParams::new(n, SketchSeed::new(a.seed))?;
        let mut cube = CubeSketch::new(cube_params);
        let cube_rate =
            measured_rate(|| cube.update_many(&idxs).unwrap(), idxs.len() as u64, a.min_secs);
        black_box(cube.to_bytes());
        rows.push(BenchRow {
            length: n,
            sampler: "cube",
            rate: cube_rate,
            payload: cube_params.payload_bytes(),
            serialized: cube_params.serialized_bytes(),
        });

        let std_params = StdParams::new(n, SketchSeed::new(a.seed))?;
        let (label, std_batch) = match std_params.regime() {
            WordRegime::W64 => ("std64", 20_000),
            WordRegime::W128 => ("std128", 2_000),
        };
        let mut std = StdSketch::new(std_params.clone());
        let std_idxs = &idxs[..std_batch];
        let std_rate = measured_rate(
            || std.update_many(std_idxs, 1).unwrap(),
            std_idxs.len() as u64,
            a.min_secs,
        );
        black_box(std.to_bytes());
        rows.push(BenchRow {
            length: n,
            sampler: label,
            rate: std_rate,
            payload: std_params.payload_bytes(),
            serialized: std_params.serialized_bytes(),
        });
    }

    let header = "vector_length,sampler,updates_per_sec,payload_bytes,serialized_bytes";
    let mut out = String::from(header);
    for r in &rows {
        write!(
            out,
            "\n{},{},{:.1},{},{}",
            r.length, r.sampler, r.rate, r.payload, r.serialized
        )?;
    }
    match &a.csv {
        Some(path) => std::fs::write(path, format!("{out}\n"))?,
        None => println!("{out}"),
    }
    if let Some(path) = &a.plot {
        std::fs::write(path, plot_svg(&rows))?;
        println!("plot: {}", path.display());
    }
    Ok(ExitCode::SUCCESS)
}

/// Minimal log-log SVG: one polyline per sampler, decade gridlines.
fn plot_svg(rows: &[BenchRow]) -> String {
    const W: f64 = 640.0;
    const H: f64 = 420.0;
    const ML: f64 = 70.0; // margins
    const MR: f64 = 20.0;
    const MT: f64 = 30.0;
    const MB: f64 = 50.0;

    let xs: Vec<f64> = rows.iter().map(|r| (r.length as f64).log10()).collect();
    let ys: Vec<f64> = rows.iter().map(|r| r.rate.log10()).collect();
    let (x0, x1) = bounds(&xs);
    let (y0, y1) = bounds(&ys);
    let px = |x: f64| ML + (x - x0) / (x1 - x0).max(1e-9) * (W - ML - MR);
    let py = |y: f64| H - MB - (y - y0) / (y1 - y0).max(1e-9) * (H - MT - MB);

    let mut svg = String::new();
    let _ = write!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="12">
<rect width="{W}" height="{H}" fill="white"/>
<text x="{}" y="18" text-anchor="middle" font-size="14">l0 sampler update throughput</text>
<text x="{}" y="{}" text-anchor="middle">vector length (log10)</text>
<text x="16" y="{}" text-anchor="middle" transform="rotate(-90 16 {})">updates/sec (log10)</text>
"#,
        W / 2.0,
        W / 2.0,
        H - 12.0,
        H / 2.0,
        H / 2.0
    );
    // Decade ticks.
    for d in x0.ceil() as i64..=x1.floor() as i64 {
        let x = px(d as f64);
        let _ = write!(
            svg,
            "<line x1=\"{x:.1}\" y1=\"{MT}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"#ddd\"/>\
             <text x=\"{x:.1}\" y=\"{:.1}\" text-anchor=\"middle\">1e{d}</text>\n",
            H - MB,
            H - MB + 16.0
        );
    }
    for d in y0.ceil() as i64..=y1.floor() as i64 {
        let y = py(d as f64);
        let _ = write!(
            svg,
            "<line x1=\"{ML}\" y1=\"{y:.1}\" x2=\"{:.1}\" y2=\"{y:.1}\" stroke=\"#ddd\"/>\
             <text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">1e{d}</text>\n",
            W - MR,
            ML - 6.0,
            y + 4.0
        );
    }
    let _ = write!(
        svg,
        "<rect x=\"{ML}\" y=\"{MT}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"none\" stroke=\"black\"/>\n",
        W - ML - MR,
        H - MT - MB
    );
    // One polyline + point markers per sampler, colors fixed.
    let samplers: Vec<&'static str> = {
        let mut s: Vec<&'static str> = rows.iter().map(|r| r.sampler).collect();
        s.dedup();
        s.sort_unstable();
        s.dedup();
        s
    };
    let color = |s: &str| match s {
        "cube" => "#1f77b4",
        "std64" => "#d62728",
        _ => "#ff7f0e",
    };
    for (i, sampler) in samplers.iter().enumerate() {
        let pts: String = rows
            .iter()
            .filter(|r| r.sampler == *sampler)
            .map(|r| {
                format!("{:.1},{:.1} ", px((r.length as f64).log10()), py(r.rate.log10()))
            })
            .collect();
        let c = color(sampler);
        let _ = write!(
            svg,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{c}\" stroke-width=\"2\"/>\n",
            pts.trim_end()
        );
        for r in rows.iter().filter(|r| r.sampler == *sampler) {
            let _ = write!(
                svg,
                "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"{c}\"/>\n",
                px((r.length as f64).log10()),
                py(r.rate.log10())
            );
        }
        let ly = MT + 16.0 + i as f64 * 16.0;
        let _ = write!(
            svg,
            "<line x1=\"{:.1}\" y1=\"{ly:.1}\" x2=\"{:.1}\" y2=\"{ly:.1}\" stroke=\"{c}\" stroke-width=\"2\"/>\
             <text x=\"{:.1}\" y=\"{:.1}\">{sampler}</text>\n",
            W - MR - 110.0,
            W - MR - 90.0,
            W - MR - 84.0,
            ly + 4.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

fn bounds(vals: &[f64]) -> (f64, f64) {
    let lo = vals.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        (lo - 0.5, hi + 0.5)
    } else {
        (lo, hi)
    }
}
