//! End-to-end runs of the `sketchcc` binary: every subcommand, the
//! determinism guarantees, and all three exit codes.

use sketchcc::graph_engine::GraphParams;
use sketchcc::streamio::{read_text_stream, write_stream};
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sketchcc"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn sketchcc")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "sketchcc {args:?} failed:\n{}{}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn tmp(dir: &tempfile::TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn gen_is_deterministic_per_seed() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp(&dir, "a.str"), tmp(&dir, "b.str"), tmp(&dir, "c.str"));
    let gen = |path: &Path, seed: &str| {
        ok(&["gen", "--nodes", "64", "--stream", s(path), "--seed", seed, "--disconnect", "2"])
    };
    gen(&a, "9");
    gen(&b, "9");
    gen(&c, "10");
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(
        fs::read(a.with_extension("str.graph.txt")).unwrap(),
        fs::read(b.with_extension("str.graph.txt")).unwrap()
    );
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

/// Snapshot bytes must not depend on buffering mode, gutter sizing, or
/// node grouping; only on (stream, seed).
#[test]
fn snapshot_is_invariant_to_buffering_choices() {
    let dir = tempfile::tempdir().unwrap();
    let stream = tmp(&dir, "g.str");
    ok(&["gen", "--nodes", "64", "--stream", s(stream.as_path()), "--seed", "5"]);

    let configs: &[&[&str]] = &[
        &["--buffering", "none"],
        &["--buffering", "leaf", "--gutter-factor", "0.1"],
        &["--buffering", "leaf", "--group-size", "8"],
        &["--buffering", "tree"],
    ];
    let mut snaps = Vec::new();
    for (i, extra) in configs.iter().enumerate() {
        let snap = tmp(&dir, &format!("s{i}.snap"));
        let mut args = vec!["ingest", "--stream", s(&stream), "--snapshot", s(&snap)];
        args.extend_from_slice(extra);
        ok(&args);
        snaps.push(fs::read(&snap).unwrap());
    }
    for other in &snaps[1..] {
        assert_eq!(&snaps[0], other);
    }
}

#[test]
fn empty_stream_yields_all_singletons() {
    let dir = tempfile::tempdir().unwrap();
    let stream = tmp(&dir, "empty.str");
    let snap = tmp(&dir, "empty.snap");
    write_stream(&stream, 16, &[]).unwrap();
    ok(&["ingest", "--stream", s(&stream), "--snapshot", s(&snap)]);
    let out = ok(&["query", "--snapshot", s(&snap)]);
    assert!(out.contains("components=16"), "{out}");
    assert!(out.contains("forest_edges=0"), "{out}");
}

#[test]
fn verify_passes_on_good_stream_and_matching_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let stream = tmp(&dir, "g.str");
    let snap = tmp(&dir, "g.snap");
    ok(&["gen", "--nodes", "64", "--stream", s(&stream), "--seed", "3", "--disconnect", "1"]);
    ok(&["ingest", "--stream", s(&stream), "--snapshot", s(&snap)]);
    let out = ok(&[
        "verify", "--stream", s(&stream), "--snapshot", s(&snap), "--query-every", "25",
    ]);
    assert!(out.contains("failures=0"), "{out}");
    assert!(out.contains("snapshot partition matches"), "{out}");
}

/// Zero every sketch payload in the snapshot (keeping headers parseable):
/// the partition degenerates to all-singletons, which verify must flag
/// with exit code 1.
#[test]
fn verify_flags_corrupted_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let stream = tmp(&dir, "g.str");
    let snap = tmp(&dir, "g.snap");
    ok(&["gen", "--nodes", "32", "--stream", s(&stream), "--seed", "4"]);
    ok(&["ingest", "--stream", s(&stream), "--snapshot", s(&snap)]);

    let params = GraphParams::new(32, 1).unwrap();
    let sketch_bytes = params.round_sketch_params(0).serialized_bytes();
    const FILE_HEADER: usize = 28;
    const SKETCH_HEADER: usize = 28;
    let mut bytes = fs::read(&snap).unwrap();
    let sketches = 32 * params.rounds() as usize;
    assert_eq!(bytes.len(), FILE_HEADER + sketches * sketch_bytes);
    for i in 0..sketches {
        let start = FILE_HEADER + i * sketch_bytes + SKETCH_HEADER;
        bytes[start..FILE_HEADER + (i + 1) * sketch_bytes].fill(0);
    }
    fs::write(&snap, bytes).unwrap();

    let out = run(&["verify", "--stream", s(&stream), "--snapshot", s(&snap)]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stdout));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("MISMATCH between snapshot and oracle"), "{stdout}");
    assert!(stdout.contains("differing nodes total"), "{stdout}");
}

#[test]
fn truncated_snapshot_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let stream = tmp(&dir, "g.str");
    let snap = tmp(&dir, "g.snap");
    ok(&["gen", "--nodes", "32", "--stream", s(&stream), "--seed", "4"]);
    ok(&["ingest", "--stream", s(&stream), "--snapshot", s(&snap)]);
    let bytes = fs::read(&snap).unwrap();
    fs::write(&snap, &bytes[..bytes.len() / 2]).unwrap();
    let out = run(&["query", "--snapshot", s(&snap)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
    assert_eq!(run(&["query"]).status.code(), Some(2)); // missing --snapshot
    let dir = tempfile::tempdir().unwrap();
    let stream = tmp(&dir, "x.str");
    // 63 is not a power of two; the generator refuses it.
    let out = run(&["gen", "--nodes", "63", "--stream", s(&stream)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("power of two"));
}

/// Zachary's karate club (34 nodes, 78 edges), the usual tiny sanity
/// graph: one connected component. Exercises the text codec as the path
/// for bringing external edge lists in.
const KARATE: &str = "\
1 2;1 3;2 3;1 4;2 4;3 4;1 5;1 6;1 7;5 7;6 7;1 8;2 8;3 8;4 8;1 9;3 9;3 10;1 11;\
5 11;6 11;1 12;1 13;4 13;1 14;2 14;3 14;4 14;6 17;7 17;1 18;2 18;1 20;2 20;\
1 22;2 22;24 26;25 26;3 28;24 28;25 28;3 29;24 30;27 30;2 31;9 31;1 32;25 32;\
26 32;29 32;3 33;9 33;15 33;16 33;19 33;21 33;23 33;24 33;30 33;31 33;32 33;\
9 34;10 34;14 34;15 34;16 34;19 34;20 34;21 34;23 34;24 34;27 34;28 34;29 34;\
30 34;31 34;32 34;33 34";

#[test]
fn text_codec_ingests_external_edge_list() {
    let edges: Vec<(u32, u32)> = KARATE
        .split(';')
        .map(|pair| {
            let (u, v) = pair.split_once(' ').unwrap();
            // 1-based in the classic listing.
            (u.parse::<u32>().unwrap() - 1, v.parse::<u32>().unwrap() - 1)
        })
        .collect();
    assert_eq!(edges.len(), 78);

    let mut text = format!("34 {}\n", edges.len());
    for (u, v) in &edges {
        text.push_str(&format!("I {u} {v}\n"));
    }
    let (header, updates) = read_text_stream(text.as_bytes()).unwrap();
    assert_eq!(header.num_nodes, 34);

    let dir = tempfile::tempdir().unwrap();
    let stream = tmp(&dir, "karate.str");
    let snap = tmp(&dir, "karate.snap");
    write_stream(&stream, header.num_nodes, &updates).unwrap();

    ok(&["ingest", "--stream", s(&stream), "--snapshot", s(&snap)]);
    let out = ok(&["query", "--snapshot", s(&snap)]);
    assert!(out.contains("components=1"), "{out}");
    let out = ok(&["verify", "--stream", s(&stream), "--snapshot", s(&snap)]);
    assert!(out.contains("failures=0"), "{out}");
}

#[test]
fn csv_files_have_stable_schemas() {
    let dir = tempfile::tempdir().unwrap();
    let stream = tmp(&dir, "g.str");
    let snap = tmp(&dir, "g.snap");
    let csv = tmp(&dir, "runs.csv");
    ok(&["gen", "--nodes", "32", "--stream", s(&stream), "--seed", "2"]);
    for _ in 0..2 {
        ok(&["ingest", "--stream", s(&stream), "--snapshot", s(&snap), "--csv", s(&csv)]);
    }
    let lines: Vec<String> = fs::read_to_string(&csv).unwrap().lines().map(String::from).collect();
    assert_eq!(lines.len(), 3, "one header plus one row per run");
    assert_eq!(
        lines[0],
        "stream,nodes,updates,workers,buffering,gutter_factor,group_size,\
         wall_secs,updates_per_sec,blocks_read,blocks_written"
    );
    assert!(lines[1].contains(",leaf,"));

    let bench_csv = tmp(&dir, "bench.csv");
    let plot = tmp(&dir, "bench.svg");
    ok(&[
        "bench-l0", "--lengths", "256,4096", "--min-secs", "0.01",
        "--csv", s(&bench_csv), "--plot", s(&plot),
    ]);
    let bench: Vec<String> =
        fs::read_to_string(&bench_csv).unwrap().lines().map(String::from).collect();
    assert_eq!(bench[0], "vector_length,sampler,updates_per_sec,payload_bytes,serialized_bytes");
    assert_eq!(bench.len(), 5, "two samplers per length");
    assert!(bench[1].starts_with("256,cube,"));
    assert!(bench[2].starts_with("256,std64,"));
    let svg = fs::read_to_string(&plot).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline"));
}

/// Mid-ingest queries flush all buffered updates first, so the reported
/// component counts match an exact replay at those points.
#[test]
fn ingest_query_every_reports_quiescent_counts() {
    let dir = tempfile::tempdir().unwrap();
    let stream = tmp(&dir, "g.str");
    let snap = tmp(&dir, "g.snap");
    ok(&["gen", "--nodes", "32", "--stream", s(&stream), "--seed", "8", "--disconnect", "3"]);
    let out = ok(&[
        "ingest", "--stream", s(&stream), "--snapshot", s(&snap),
        "--buffering", "leaf", "--query-every", "50",
    ]);
    let reports = out.lines().filter(|l| l.contains("components")).count();
    assert!(reports >= 2, "{out}");
    // Final state has the 3 disconnected nodes as singletons.
    assert!(out.lines().last().is_some());
    let query_out = ok(&["query", "--snapshot", s(&snap)]);
    assert!(query_out.contains("components=4"), "{query_out}");
}
