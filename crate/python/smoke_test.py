#!/usr/bin/env python3
"""Build the sketchcc_py extension with cargo and exercise every exposed
type end to end. No maturin needed: the cdylib is copied next to a temp
directory and imported directly.

Usage: python3 python/smoke_test.py [--release]
"""

import subprocess
import sys
import shutil
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent


def build_and_import(release: bool):
    cmd = ["cargo", "build", "-p", "sketchcc-py"]
    profile = "debug"
    if release:
        cmd.append("--release")
        profile = "release"
    subprocess.run(cmd, cwd=ROOT, check=True)

    lib = ROOT / "target" / profile / "libsketchcc_py.so"
    if not lib.exists():  # macOS name, in case
        lib = ROOT / "target" / profile / "libsketchcc_py.dylib"
    stage = Path(tempfile.mkdtemp(prefix="sketchcc_py."))
    shutil.copy2(lib, stage / "sketchcc_py.so")
    sys.path.insert(0, str(stage))
    import sketchcc_py

    return sketchcc_py


def check_cube_sketch(m):
    s = m.CubeSketch(1 << 20, seed=7)
    assert s.n == 1 << 20 and s.num_rows == 20 and s.num_columns == 7
    s.update(123)
    tag, idx = s.sample()
    assert (tag, idx) == ("good", 123), (tag, idx)

    # Toggle semantics: the second update(123) erases the first.
    s.update(123)
    assert s.sample() == ("zero", None)

    s.update_many([5, 99, 1_000_000])
    tag, idx = s.sample()
    assert tag == "good" and idx in (5, 99, 1_000_000)

    # Serialization round-trips bit-exactly.
    clone = m.CubeSketch.from_bytes(bytes(s.to_bytes()))
    assert clone == s and clone.sample() == s.sample()

    # Merge = symmetric difference of supports.
    a = m.CubeSketch(1 << 10, seed=3)
    b = m.CubeSketch(1 << 10, seed=3)
    a.update(1)
    a.update(2)
    b.update(2)
    b.update(3)
    a.merge_from(b)
    tag, idx = a.sample()
    assert tag == "good" and idx in (1, 3)

    try:
        s.update(1 << 20)
        raise AssertionError("out-of-range update must raise")
    except IndexError:
        pass
    print("CubeSketch            ok")


def check_std_sketch(m):
    s = m.StdSketch(1 << 12, seed=11)
    assert s.regime == "w64"
    s.update(77, delta=3)
    tag, idx, value = s.sample()
    assert (tag, idx, value) == ("good", 77, 3)
    s.update(77, delta=-3)
    assert s.sample() == ("zero", None, None)

    s.update_many([10, 20], delta=2)
    clone = m.StdSketch.from_bytes(bytes(s.to_bytes()))
    assert clone.sample() == s.sample()

    other = m.StdSketch(1 << 12, seed=11)
    other.update(10, delta=-2)
    s.merge_from(other)  # support shrinks to {20}
    assert s.sample() == ("good", 20, 2)

    big = m.StdSketch(10**12, seed=1)
    assert big.regime == "w128"
    big.update(10**11, delta=1)
    assert big.sample() == ("good", 10**11, 1)
    print("StdSketch             ok")


def check_engine(m):
    num_nodes = 64
    edges = m.generate_dense_graph(num_nodes, edge_probability=0.4, seed=5)
    updates, disconnected, final_edges = m.synthesize_stream(
        num_nodes, edges, seed=6, churn=1.0, disconnect=2
    )
    assert final_edges < len(updates) and len(disconnected) == 2

    engine = m.GraphEngine(num_nodes, seed=9)
    applied, wall, rate = engine.ingest(updates, workers=2, buffering="leaf")
    assert applied == len(updates) and rate > 0

    forest = engine.spanning_forest()
    exact = m.exact_components(num_nodes, updates)
    assert forest.partition == exact, "sketch partition differs from exact replay"
    assert forest.num_components() == len(set(exact))
    assert not forest.exhausted
    for node in disconnected:
        assert exact[node] == node, "disconnected node must be a singleton"

    # Snapshot round-trip preserves the partition.
    with tempfile.TemporaryDirectory() as d:
        snap = Path(d) / "engine.snap"
        engine.write_snapshot(snap)
        back = m.GraphEngine.read_snapshot(snap)
        assert back.num_nodes == num_nodes
        assert back.spanning_forest().partition == forest.partition

    # Single-update path agrees with the pipeline.
    solo = m.GraphEngine(num_nodes, seed=9)
    for op, u, v in updates:
        solo.apply_update(u, v)
    assert solo.spanning_forest().partition == forest.partition
    print("GraphEngine           ok")


def check_stream_io(m):
    updates = [("I", 0, 1), ("I", 1, 2), ("D", 0, 1)]
    with tempfile.TemporaryDirectory() as d:
        path = Path(d) / "s.str"
        m.write_stream(path, 4, updates)
        nodes, back = m.read_stream(path)
        assert nodes == 4 and back == updates
    assert m.exact_components(4, updates) == [0, 1, 1, 3]
    print("stream io             ok")


def main():
    release = "--release" in sys.argv[1:]
    m = build_and_import(release)
    check_cube_sketch(m)
    check_std_sketch(m)
    check_engine(m)
    check_stream_io(m)
    print("smoke test passed")


if __name__ == "__main__":
    main()
