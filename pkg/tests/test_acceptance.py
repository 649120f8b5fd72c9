"""End-to-end acceptance checks, one test per criterion.

Each test prints a single ``CRITERION k PASS|FAIL`` line (also repeated in the
terminal summary). Run directly with ``python3 tests/test_acceptance.py``.
"""

import contextlib
import itertools
import os
import shutil
import sys
import time

import numpy as np
import pytest

from gabgraph.algorithms import PageRank, SSSP, reference_pagerank, reference_sssp
from gabgraph.cache import CacheConfig, CacheMode, EdgeCache, select_mode
from gabgraph.comm import Codec, Kind, SparsityPolicy, decode_and_apply, decode_frame, encode_updates
from gabgraph.cost import WorkloadParams, combining_ratio, memory_aa
from gabgraph.engine import EngineConfig, VertexStateArrays, run
from gabgraph.ingest import ingest_arrays
from gabgraph.synth import random_graph
from gabgraph.tiles import Dataset, MANIFEST_FILE, TILES_DIR, INDEG_FILE, OUTDEG_FILE

from conftest import edge_multiset
from test_comm import desc, sample_frames, tcp_echo

RESULTS = {}

SERVERS = (1, 2, 4)
WORKERS = (1, 4)
MODES = tuple(CacheMode)
COMMS = ("dense", "sparse", "hybrid")
SKIPS = (True, False)
CONFIGS = list(itertools.product(SERVERS, WORKERS, MODES, COMMS, SKIPS))
NUM_GRAPHS = 50


@contextlib.contextmanager
def criterion(capsys, number, title):
    start = time.perf_counter()
    try:
        yield
    except BaseException as exc:
        line = f"CRITERION {number} FAIL  {title}: {type(exc).__name__}: {str(exc).splitlines()[0] if str(exc) else ''}"
        RESULTS[number] = line
        with capsys.disabled():
            print("\n" + line)
        raise
    line = f"CRITERION {number} PASS  {title} ({time.perf_counter() - start:.1f}s)"
    RESULTS[number] = line
    with capsys.disabled():
        print("\n" + line)


def corpus(weighted):
    """Fifty graphs with |V| in [2, 500], alternating uniform and power-law degrees."""
    rng = np.random.default_rng(20240601)
    sizes = np.r_[2, 500, rng.integers(2, 501, NUM_GRAPHS - 2)]
    graphs = []
    for i, n in enumerate(sizes.tolist()):
        kind = "powerlaw" if i % 2 else "uniform"
        cover = "ring" if i % 4 < 2 else "in"
        d = float(rng.uniform(1, 8))
        src, dst, w = random_graph(rng, n, d, kind=kind, weighted=weighted, cover=cover)
        m = len(src)
        # from one tile up to ~40 tiles; unit tiles only on tiny graphs to bound runtime
        s = int(rng.choice([1 if m <= 60 else m // 40, max(1, m // 12), max(1, m // 5), m]))
        graphs.append((n, src, dst, w, s, int(rng.integers(0, n))))
    return graphs


def configs_for(ds, k):
    total = ds.manifest.total_tile_bytes
    for j, (n, t, mode, comm, skip) in enumerate(CONFIGS):
        yield (n, t, mode, comm, skip), EngineConfig(
            num_servers=n, workers_per_server=t, max_supersteps=k,
            comm=SparsityPolicy(comm), codec=Codec(j % 3),
            cache=CacheConfig(total // 2, mode), skip=skip, barrier_timeout=30)


@pytest.mark.slow
def test_criterion_1_pagerank_oracle(tmp_path, capsys):
    with criterion(capsys, 1, f"PageRank oracle, {NUM_GRAPHS} graphs x {len(CONFIGS)} configs, |dev| <= 1e-12"):
        worst = 0.0
        kinds = set()
        for g, (n, src, dst, _w, s, _src) in enumerate(corpus(weighted=False)):
            ds_path = tmp_path / f"g{g}"
            ingest_arrays(src, dst, ds_path, avg_tile_size=s)
            ds = Dataset(ds_path)
            kinds.add(ds.manifest.tile_count > 1)
            expected = np.array(reference_pagerank(n, src, dst, 20))
            for key, config in configs_for(ds, 20):
                res = run(config, ds, PageRank())
                dev = float(np.max(np.abs(res.values - expected)))
                worst = max(worst, dev)
                assert res.supersteps == 20 or res.reports[-1].updated_vertex_count == 0
                assert dev <= 1e-12, f"graph {g} config {key}: deviation {dev}"
        assert kinds == {True, False}
        with capsys.disabled():
            print(f"\n  worst PageRank deviation {worst!r}")


@pytest.mark.slow
def test_criterion_2_sssp_oracle(tmp_path, capsys):
    with criterion(capsys, 2, f"SSSP oracle, {NUM_GRAPHS} graphs x {len(CONFIGS)} configs, exact + hop bound"):
        for g, (n, src, dst, w, s, source) in enumerate(corpus(weighted=True)):
            assert w.min() >= 1 and w.max() <= 10 and np.all(w == np.round(w))
            ds_path = tmp_path / f"g{g}"
            ingest_arrays(src, dst, ds_path, weight=w, avg_tile_size=s)
            ds = Dataset(ds_path)
            expected, hops = reference_sssp(n, src, dst, w, source, with_hops=True)
            bound = max(hops) + 1
            for key, config in configs_for(ds, 10 * n + 10):
                res = run(config, ds, SSSP(source))
                assert res.values.tolist() == expected, f"graph {g} config {key}"
                assert res.supersteps <= bound, f"graph {g} config {key}: {res.supersteps} > {bound}"


def _dataset_bytes(path):
    names = [MANIFEST_FILE, INDEG_FILE, OUTDEG_FILE]
    names += [os.path.join(TILES_DIR, f) for f in sorted(os.listdir(path / TILES_DIR))]
    return {name: (path / name).read_bytes() for name in names}


@pytest.mark.slow
def test_criterion_3_partition_invariants(tmp_path, capsys):
    with criterion(capsys, 3, "partition invariants, 100 graphs x S in {1,2,8,64}"):
        rng = np.random.default_rng(7)
        for g in range(100):
            n = int(rng.integers(1, 300))
            src, dst, w = random_graph(rng, n, float(rng.uniform(0.5, 6)),
                                       kind=("uniform", "powerlaw")[g % 2], weighted=g % 3 == 0,
                                       cover=("ring", "in")[g % 2])
            for s in (1, 2, 8, 64):
                a, b = tmp_path / f"{g}-{s}-a", tmp_path / f"{g}-{s}-b"
                ingest_arrays(src, dst, a, weight=w, avg_tile_size=s)
                ingest_arrays(src, dst, b, weight=w, avg_tile_size=s, memory_edges=max(1, len(src) // 3))
                assert _dataset_bytes(a) == _dataset_bytes(b), f"graph {g} S={s}: reruns differ"
                ds = Dataset(a)
                m = ds.manifest
                got = ds.edges()
                assert edge_multiset(*got) == edge_multiset(src, dst, w), f"graph {g} S={s}: edges lost"
                max_in = int(ds.in_degree().max())
                for t in range(m.tile_count):
                    tile = ds.load_tile(t)
                    lo, hi = m.splitters[t], m.splitters[t + 1]
                    _, tdst, _ = tile.edges()
                    assert np.all((tdst >= lo) & (tdst < hi))
                    if t < m.tile_count - 1:
                        assert s <= tile.num_edges < s + max_in, f"graph {g} S={s} tile {t}"
                    else:
                        assert 0 <= tile.num_edges < s + max_in
            for name in os.listdir(tmp_path):
                if name.startswith(f"{g}-"):
                    shutil.rmtree(tmp_path / name)


def _select_oracle(total, cap):
    for i, g in zip((1, 2, 3, 4), (1, 2, 4, 5)):
        if total <= g * cap:
            return i
    return 3


def test_criterion_4_formula_anchors(capsys):
    with criterion(capsys, 4, "formula anchors (eta, AA memory, cache mode rule)"):
        eta = combining_ratio(85.7, 216)
        assert abs(eta - 0.82) <= 0.01, eta
        aa = memory_aa(WorkloadParams(1.1e9, 91.8e9, size_vertex_msg=20))
        assert abs(aa - 21e9) <= 0.1 * 21e9, aa
        for total, cap in itertools.product(range(0, 1001), range(0, 251)):
            assert select_mode(total, cap) == _select_oracle(total, cap), (total, cap)
        assert select_mode(150, 100) == 2 and select_mode(10, 100) == 1 and select_mode(1000, 100) == 3
        with capsys.disabled():
            print(f"\n  eta={eta:.4f} memory_aa={aa / 1e9:.1f} GB")


def test_criterion_5_cache_properties(tmp_path, capsys):
    with criterion(capsys, 5, "cache: warm scans read no disk, capacity 0 all misses, misses monotone"):
        rng = np.random.default_rng(5)
        src, dst, w = random_graph(rng, 400, 6, kind="powerlaw", weighted=True, cover="in")
        ingest_arrays(src, dst, tmp_path / "ds", weight=w, avg_tile_size=100)
        ds = Dataset(tmp_path / "ds")
        total = ds.manifest.total_tile_bytes
        reference = run(EngineConfig(max_supersteps=15), ds, SSSP(0)).values
        for n, mode in itertools.product((1, 2), MODES):
            for program in (PageRank(), SSSP(0)):
                full = run(EngineConfig(num_servers=n, workers_per_server=4, max_supersteps=15,
                                        cache=CacheConfig(total, mode)), ds, program)
                for r in full.reports[1:]:
                    assert r.cache.disk_bytes_read == 0 and r.cache.disk_reads == 0
                    assert r.cache.misses == 0
                    if r.tiles_processed:
                        assert r.cache.hit_ratio == 1.0
                cold = run(EngineConfig(num_servers=n, workers_per_server=4, max_supersteps=15,
                                        cache=CacheConfig(0, mode)), ds, program)
                assert cold.values.tolist() == full.values.tolist()
                for r in cold.reports:
                    assert r.cache.misses == r.tiles_processed and r.cache.hits == 0
            for cap in (0, total // 3, total):
                res = run(EngineConfig(num_servers=n, cache=CacheConfig(cap, mode)), ds, SSSP(0))
                assert res.values.tolist() == reference.tolist()
        # capacity sweep under the engine's cyclic scan, one worker so first-touch order is fixed
        for n, mode in itertools.product((1, 2), MODES):
            prev = None
            for cap in np.linspace(0, total, 25).astype(int).tolist() + [total * 2]:
                res = run(EngineConfig(num_servers=n, max_supersteps=8, cache=CacheConfig(cap, mode)),
                          ds, PageRank())
                misses = sum(r.cache.misses for r in res.reports)
                assert prev is None or misses <= prev, f"N={n} mode={mode} cap={cap}: {misses} > {prev}"
                prev = misses
            assert prev == ds.manifest.tile_count


def test_criterion_6_comm_properties(capsys):
    with criterion(capsys, 6, "comm: cross-encoding, hybrid rule, sparse size, TCP round trip"):
        rng = np.random.default_rng(6)
        for i in range(1000):
            nt = int(rng.integers(0, 300))
            first = int(rng.integers(0, 10_000))
            k = int(rng.integers(0, nt + 1))
            ids = np.sort(rng.choice(nt, size=k, replace=False)) + first
            vals = rng.standard_normal(k) * 10.0 ** rng.integers(-5, 6)
            states = []
            for mode in ("dense", "sparse"):
                frame = encode_updates(ids, vals, desc(first, nt, i), SparsityPolicy(mode),
                                       superstep=3, codec=Codec(i % 3)).to_frame()
                s = VertexStateArrays.allocate(first + nt)
                assert decode_and_apply(frame, s, superstep=3) == k
                states.append(s)
            assert np.array_equal(states[0].updated_flags, states[1].updated_flags)
            assert states[0].updated_value.tobytes() == states[1].updated_value.tobytes()
            kind = SparsityPolicy("hybrid").choose(nt, k)
            ratio = (nt - k) / nt if nt else 1.0
            assert (kind is Kind.SPARSE) == (ratio > 0.8)
            if nt and k <= 0.2 * nt:
                d = encode_updates(ids, vals, desc(first, nt), SparsityPolicy("dense")).payload()
                sp = encode_updates(ids, vals, desc(first, nt), SparsityPolicy("sparse")).payload()
                assert len(sp) < len(d), (nt, k)
        for nt in range(1, 1001):
            for k in range(0, nt // 5 + 1, max(1, nt // 50)):
                ids = np.arange(k)
                d = encode_updates(ids, np.ones(k), desc(0, nt), SparsityPolicy("dense")).payload()
                sp = encode_updates(ids, np.ones(k), desc(0, nt), SparsityPolicy("sparse")).payload()
                assert len(sp) < len(d), (nt, k)
        frames = sample_frames(rng, 200)
        echoed = tcp_echo(frames)
        assert echoed == frames
        for f in echoed:
            decode_frame(f)


@pytest.mark.slow
def test_criterion_7_cache_removes_disk_reads(tmp_path, capsys):
    with criterion(capsys, 7, "10M-edge power-law graph: full cache gives zero disk bytes after superstep 1"):
        rng = np.random.default_rng(77)
        src, dst, _ = random_graph(rng, 1_000_000, 9.0, kind="powerlaw", cover="in")
        assert 9_500_000 <= len(src) <= 10_500_000
        ingest_arrays(src, dst, tmp_path / "big", avg_tile_size=1_000_000, memory_edges=4_000_000)
        del src, dst
        ds = Dataset(tmp_path / "big")
        total = ds.manifest.total_tile_bytes
        runs = {}
        for cap in (0, total):
            cfg = EngineConfig(num_servers=2, workers_per_server=2, max_supersteps=3,
                               cache=CacheConfig(cap, "auto"))
            runs[cap] = run(cfg, ds, PageRank())
        cold = [r.cache.disk_bytes_read for r in runs[0].reports]
        warm = [r.cache.disk_bytes_read for r in runs[total].reports]
        assert all(b == total for b in cold), cold
        assert warm[0] == total and all(b == 0 for b in warm[1:]), warm
        assert np.array_equal(runs[0].values, runs[total].values)
        with capsys.disabled():
            print(f"\n  |E|={ds.manifest.edge_count} tiles={ds.manifest.tile_count} "
                  f"disk bytes/superstep capacity 0: {cold}, capacity={total}: {warm}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-v"]))
