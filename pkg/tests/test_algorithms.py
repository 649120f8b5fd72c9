import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gabgraph.algorithms import INF, PageRank, SSSP, make_program, reference_pagerank, reference_sssp
from gabgraph.engine import VertexStateArrays
from gabgraph.errors import ConsistencyError, DomainError, GraphError
from gabgraph.tiles import Tile


def pr_states(values, outdeg):
    s = VertexStateArrays.allocate(len(values))
    s.value[:] = values
    s.out_degree = np.asarray(outdeg)
    return s


def test_pagerank_init(make_dataset):
    ds = make_dataset([0, 1, 2, 3, 0], [1, 2, 3, 0, 2])
    pr = PageRank()
    s = VertexStateArrays.allocate(4)
    pr.init(s, ds)
    assert s.value.tolist() == [0.25] * 4
    assert s.out_degree.tolist() == ds.out_degree().tolist() == [2, 1, 1, 1]


def test_pagerank_single_vertex_init(make_dataset):
    ds = make_dataset([0], [0])
    s = VertexStateArrays.allocate(1)
    PageRank().init(s, ds)
    assert s.value.tolist() == [1.0]


def test_pagerank_rejects_empty_graph(make_dataset):
    ds = make_dataset([], [])
    with pytest.raises(GraphError):
        PageRank().init(VertexStateArrays.allocate(0), ds)


def test_pagerank_gather():
    pr = PageRank()
    s = pr_states([0.5, 1 / 3, 1 / 3, 1 / 3], [1, 1, 1, 1])
    assert pr.gather(0, np.array([0]), None, s) == 0.5
    assert pr.gather(0, np.array([], dtype=int), None, s) == 0.0
    assert pr.gather(0, np.array([1, 2, 3]), None, s) == pytest.approx(1.0, abs=1e-15)


def test_pagerank_gather_flags_zero_outdegree():
    s = pr_states([0.5, 0.5], [0, 1])
    with pytest.raises(ConsistencyError):
        PageRank().gather(1, np.array([0]), None, s)
    tile = Tile(0, 0, np.array([0, 0, 1], dtype=np.uint32), np.array([0], dtype=np.uint32))
    with pytest.raises(ConsistencyError):
        PageRank().gather_tile(tile, s)


def test_pagerank_apply():
    pr = PageRank()
    pr.num_vertices = 4
    assert pr.apply(0.0, 1.0) == pytest.approx(0.0375, abs=1e-15)
    pr.num_vertices = 2
    assert pr.apply(0.5, 0.5) == 0.5


def test_pagerank_epsilon_keeps_old_value():
    pr = PageRank(epsilon=1e-3)
    pr.num_vertices = 2
    assert pr.apply(0.5005, 0.5) == 0.5
    assert pr.apply(0.6, 0.5) != 0.5
    out = pr.apply_tile(np.array([0.5005, 0.6]), np.array([0.5, 0.5]))
    assert out[0] == 0.5 and out[1] != 0.5


def test_pagerank_parameter_checks():
    with pytest.raises(ValueError):
        PageRank(damping=0.9, teleport=0.15)
    with pytest.raises(ValueError):
        PageRank(epsilon=-1)


def test_sssp_init(make_dataset):
    ds = make_dataset([0, 1], [1, 2])
    s = VertexStateArrays.allocate(3)
    SSSP(0).init(s, ds)
    assert s.value.tolist() == [0.0, INF, INF]
    SSSP(0).init(s, ds)
    assert s.value.tolist() == [0.0, INF, INF]
    with pytest.raises(DomainError):
        SSSP(3).init(s, ds)


def test_sssp_single_vertex(make_dataset):
    ds = make_dataset([0], [0])
    s = VertexStateArrays.allocate(1)
    SSSP(0).init(s, ds)
    assert s.value.tolist() == [0.0]


def test_sssp_rejects_negative_weights(make_dataset):
    ds = make_dataset([0, 1], [1, 0], weight=np.array([1.0, -2.0]))
    with pytest.raises(DomainError):
        SSSP(0).init(VertexStateArrays.allocate(2), ds)


def test_sssp_gather_and_apply():
    p = SSSP()
    s = VertexStateArrays.allocate(3)
    s.value[:] = [INF, 0.0, 2.0]
    assert p.gather(0, np.array([0]), np.array([1.0]), s) == INF
    assert p.gather(0, np.array([1]), np.array([3.0]), s) == 3.0
    assert p.gather(0, np.array([1, 2]), np.array([5.0, 2.0]), s) == 4.0
    assert p.gather(0, np.array([1]), None, s) == 1.0
    assert p.gather(0, np.array([], dtype=int), None, s) == INF
    assert p.apply(INF, 0.0) == 0.0
    assert p.apply(4.0, 5.0) == 4.0
    assert p.apply(INF, INF) == INF


def test_sssp_tile_gather_saturates():
    p = SSSP()
    s = VertexStateArrays.allocate(3)
    s.value[:] = [INF, INF * 0.75, 1.0]
    tile = Tile(0, 0, np.array([0, 2, 2, 3], dtype=np.uint32), np.array([0, 1, 2], dtype=np.uint32),
                np.array([1.0, INF * 0.5, 1.0]))
    assert p.gather_tile(tile, s).tolist() == [INF, INF, 2.0]


def test_make_program():
    assert isinstance(make_program("pagerank"), PageRank)
    assert make_program("sssp", source=3).source == 3
    with pytest.raises(ValueError):
        make_program("wcc")


def test_reference_pagerank_small():
    assert reference_pagerank(2, [0, 1], [1, 0], 7) == [0.5, 0.5]
    x = reference_pagerank(1, [0], [0], 300)
    assert x[0] == pytest.approx(1.0, abs=1e-12)
    assert reference_pagerank(0, [], [], 3) == []


def test_reference_sssp_path():
    assert reference_sssp(3, [0, 1], [1, 2], None, 0) == [0.0, 1.0, 2.0]
    d, h = reference_sssp(4, [0, 0, 2, 1], [1, 2, 3, 3], [3.0, 1.0, 2.0, 0.0], 0, with_hops=True)
    assert d == [0.0, 3.0, 1.0, 3.0] and h == [0, 1, 1, 2]
    assert reference_sssp(2, [], [], None, 1) == [INF, 0.0]


def _floyd(n, src, dst, w):
    d = np.full((n, n), np.inf)
    np.fill_diagonal(d, 0)
    for u, v, x in zip(src, dst, w):
        d[u, v] = min(d[u, v], x)
    for k in range(n):
        d = np.minimum(d, d[:, [k]] + d[[k], :])
    return d


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12), st.data())
def test_reference_sssp_matches_floyd_warshall(n, data):
    m = data.draw(st.integers(0, 40))
    src = data.draw(st.lists(st.integers(0, n - 1), min_size=m, max_size=m))
    dst = data.draw(st.lists(st.integers(0, n - 1), min_size=m, max_size=m))
    w = data.draw(st.lists(st.integers(0, 10), min_size=m, max_size=m))
    source = data.draw(st.integers(0, n - 1))
    got = reference_sssp(n, src, dst, w, source)
    fw = _floyd(n, src, dst, w)[source]
    assert [INF if np.isinf(x) else x for x in fw.tolist()] == got


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 15), st.data())
def test_reference_pagerank_matches_matrix_form(n, data):
    m = data.draw(st.integers(0, 50))
    src = data.draw(st.lists(st.integers(0, n - 1), min_size=m, max_size=m))
    dst = data.draw(st.lists(st.integers(0, n - 1), min_size=m, max_size=m))
    a = np.zeros((n, n))
    outdeg = np.bincount(np.array(src, dtype=int), minlength=n)
    for u, v in zip(src, dst):
        a[v, u] += 1.0 / outdeg[u]
    x = np.full(n, 1.0 / n)
    for _ in range(10):
        x = 0.15 / n + 0.85 * (a @ x)
    assert np.allclose(reference_pagerank(n, src, dst, 10), x, rtol=0, atol=1e-14)
