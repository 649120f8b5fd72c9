import numpy as np
import pytest

from gabgraph.ingest import ingest_arrays
from gabgraph.tiles import Dataset


@pytest.fixture
def make_dataset(tmp_path):
    counter = iter(range(10**6))

    def build(src, dst, weight=None, tile_size=2, **kw):
        out = tmp_path / f"ds{next(counter)}"
        ingest_arrays(np.asarray(src), np.asarray(dst), out, weight=weight,
                      avg_tile_size=tile_size, **kw)
        return Dataset(out)

    return build


def edge_multiset(src, dst, w=None):
    w = [None] * len(src) if w is None else list(map(float, w))
    return sorted(zip(map(int, src), map(int, dst), w), key=lambda e: (e[0], e[1], e[2] or 0.0))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[k])
