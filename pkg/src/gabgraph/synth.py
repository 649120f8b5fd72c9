"""Random graph generators for tests and experiments."""

import numpy as np


def random_graph(rng, num_vertices, avg_degree, kind="uniform", weighted=False,
                 max_weight=10, cover="ring", skew=3.0):
    """Directed multigraph in which every id in ``range(num_vertices)`` occurs.

    ``kind="powerlaw"`` draws targets and sources from a skewed distribution
    (density ~ x^(1/skew - 1) before a random relabeling), giving a heavy
    in-degree tail. ``cover="ring"`` adds a random Hamiltonian cycle, so no
    vertex is dangling; ``cover="in"`` only adds one random in-edge per vertex,
    so dangling vertices remain. Integer weights are drawn from ``[1, max_weight]``.
    """
    n = num_vertices
    m = max(int(round(n * avg_degree)), 0)
    if kind == "uniform":
        src = rng.integers(0, n, m)
        dst = rng.integers(0, n, m)
    elif kind == "powerlaw":
        perm = rng.permutation(n)
        dst = perm[np.minimum((n * rng.random(m) ** skew).astype(np.int64), n - 1)]
        src = perm[np.minimum((n * rng.random(m) ** (skew / 2)).astype(np.int64), n - 1)]
    else:
        raise ValueError(f"unknown graph kind {kind!r}")
    if cover == "ring":
        ring = rng.permutation(n)
        src = np.concatenate([src, ring])
        dst = np.concatenate([dst, np.roll(ring, -1)])
    elif cover == "in":
        src = np.concatenate([src, rng.integers(0, n, n)])
        dst = np.concatenate([dst, np.arange(n)])
    else:
        raise ValueError(f"unknown cover {cover!r}")
    w = rng.integers(1, max_weight + 1, len(src)).astype(np.float64) if weighted else None
    return src.astype(np.int64), dst.astype(np.int64), w
