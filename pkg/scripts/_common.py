import tempfile
from pathlib import Path

import numpy as np

from gabgraph.ingest import ingest_arrays
from gabgraph.synth import random_graph
from gabgraph.tiles import Dataset


def build_graph(vertices, degree, tile_size, seed=0, weighted=False, workdir=None):
    """Synthetic power-law dataset in ``workdir`` (a fresh temp dir by default)."""
    rng = np.random.default_rng(seed)
    src, dst, w = random_graph(rng, vertices, degree, kind="powerlaw", weighted=weighted, cover="in")
    root = Path(workdir or tempfile.mkdtemp(prefix="gab-exp-"))
    ingest_arrays(src, dst, root / "ds", weight=w, avg_tile_size=tile_size, overwrite=True)
    return Dataset(root / "ds")
