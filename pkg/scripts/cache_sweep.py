"""Hit ratio and disk traffic as the edge cache grows, per compression mode."""

import argparse

import numpy as np

from gabgraph.algorithms import PageRank
from gabgraph.cache import CacheConfig, CacheMode
from gabgraph.engine import EngineConfig, run

from _common import build_graph


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--vertices", type=int, default=200_000)
    ap.add_argument("--degree", type=float, default=10.0)
    ap.add_argument("--tile-size", type=int, default=100_000)
    ap.add_argument("--supersteps", type=int, default=5)
    ap.add_argument("--points", type=int, default=11)
    args = ap.parse_args()

    ds = build_graph(args.vertices, args.degree, args.tile_size)
    total = ds.manifest.total_tile_bytes
    print(f"|V|={ds.vertex_count} |E|={ds.manifest.edge_count} tiles={ds.manifest.tile_count} "
          f"bytes={total}")
    print("mode  capacity/dataset  hit_ratio  disk_MB  measured_ratio  seconds")
    for mode in ["auto"] + list(CacheMode):
        for frac in np.linspace(0, 1, args.points):
            cfg = EngineConfig(max_supersteps=args.supersteps, cache=CacheConfig(int(frac * total), mode))
            res = run(cfg, ds, PageRank())
            hits = sum(r.cache.hits for r in res.reports)
            misses = sum(r.cache.misses for r in res.reports)
            disk = sum(r.cache.disk_bytes_read for r in res.reports)
            ratio = res.reports[-1].cache.measured_ratio
            secs = sum(r.wall_time for r in res.reports)
            label = mode if mode == "auto" else int(mode)
            print(f"{label:>4}  {frac:16.2f}  {hits / (hits + misses):9.3f}  {disk / 2**20:7.1f}  "
                  f"{ratio or 0:14.2f}  {secs:7.2f}")


if __name__ == "__main__":
    main()
