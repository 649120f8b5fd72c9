"""Fraction of vertices updated per PageRank superstep on a power-law graph."""

import argparse

from gabgraph.algorithms import PageRank
from gabgraph.engine import EngineConfig, run

from _common import build_graph


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--vertices", type=int, default=100_000)
    ap.add_argument("--degree", type=float, default=12.0)
    ap.add_argument("--tile-size", type=int, default=50_000)
    ap.add_argument("--supersteps", type=int, default=200)
    ap.add_argument("--epsilon", type=float, default=1e-12)
    args = ap.parse_args()

    ds = build_graph(args.vertices, args.degree, args.tile_size)
    res = run(EngineConfig(max_supersteps=args.supersteps, workers_per_server=2), ds,
              PageRank(epsilon=args.epsilon))
    print("superstep  updated_ratio  tiles_processed  tiles_skipped")
    for r in res.reports:
        print(f"{r.superstep:9d}  {r.updated_vertex_count / ds.vertex_count:13.4f}  "
              f"{r.tiles_processed:15d}  {r.tiles_skipped:13d}")


if __name__ == "__main__":
    main()
