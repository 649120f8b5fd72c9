"""Broadcast bytes per encoding policy and payload codec, PageRank and SSSP."""

import argparse

from gabgraph.algorithms import PageRank, SSSP
from gabgraph.comm import Codec, SparsityPolicy
from gabgraph.engine import EngineConfig, run

from _common import build_graph


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--vertices", type=int, default=50_000)
    ap.add_argument("--degree", type=float, default=10.0)
    ap.add_argument("--tile-size", type=int, default=20_000)
    ap.add_argument("--servers", type=int, default=4)
    ap.add_argument("--supersteps", type=int, default=20)
    args = ap.parse_args()

    ds = build_graph(args.vertices, args.degree, args.tile_size, weighted=True)
    print("algo      comm    codec  MB_broadcast")
    for name, program in (("pagerank", PageRank), ("sssp", lambda: SSSP(0))):
        for comm in ("dense", "sparse", "hybrid"):
            for codec in Codec:
                cfg = EngineConfig(num_servers=args.servers, max_supersteps=args.supersteps,
                                   comm=SparsityPolicy(comm), codec=codec)
                res = run(cfg, ds, program())
                mb = sum(r.bytes_broadcast for r in res.reports) / 2**20
                print(f"{name:8}  {comm:6}  {codec.name.lower():5}  {mb:12.2f}")


if __name__ == "__main__":
    main()
