"""Model estimates: per-server vertex memory (full vs on-demand replication) and system rows."""

import argparse

from gabgraph import cost

GRAPHS = {  # vertices, edges
    "twitter-2010": (41.7e6, 1.47e9),
    "uk-2007": (105.9e6, 3.74e9),
    "uk-2014": (787.8e6, 47.6e9),
    "eu-2015": (1.1e9, 91.8e9),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--workers", type=int, default=24)
    args = ap.parse_args()

    print("graph          N   mem_aa_GB  mem_od_GB  od_capped_GB")
    for name, (v, e) in GRAPHS.items():
        for n in (1, 2, 4, 8, 16, 32, 64):
            p = cost.WorkloadParams(v, e, servers=n, workers=args.workers)
            od = cost.expected_od_vertices(v, p.avg_degree, n)
            capped = cost.expected_od_vertices(v, p.avg_degree, n, capped=True)
            print(f"{name:13} {n:3d}  {cost.memory_aa(p) / 1e9:9.1f}  {cost.memory_od(p, od) / 1e9:9.1f}"
                  f"  {cost.memory_od(p, capped) / 1e9:12.1f}")
        print(f"{name:13} on-demand beats full replication from N={cost.od_crossover(v, e)}")
    print()
    p = cost.WorkloadParams(1.1e9, 91.8e9, servers=9, workers=args.workers, tiles=5000, beta=0.1)
    print(f"eta={p.combining:.3f} (asymptotic rows, unit constants)")
    print("system      " + "  ".join(f"{k:>10}" for k in cost.ROW_KEYS))
    for s in cost.SYSTEMS:
        row = cost.table3_row(s, p)
        print(f"{s:10}  " + "  ".join(f"{row[k]:10.3g}" for k in cost.ROW_KEYS))


if __name__ == "__main__":
    main()
