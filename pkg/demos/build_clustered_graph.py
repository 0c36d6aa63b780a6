"""Regenerate the bundled clustered edge list.

The graph stands in for retail-style co-purchase topologies at desk scale:
many small tight clusters (triangles) with sparse links between neighbouring
clusters.  Cluster size is deliberately small so the dependency-bound sweeps
exercise the regime where lists roughly match cluster size; sparse links
keep random-walk transactions mostly cluster-local while still giving the
down-sampler and the walks something to cross.

Writing is deterministic; running this script twice produces identical
bytes.
"""

import random
from pathlib import Path

OUT = Path(__file__).resolve().parent.parent / "src" / "depcache" / "data" / "clustered_graph.txt"

N_CLUSTERS = 500
CLUSTER_SIZE = 3
LINK_PROB = 0.3  # chance that consecutive clusters are bridged
SEED = 20240405


def main() -> None:
    rng = random.Random(SEED)
    edges = set()
    for c in range(N_CLUSTERS):
        base = c * CLUSTER_SIZE
        members = range(base, base + CLUSTER_SIZE)
        for u in members:
            for v in members:
                if u < v:
                    edges.add((u, v))
    bridges = 0
    for c in range(N_CLUSTERS):
        if rng.random() < LINK_PROB:
            u = c * CLUSTER_SIZE + rng.randrange(CLUSTER_SIZE)
            nxt = (c + 1) % N_CLUSTERS
            v = nxt * CLUSTER_SIZE + rng.randrange(CLUSTER_SIZE)
            edges.add((min(u, v), max(u, v)))
            bridges += 1
    n = N_CLUSTERS * CLUSTER_SIZE
    with open(OUT, "w") as fh:
        fh.write("# synthetic clustered graph: 500 triangles, sparse ring links\n")
        fh.write(f"# nodes {n} edges {len(edges)} bridges {bridges}\n")
        for u, v in sorted(edges):
            fh.write(f"{u} {v}\n")
    print(f"wrote {OUT} ({n} nodes, {len(edges)} edges, {bridges} bridges)")


if __name__ == "__main__":
    main()
