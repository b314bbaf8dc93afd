"""How fast does one node's information reach everyone?

Interactions merge knowledge in both directions, so a marked set grows
monotonically. On an expander the spread finishes in O(tau_rel log n); on a
lollipop the far end of the path is separated from the clique by a long
one-dimensional stretch and the time is bounded below by a multiple of
diameter * edges.
"""

import math

import numpy as np

from popmaj import bfs_distances, build_graph, spectral_summary, track_influence

g = build_graph("random_regular", 64, seed=0, d=3)
tau = spectral_summary(g).tau_rel
ts = [track_influence(g, [0], horizon=10**7, seed=s).t_br for s in range(400)]
ts = np.asarray(ts, dtype=np.float64)
print(f"3-regular n=64: median {np.median(ts):.0f}, p99 {np.quantile(ts, 0.99):.0f}, "
      f"bound 40 tau_rel ln n = {40 * tau * math.log(g.n):.0f}")

g2 = build_graph("lollipop", 16)   # n = 32: clique 0..15, path 16..31
u1, u2 = g2.meta["far_edge"]       # the two path nodes farthest from the clique
D = max(int(bfs_distances(g2, v).max()) for v in range(g2.n))
ts2 = np.asarray([track_influence(g2, [u1, u2], horizon=10**7, seed=s).t_br for s in range(400)], dtype=np.float64)
print(f"lollipop k=16 from {{{u1},{u2}}}: median {np.median(ts2):.0f}, p01 {np.quantile(ts2, 0.01):.0f}, "
      f"floor 0.05 D m = {0.05 * D * g2.m:.0f}")

# the full reach matrix for a small graph: row v says whose initial
# information v has seen so far
g3 = build_graph("cycle", 8)
r = track_influence(g3, [0], horizon=2_000, seed=1, with_matrix=True)
print("\ncycle(8) reach matrix after 2000 steps (1 = column's info reached row):")
for row in r.matrix.astype(int):
    print("  ", "".join(str(x) for x in row))
