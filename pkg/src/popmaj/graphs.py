"""Interaction graphs: family constructors, exact statistics, serialization.

Graphs are simple, undirected, connected. Edges are stored as an (m, 2) int32
array with u < v in every row; node labels are 0..n-1. Families:

  complete, cycle, path, star, grid (square), random_regular(d), lollipop(k)

The (k,k)-lollipop is a k-clique joined by a bridge to a k-node path; its
diameter is k+1 and its `far_edge` metadata names the path edge farthest from
the clique (the slow-broadcast witness used by the lower-bound experiments).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numba
import numpy as np

from .rng import RandomStream, as_stream

#: largest n for which exhaustive edge-expansion enumeration is allowed
EXPANSION_N_CAP = 22

#: node-count cap for dense per-step snapshots elsewhere in the package
DENSE_SNAPSHOT_N_CAP = 256


@dataclass(frozen=True)
class Graph:
    n: int
    edges: np.ndarray  # (m, 2) int32, u < v, unique rows
    family: str = "custom"
    meta: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return int(self.edges.shape[0])

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        np.add.at(deg, self.edges[:, 0], 1)
        np.add.at(deg, self.edges[:, 1], 1)
        return deg

    def adjacency_lists(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.n)]
        for u, v in self.edges:
            adj[int(u)].append(int(v))
            adj[int(v)].append(int(u))
        return adj


@dataclass(frozen=True)
class GraphStats:
    n: int
    m: int
    deg_min: int
    deg_max: int
    diameter: int
    zeta: Optional[float] = None  # edge expansion, only when requested
    zeta_cut_size: Optional[int] = None


class GraphParameterError(ValueError):
    pass


def _make_graph(n: int, pairs: Iterable[tuple[int, int]], family: str, meta: dict | None = None) -> Graph:
    rows = sorted({(min(u, v), max(u, v)) for u, v in pairs})
    edges = np.asarray(rows, dtype=np.int32).reshape(-1, 2)
    return Graph(n=n, edges=edges, family=family, meta=meta or {})


def complete_graph(n: int) -> Graph:
    if n < 2:
        raise GraphParameterError("complete graph needs n >= 2")
    return _make_graph(n, [(u, v) for u in range(n) for v in range(u + 1, n)], "complete")


def cycle_graph(n: int) -> Graph:
    if n < 3:
        raise GraphParameterError("cycle needs n >= 3")
    return _make_graph(n, [(i, (i + 1) % n) for i in range(n)], "cycle")


def path_graph(n: int) -> Graph:
    if n < 2:
        raise GraphParameterError("path needs n >= 2")
    return _make_graph(n, [(i, i + 1) for i in range(n - 1)], "path")


def star_graph(n: int) -> Graph:
    if n < 3:
        raise GraphParameterError("star needs n >= 3")
    return _make_graph(n, [(0, i) for i in range(1, n)], "star")


def grid_graph(n: int) -> Graph:
    s = round(n ** 0.5)
    if s * s != n or s < 2:
        raise GraphParameterError("grid needs n to be a perfect square >= 4")
    pairs = []
    for r in range(s):
        for c in range(s):
            u = r * s + c
            if c + 1 < s:
                pairs.append((u, u + 1))
            if r + 1 < s:
                pairs.append((u, u + s))
    return _make_graph(n, pairs, "grid", {"side": s})


def lollipop_graph(k: int) -> Graph:
    """k-clique (nodes 0..k-1) + bridge (k-1, k) + path (k..2k-1)."""
    if k < 2:
        raise GraphParameterError("lollipop needs k >= 2")
    n = 2 * k
    pairs = [(u, v) for u in range(k) for v in range(u + 1, k)]
    pairs.append((k - 1, k))
    pairs.extend((i, i + 1) for i in range(k, n - 1))
    return _make_graph(n, pairs, "lollipop", {"k": k, "far_edge": (n - 2, n - 1)})


def random_regular_graph(n: int, d: int, seed_or_stream) -> Graph:
    """Random d-regular graph via the pairing model, resampled until simple
    and connected (at most 1000 attempts)."""
    if n * d % 2 != 0:
        raise GraphParameterError("n*d must be even for a d-regular graph")
    if not (0 < d < n):
        raise GraphParameterError("need 0 < d < n")
    stream = as_stream(seed_or_stream)
    stubs0 = [v for v in range(n) for _ in range(d)]
    for _ in range(1000):
        stubs = list(stubs0)
        stream.shuffle(stubs)
        pairs = [(stubs[2 * i], stubs[2 * i + 1]) for i in range(len(stubs) // 2)]
        if any(u == v for u, v in pairs):
            continue
        norm = {(min(u, v), max(u, v)) for u, v in pairs}
        if len(norm) != len(pairs):
            continue
        g = _make_graph(n, norm, "random_regular", {"d": d})
        if is_connected(g):
            return g
    raise RuntimeError("pairing model failed to produce a simple connected graph in 1000 attempts")


GRAPH_FAMILIES = ("complete", "cycle", "path", "star", "grid", "lollipop", "random_regular")


def build_graph(family: str, n_or_k: int, seed: int = 0, d: int = 3) -> Graph:
    """Family dispatcher. `n_or_k` is n for every family except lollipop,
    where it is the clique/path size k (so n = 2k)."""
    if family == "complete":
        return complete_graph(n_or_k)
    if family == "cycle":
        return cycle_graph(n_or_k)
    if family == "path":
        return path_graph(n_or_k)
    if family == "star":
        return star_graph(n_or_k)
    if family == "grid":
        return grid_graph(n_or_k)
    if family == "lollipop":
        return lollipop_graph(n_or_k)
    if family == "random_regular":
        return random_regular_graph(n_or_k, d, RandomStream(seed))
    raise GraphParameterError(f"unknown graph family: {family!r}")


# ---------------------------------------------------------------------------
# statistics


def bfs_distances(g: Graph, source: int) -> np.ndarray:
    adj = g.adjacency_lists()
    dist = np.full(g.n, -1, dtype=np.int64)
    dist[source] = 0
    frontier = [source]
    while frontier:
        nxt = []
        for u in frontier:
            du = dist[u]
            for v in adj[u]:
                if dist[v] < 0:
                    dist[v] = du + 1
                    nxt.append(v)
        frontier = nxt
    return dist


def is_connected(g: Graph) -> bool:
    if g.n == 0:
        return False
    return bool((bfs_distances(g, 0) >= 0).all())


def diameter(g: Graph) -> int:
    best = 0
    for s in range(g.n):
        dist = bfs_distances(g, s)
        if (dist < 0).any():
            raise ValueError("diameter undefined: graph is disconnected")
        best = max(best, int(dist.max()))
    return best


@numba.njit(cache=True, nogil=True)
def _expansion_scan(adj_mask: np.ndarray, n: int):
    # enumerate all S with 1 <= |S| <= n/2; boundary via bitmask popcounts
    best_num = np.int64(1) << 40
    best_den = np.int64(1)
    best_mask = np.int64(0)
    full = (np.int64(1) << n) - np.int64(1)
    half = n // 2
    for mask in range(np.int64(1), full + np.int64(1)):
        s = np.int64(mask)
        # popcount of mask
        size = 0
        t = s
        while t:
            t &= t - np.int64(1)
            size += 1
        if size > half:
            continue
        boundary = 0
        t = s
        while t:
            u = 0
            low = t & (-t)
            b = low
            while b > np.int64(1):
                b >>= np.int64(1)
                u += 1
            ext = adj_mask[u] & ~s
            while ext:
                ext &= ext - np.int64(1)
                boundary += 1
            t ^= low
        # compare boundary/size < best_num/best_den without floats
        if np.int64(boundary) * best_den < best_num * np.int64(size):
            best_num = np.int64(boundary)
            best_den = np.int64(size)
            best_mask = s
    return best_num, best_den, best_mask


def edge_expansion(g: Graph) -> tuple[float, int, list[int]]:
    """Exact edge expansion min |boundary(S)| / |S| over 1 <= |S| <= n/2.

    Exhaustive over all 2^n subsets; refuses n > EXPANSION_N_CAP.
    Returns (zeta, |S| of a minimizer, sorted minimizer node list).
    """
    if g.n > EXPANSION_N_CAP:
        raise ValueError(f"exhaustive edge expansion is capped at n <= {EXPANSION_N_CAP}")
    adj_mask = np.zeros(g.n, dtype=np.int64)
    for u, v in g.edges:
        adj_mask[int(u)] |= np.int64(1) << int(v)
        adj_mask[int(v)] |= np.int64(1) << int(u)
    num, den, mask = _expansion_scan(adj_mask, g.n)
    members = [i for i in range(g.n) if (int(mask) >> i) & 1]
    return float(num) / float(den), int(den), members


def graph_stats(g: Graph, compute_expansion: bool = False) -> GraphStats:
    if not is_connected(g):
        raise ValueError("graph statistics require a connected graph")
    deg = g.degrees()
    zeta = None
    cut = None
    if compute_expansion:
        z, size, _ = edge_expansion(g)
        zeta, cut = z, size
    return GraphStats(
        n=g.n,
        m=g.m,
        deg_min=int(deg.min()),
        deg_max=int(deg.max()),
        diameter=diameter(g),
        zeta=zeta,
        zeta_cut_size=cut,
    )


# ---------------------------------------------------------------------------
# serialization


def graph_to_json(g: Graph) -> str:
    payload = {"n": g.n, "edges": [[int(u), int(v)] for u, v in g.edges], "family": g.family}
    if g.meta:
        payload["meta"] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in g.meta.items()}
    return json.dumps(payload)


def graph_from_json(text: str) -> Graph:
    payload = json.loads(text)
    try:
        n = int(payload["n"])
        edges = payload["edges"]
        family = payload.get("family", "custom")
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed graph JSON: {exc}") from exc
    meta = payload.get("meta", {})
    g = _make_graph(n, [(int(u), int(v)) for u, v in edges], family, dict(meta))
    validate_graph(g)
    return g


def graph_to_edgelist(g: Graph) -> str:
    return "\n".join(f"{int(u)} {int(v)}" for u, v in g.edges) + "\n"


def graph_from_edgelist(text: str, n: Optional[int] = None, family: str = "custom") -> Graph:
    pairs = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"bad edge-list line: {line!r}")
        pairs.append((int(parts[0]), int(parts[1])))
    if not pairs:
        raise ValueError("edge list is empty")
    max_label = max(max(u, v) for u, v in pairs)
    g = _make_graph(n if n is not None else max_label + 1, pairs, family)
    validate_graph(g)
    return g


def validate_graph(g: Graph) -> None:
    if g.n < 2:
        raise ValueError("graph needs at least 2 nodes")
    e = g.edges
    if e.ndim != 2 or e.shape[1] != 2:
        raise ValueError("edges must be an (m, 2) array")
    if (e[:, 0] >= e[:, 1]).any():
        raise ValueError("edges must satisfy u < v")
    if e.min(initial=0) < 0 or e.max(initial=0) >= g.n:
        raise ValueError("edge endpoint out of range")
    if len({(int(u), int(v)) for u, v in e}) != len(e):
        raise ValueError("duplicate edges")
    if not is_connected(g):
        raise ValueError("graph must be connected")
