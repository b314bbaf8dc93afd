"""Concrete pairwise dynamics: annihilation, the 4-state exact-majority
protocol, information spread, and the coupled annihilation chains used for
the domination argument.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .engine import CountCondition, ProtocolSpec, RunResult, StoppingRule, run_discrete
from .graphs import Graph, bfs_distances
from .rng import RandomStream, as_stream

# annihilation state indices
ANN_A, ANN_B, ANN_C = 0, 1, 2
# 4-state indices; output = index & 1
FS_S0, FS_S1, FS_W0, FS_W1 = 0, 1, 2, 3

INFLUENCE_N_CAP = 4096


def annihilation_protocol() -> ProtocolSpec:
    """Opposite charges cancel: (A, B) -> (C, C) in either order, every other
    ordered pair swaps. The signed count (bias) is conserved."""
    S = 3
    table = np.empty((S, S, 2), dtype=np.int8)
    for x in range(S):
        for y in range(S):
            table[x, y] = (y, x)
    table[ANN_A, ANN_B] = (ANN_C, ANN_C)
    table[ANN_B, ANN_A] = (ANN_C, ANN_C)
    return ProtocolSpec(
        name="annihilation",
        states=("A", "B", "C"),
        table=table,
        init_map=np.array([ANN_A, ANN_B], dtype=np.int8),
        output_map=np.array([0, 1, 0], dtype=np.int8),
        certified=(
            CountCondition(weights=(0, 1, 0), op="<=", threshold=0),
            CountCondition(weights=(1, 0, 0), op="<=", threshold=0),
        ),
    )


def four_state_protocol() -> ProtocolSpec:
    """The 4-state exact-majority protocol over states S0, S1, W0, W1.

    Strong tokens of opposite opinion weaken each other; a strong token flips
    an opposing weak one; opposing weak tokens swap opinions via the listed
    orientation. Ordered pairs without a listed rule (including the mirror
    orientations of the strong-weak rule) leave both states unchanged, so a
    token still moves only by the scheduler's swaps, never by an unlisted
    rule."""
    S = 4
    table = np.empty((S, S, 2), dtype=np.int8)
    for x in range(S):
        for y in range(S):
            table[x, y] = (x, y)
    table[FS_S0, FS_S1] = (FS_W1, FS_W0)
    table[FS_S1, FS_S0] = (FS_W0, FS_W1)
    table[FS_S0, FS_W1] = (FS_W0, FS_S0)
    table[FS_S1, FS_W0] = (FS_W1, FS_S1)
    table[FS_W0, FS_W1] = (FS_W1, FS_W0)
    table[FS_W1, FS_W0] = (FS_W0, FS_W1)
    return ProtocolSpec(
        name="four-state-majority",
        states=("S0", "S1", "W0", "W1"),
        table=table,
        init_map=np.array([FS_S0, FS_S1], dtype=np.int8),
        output_map=np.array([0, 1, 0, 1], dtype=np.int8),
        certified=(
            # no token of output 1 remains, or none of output 0
            CountCondition(weights=(0, 1, 0, 1), op="<=", threshold=0),
            CountCondition(weights=(1, 0, 1, 0), op="<=", threshold=0),
        ),
    )


def four_state_stabilized(counts: np.ndarray) -> bool:
    """True when every token already outputs the same bit."""
    counts = np.asarray(counts)
    out1 = int(counts[FS_S1] + counts[FS_W1])
    out0 = int(counts[FS_S0] + counts[FS_W0])
    return out0 == 0 or out1 == 0


def majority_split(n: int, gamma: float) -> tuple[int, int]:
    """Counts (majority, minority) for bias gamma: the majority side gets
    ceil(n (1 + gamma) / 2) tokens. gamma must be realizable, i.e. the
    resulting counts must differ by exactly round(gamma * n)."""
    if not 0 < gamma <= 1:
        raise ValueError(f"gamma must be in (0, 1], got {gamma}")
    n_maj = math.ceil(n * (1.0 + gamma) / 2.0)
    n_min = n - n_maj
    if n_maj <= n_min:
        raise ValueError(f"gamma={gamma} gives no strict majority at n={n}")
    return n_maj, n_min


def assign_inputs(
    g: Graph,
    gamma: float,
    placement: str = "random",
    seed: int | RandomStream = 0,
    majority_bit: int = 0,
) -> np.ndarray:
    """Input bit vector with the given bias and spatial placement.

    random: uniformly random positions. segregated: the majority occupies a
    BFS ball around node 0 (worst-case clustering). interleaved: opinions
    alternate along a BFS order (maximal mixing)."""
    if placement not in ("random", "segregated", "interleaved"):
        raise ValueError(f"unknown placement {placement!r}")
    if majority_bit not in (0, 1):
        raise ValueError("majority_bit must be 0 or 1")
    n = g.n
    n_maj, _ = majority_split(n, gamma)
    stream = as_stream(seed)
    bits = np.full(n, 1 - majority_bit, dtype=np.int8)
    if placement == "random":
        order = stream.permutation(n)
        bits[order[:n_maj]] = majority_bit
    else:
        dist = bfs_distances(g, 0)
        order = np.argsort(dist, kind="stable")
        if placement == "segregated":
            bits[order[:n_maj]] = majority_bit
        else:
            take = np.zeros(n, dtype=bool)
            take[0::2] = True
            if take.sum() >= n_maj:
                idx = np.flatnonzero(take)[:n_maj]
            else:
                extra = n_maj - int(take.sum())
                idx = np.concatenate([np.flatnonzero(take), np.flatnonzero(~take)[:extra]])
            bits[order[idx]] = majority_bit
    return bits


@dataclass
class ExtinctionResult:
    t_ext: int
    censored: bool
    bias: int
    counts0: np.ndarray
    final_counts: np.ndarray
    run: RunResult


def measure_extinction_time(
    g: Graph,
    horizon: int,
    gamma: float | None = None,
    init: np.ndarray | None = None,
    placement: str = "random",
    seed: int | RandomStream = 0,
) -> ExtinctionResult:
    """Steps until the minority charge is gone under annihilation. Pass
    either gamma (bias, placed per `placement`) or an explicit state vector
    over {A, B, C}."""
    proto = annihilation_protocol()
    stream = as_stream(seed)
    if (init is None) == (gamma is None):
        raise ValueError("pass exactly one of gamma= or init=")
    if init is None:
        bits = assign_inputs(g, gamma, placement=placement, seed=stream)
        states = proto.init_map[bits].astype(np.int8)
    else:
        states = np.asarray(init, dtype=np.int8).copy()
    counts0 = np.bincount(states, minlength=3).astype(np.int64)
    na, nb = int(counts0[ANN_A]), int(counts0[ANN_B])
    minority = ANN_B if na >= nb else ANN_A
    w = [0, 0, 0]
    w[minority] = 1
    rule = StoppingRule(horizon=horizon, conditions=(CountCondition(tuple(w), "<=", 0),))
    res = run_discrete(proto, g, states=states, stop=rule, seed=stream)
    return ExtinctionResult(
        t_ext=res.stop_step,
        censored=res.censored,
        bias=na - nb,
        counts0=counts0,
        final_counts=res.final_counts,
        run=res,
    )


@dataclass
class ClearingResult:
    t_clr: int
    censored: bool
    reason: str  # "minority-extinct" | "cleared" | "censored"
    final_counts: np.ndarray
    run: RunResult


def measure_clearing_time(
    g: Graph,
    horizon: int,
    eps: float,
    gamma: float | None = None,
    init: np.ndarray | None = None,
    placement: str = "random",
    seed: int | RandomStream = 0,
) -> ClearingResult:
    """Steps until annihilation either kills the minority or leaves at most
    eps * n non-neutral tokens (whichever happens first)."""
    if not 0 < eps < 1:
        raise ValueError("eps must be in (0, 1)")
    proto = annihilation_protocol()
    stream = as_stream(seed)
    if (init is None) == (gamma is None):
        raise ValueError("pass exactly one of gamma= or init=")
    if init is None:
        bits = assign_inputs(g, gamma, placement=placement, seed=stream)
        states = proto.init_map[bits].astype(np.int8)
    else:
        states = np.asarray(init, dtype=np.int8).copy()
    counts0 = np.bincount(states, minlength=3).astype(np.int64)
    minority = ANN_B if counts0[ANN_A] >= counts0[ANN_B] else ANN_A
    w_min = [0, 0, 0]
    w_min[minority] = 1
    thr = int(math.floor(eps * g.n))
    rule = StoppingRule(
        horizon=horizon,
        conditions=(
            CountCondition(tuple(w_min), "<=", 0),
            CountCondition((1, 1, 0), "<=", thr),
        ),
    )
    res = run_discrete(proto, g, states=states, stop=rule, seed=stream)
    if res.censored:
        reason = "censored"
    elif int(res.final_counts[minority]) == 0:
        reason = "minority-extinct"
    else:
        reason = "cleared"
    return ClearingResult(
        t_clr=res.stop_step,
        censored=res.censored,
        reason=reason,
        final_counts=res.final_counts,
        run=res,
    )


@dataclass
class InfluenceResult:
    t_br: int
    censored: bool
    matrix: np.ndarray | None
    stream_counter: int


def track_influence(
    g: Graph,
    sources: np.ndarray | list[int],
    horizon: int,
    seed: int | RandomStream = 0,
    with_matrix: bool = False,
) -> InfluenceResult:
    """Information spread time from a source set.

    Every interaction merges knowledge in both directions, so t_br is the
    first step at which the sources' mark has reached every node (-1 while
    censored). with_matrix instead runs the horizon out and returns the full
    n x n boolean reach matrix: matrix[v, u] says u's initial information
    reached v (v always knows itself)."""
    stream = as_stream(seed)
    eu = g.edges[:, 0].astype(np.int32)
    ev = g.edges[:, 1].astype(np.int32)
    marked = np.zeros(g.n, dtype=np.bool_)
    marked[np.asarray(sources, dtype=np.int64)] = True
    if not marked.any():
        raise ValueError("sources must be nonempty")
    if with_matrix:
        if g.n > INFLUENCE_N_CAP:
            raise ValueError(f"influence matrix capped at n <= {INFLUENCE_N_CAP}")
        W = (g.n + 63) // 64
        words = np.zeros((g.n, W), dtype=np.uint64)
        for v in range(g.n):
            words[v, v // 64] |= np.uint64(1) << np.uint64(v % 64)
        t_br, ctr = _kernels.influence_run(
            eu, ev, words, marked, np.int64(horizon), np.uint64(stream.key), np.uint64(stream.counter)
        )
        stream.counter = int(ctr)
        mat = np.zeros((g.n, g.n), dtype=bool)
        for u in range(g.n):
            mat[:, u] = (words[:, u // 64] >> np.uint64(u % 64)) & np.uint64(1) != 0
        return InfluenceResult(t_br=int(t_br), censored=t_br < 0, matrix=mat, stream_counter=stream.counter)
    t_br, ctr = _kernels.broadcast_run(eu, ev, marked, np.int64(horizon), np.uint64(stream.key), np.uint64(stream.counter))
    stream.counter = int(ctr)
    return InfluenceResult(t_br=int(t_br), censored=t_br < 0, matrix=None, stream_counter=stream.counter)


@dataclass
class DominationResult:
    violation_step: int  # -1: dominance held for the whole run
    held: bool
    steps: int


def run_domination_coupling(
    g: Graph,
    z_hi: np.ndarray,
    z_lo: np.ndarray,
    steps: int,
    seed: int | RandomStream = 0,
) -> DominationResult:
    """Drive two annihilation sign-configurations (+1/0/-1 per node) with the
    same interaction sequence and report the first pointwise violation of
    z_hi >= z_lo, if any. Starting from z_hi >= z_lo the coupling should
    preserve it forever."""
    z_hi = np.asarray(z_hi, dtype=np.int8).copy()
    z_lo = np.asarray(z_lo, dtype=np.int8).copy()
    for z in (z_hi, z_lo):
        if z.shape != (g.n,):
            raise ValueError("configuration shape mismatch")
        if not np.isin(z, (-1, 0, 1)).all():
            raise ValueError("configurations take values in {-1, 0, +1}")
    if (z_hi < z_lo).any():
        raise ValueError("initial configurations must satisfy z_hi >= z_lo")
    stream = as_stream(seed)
    step, ctr = _kernels.domination_run(
        g.edges[:, 0].astype(np.int32),
        g.edges[:, 1].astype(np.int32),
        z_hi,
        z_lo,
        np.int64(steps),
        np.uint64(stream.key),
        np.uint64(stream.counter),
    )
    stream.counter = int(ctr)
    return DominationResult(violation_step=int(step), held=step < 0, steps=steps)


def annihilation_z(states: np.ndarray) -> np.ndarray:
    """Signed view of an annihilation configuration: A -> +1, B -> -1, C -> 0."""
    states = np.asarray(states)
    z = np.zeros(states.shape, dtype=np.int8)
    z[states == ANN_A] = 1
    z[states == ANN_B] = -1
    return z
