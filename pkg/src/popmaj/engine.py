"""Pairwise-interaction scheduler and table-protocol runner.

A protocol is a finite state set plus an ordered-pair transition table. One
step: pick an edge uniformly, orient it by a fair bit, apply the table to
(initiator, responder). Both discrete steps and a continuous-time variant
(global exponential clock of rate 1/2) are provided.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .graphs import Graph
from .rng import RandomStream, as_stream

DENSE_SNAPSHOT_N_CAP = 256


@dataclass(frozen=True)
class Interaction:
    """One ordered interaction: initiator u, responder v."""

    step: int
    u: int
    v: int


def scheduler_random_bit(stream: RandomStream) -> int:
    """The orientation bit: 1 means the stored edge is flipped."""
    return stream.bit()


def sample_interaction(g: Graph, stream: RandomStream, step: int = 0) -> Interaction:
    """Draw one ordered adjacent pair; every ordered pair has probability
    exactly 1/(2m). Uses one 64-bit draw per attempt: low bits select the
    edge by rejection, the top bit orients it."""
    m = g.m
    mask = 1
    while mask < m:
        mask <<= 1
    mask -= 1
    while True:
        r = stream.u64()
        idx = r & mask
        if idx < m:
            u, v = int(g.edges[idx, 0]), int(g.edges[idx, 1])
            if r >> 63:
                u, v = v, u
            return Interaction(step=step, u=u, v=v)


@dataclass(frozen=True)
class CountCondition:
    """Linear stopping predicate on state counts: dot(weights, counts) op
    threshold, with op one of '<=' or '>='."""

    weights: tuple[int, ...]
    op: str
    threshold: int

    def __post_init__(self):
        if self.op not in ("<=", ">="):
            raise ValueError(f"op must be '<=' or '>=', got {self.op!r}")

    def evaluate(self, counts: Sequence[int]) -> bool:
        s = int(np.dot(np.asarray(self.weights, dtype=np.int64), np.asarray(counts, dtype=np.int64)))
        return s <= self.threshold if self.op == "<=" else s >= self.threshold


@dataclass(frozen=True)
class ProtocolSpec:
    """States, ordered-pair transition table, input/output maps.

    table[x, y] = (new_initiator_state, new_responder_state) for the ordered
    pair (x, y). init_map sends input bit -> state; output_map sends state ->
    output bit. certified lists count conditions that prove the run can no
    longer change its output."""

    name: str
    states: tuple[str, ...]
    table: np.ndarray
    init_map: np.ndarray
    output_map: np.ndarray
    certified: tuple[CountCondition, ...] = ()

    def __post_init__(self):
        S = len(self.states)
        if self.table.shape != (S, S, 2):
            raise ValueError(f"table must have shape ({S}, {S}, 2)")
        if self.table.min() < 0 or self.table.max() >= S:
            raise ValueError("table entries out of range")
        for cond in self.certified:
            if len(cond.weights) != S:
                raise ValueError("certified condition weight length != state count")

    @property
    def n_states(self) -> int:
        return len(self.states)

    def state_index(self, label: str) -> int:
        return self.states.index(label)

    def apply(self, su: int, sv: int) -> tuple[int, int]:
        """Transition for one ordered pair (pure Python reference path)."""
        return int(self.table[su, sv, 0]), int(self.table[su, sv, 1])


@dataclass(frozen=True)
class StoppingRule:
    """When to halt: a step horizon, optional count conditions (default: the
    protocol's certified conditions), optional conserved-form watch whose
    first violation step is recorded, and for continuous runs a time
    horizon."""

    horizon: int
    conditions: tuple[CountCondition, ...] | None = None
    watch_weights: tuple[int, ...] | None = None
    time_horizon: float = 0.0


@dataclass
class Trace:
    """Count snapshots (and, for small n, dense state snapshots)."""

    snapshot_steps: np.ndarray
    counts: np.ndarray
    times: np.ndarray | None = None
    dense_steps: np.ndarray | None = None
    dense_states: np.ndarray | None = None

    def to_jsonl(self, states: Sequence[str]) -> str:
        lines = []
        for i in range(len(self.snapshot_steps)):
            rec = {
                "step": int(self.snapshot_steps[i]),
                "counts": {states[s]: int(self.counts[i, s]) for s in range(len(states))},
            }
            if self.times is not None:
                rec["time"] = float(self.times[i])
            lines.append(json.dumps(rec))
        return "\n".join(lines) + ("\n" if lines else "")


@dataclass
class RunResult:
    protocol: str
    n: int
    stop_step: int
    stop_reason: str  # "condition" | "horizon" | "time"
    censored: bool
    final_states: np.ndarray
    final_counts: np.ndarray
    trace: Trace | None
    watch_violation_step: int | None
    stop_time: float | None = None
    stream_counter: int = 0

    def outputs(self, proto: ProtocolSpec) -> np.ndarray:
        return proto.output_map[self.final_states]


def initial_states(proto: ProtocolSpec, g: Graph, inputs: np.ndarray) -> np.ndarray:
    inputs = np.asarray(inputs, dtype=np.int8)
    if inputs.shape != (g.n,):
        raise ValueError(f"inputs must have shape ({g.n},)")
    if inputs.min() < 0 or inputs.max() > 1:
        raise ValueError("inputs must be bits")
    return proto.init_map[inputs].astype(np.int8)


def _prep_conditions(proto: ProtocolSpec, stop: StoppingRule):
    conds = proto.certified if stop.conditions is None else stop.conditions
    S = proto.n_states
    C = len(conds)
    w = np.zeros((C, S), dtype=np.int64)
    op = np.zeros(C, dtype=np.int8)
    thr = np.zeros(C, dtype=np.int64)
    for i, c in enumerate(conds):
        if len(c.weights) != S:
            raise ValueError("condition weight length != state count")
        w[i] = c.weights
        op[i] = 0 if c.op == "<=" else 1
        thr[i] = c.threshold
    return conds, w, op, thr


def run_discrete(
    proto: ProtocolSpec,
    g: Graph,
    inputs: np.ndarray | None = None,
    states: np.ndarray | None = None,
    stop: StoppingRule | None = None,
    seed: int | RandomStream = 0,
    snapshot_every: int = 0,
    max_snapshots: int = 4096,
) -> RunResult:
    """Run the protocol under the discrete uniform-pair scheduler.

    Exactly one of inputs (bit vector) or states (state-index vector) must be
    given. censored is True when conditions were requested but the horizon
    hit first."""
    if (inputs is None) == (states is None):
        raise ValueError("pass exactly one of inputs= or states=")
    if states is None:
        states = initial_states(proto, g, inputs)
    else:
        states = np.asarray(states, dtype=np.int8).copy()
        if states.shape != (g.n,):
            raise ValueError(f"states must have shape ({g.n},)")
        if states.min() < 0 or states.max() >= proto.n_states:
            raise ValueError("state index out of range")
    if stop is None:
        raise ValueError("a StoppingRule is required")

    stream = as_stream(seed)
    S = proto.n_states
    counts = np.bincount(states, minlength=S).astype(np.int64)
    conds, w, op, thr = _prep_conditions(proto, stop)

    watch_on = stop.watch_weights is not None
    watch_w = np.zeros(S, dtype=np.int64)
    if watch_on:
        if len(stop.watch_weights) != S:
            raise ValueError("watch weight length != state count")
        watch_w[:] = stop.watch_weights

    if snapshot_every > 0:
        cap = min(max_snapshots, int(stop.horizon // snapshot_every) + 3)
    else:
        cap = 1
    snap_steps = np.zeros(cap, dtype=np.int64)
    snap_counts = np.zeros((cap, S), dtype=np.int64)

    next_i = np.ascontiguousarray(proto.table[:, :, 0])
    next_r = np.ascontiguousarray(proto.table[:, :, 1])
    stop_step, reason, watch_step, n_snap, ctr = _kernels.table_run(
        g.edges[:, 0].astype(np.int32),
        g.edges[:, 1].astype(np.int32),
        next_i,
        next_r,
        states,
        counts,
        np.int64(stop.horizon),
        np.uint64(stream.key),
        np.uint64(stream.counter),
        w,
        op,
        thr,
        watch_w,
        watch_on,
        np.int64(snapshot_every),
        snap_steps,
        snap_counts,
    )
    stream.counter = int(ctr)

    trace = None
    if snapshot_every > 0:
        trace = Trace(snapshot_steps=snap_steps[:n_snap].copy(), counts=snap_counts[:n_snap].copy())
    return RunResult(
        protocol=proto.name,
        n=g.n,
        stop_step=int(stop_step),
        stop_reason="condition" if reason == 0 else "horizon",
        censored=(reason != 0 and len(conds) > 0),
        final_states=states,
        final_counts=counts,
        trace=trace,
        watch_violation_step=int(watch_step) if watch_step >= 0 else None,
        stream_counter=int(ctr),
    )


def run_continuous(
    proto: ProtocolSpec,
    g: Graph,
    inputs: np.ndarray | None = None,
    states: np.ndarray | None = None,
    stop: StoppingRule | None = None,
    seed: int | RandomStream = 0,
) -> RunResult:
    """Continuous-time variant: interaction times form a Poisson process of
    rate 1/2; each event is one uniform ordered pair. stop.time_horizon > 0
    bounds real time, stop.horizon bounds event count."""
    if (inputs is None) == (states is None):
        raise ValueError("pass exactly one of inputs= or states=")
    if states is None:
        states = initial_states(proto, g, inputs)
    else:
        states = np.asarray(states, dtype=np.int8).copy()
    if stop is None:
        raise ValueError("a StoppingRule is required")
    stream = as_stream(seed)
    S = proto.n_states
    counts = np.bincount(states, minlength=S).astype(np.int64)
    conds, w, op, thr = _prep_conditions(proto, stop)
    next_i = np.ascontiguousarray(proto.table[:, :, 0])
    next_r = np.ascontiguousarray(proto.table[:, :, 1])
    stop_step, t_real, reason, ctr = _kernels.table_run_continuous(
        g.edges[:, 0].astype(np.int32),
        g.edges[:, 1].astype(np.int32),
        next_i,
        next_r,
        states,
        counts,
        np.int64(stop.horizon),
        float(stop.time_horizon),
        np.uint64(stream.key),
        np.uint64(stream.counter),
        w,
        op,
        thr,
    )
    stream.counter = int(ctr)
    reason_s = {0: "condition", 1: "horizon", 2: "time"}[int(reason)]
    return RunResult(
        protocol=proto.name,
        n=g.n,
        stop_step=int(stop_step),
        stop_reason=reason_s,
        censored=(reason != 0 and len(conds) > 0),
        final_states=states,
        final_counts=counts,
        trace=None,
        watch_violation_step=None,
        stop_time=float(t_real),
        stream_counter=int(ctr),
    )


def run_discrete_reference(
    proto: ProtocolSpec,
    g: Graph,
    states: np.ndarray,
    horizon: int,
    seed: int | RandomStream = 0,
) -> np.ndarray:
    """Plain-Python runner used to cross-check the compiled path. Consumes
    the stream identically to the kernel (one draw per rejection attempt)."""
    stream = as_stream(seed)
    states = np.asarray(states, dtype=np.int8).copy()
    m = g.m
    mask = 1
    while mask < m:
        mask <<= 1
    mask -= 1
    eu = g.edges[:, 0]
    ev = g.edges[:, 1]
    for _ in range(horizon):
        while True:
            r = stream.u64()
            idx = r & mask
            if idx < m:
                break
        a, b = int(eu[idx]), int(ev[idx])
        if r >> 63:
            a, b = b, a
        na, nb = proto.apply(states[a], states[b])
        states[a] = na
        states[b] = nb
    return states
