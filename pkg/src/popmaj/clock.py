"""Space-efficient tick generation and the shared 4-phase clock.

A clock token repeatedly flips biased coins built from fair interaction
bits: one coin is K consecutive bits and succeeds (probability 2^-K) only on
all-ones. H successes make one tick, so a tick costs exactly H * 2^K coins
in expectation, i.e. H * K * 2^K of the token's own interactions. K is sized
so that a tick takes at least lam * theta times the target interval, where
theta = Delta/delta absorbs the degree spread: then even the best-connected
token ticks no faster than the window and the slowest one still ticks within
a bounded multiple of it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .graphs import Graph
from .rng import RandomStream, as_stream
from .spectral import spectral_summary

DEFAULT_KAPPA = 2
DEFAULT_LAM = 4.0
WINDOW_CONST = 80
PHI = 4  # phases in the shared clock


def solve_J(x: float, tol: float = 1e-12) -> float:
    """The inverse of J * 2**J on (0, inf): returns J with J * 2**J = x."""
    if x <= 0:
        raise ValueError(f"x must be positive, got {x}")
    lo, hi = 0.0, 1.0
    while hi * 2.0**hi < x:
        lo = hi
        hi *= 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid * 2.0**mid < x:
            lo = mid
        else:
            hi = mid
        if hi - lo <= tol:
            break
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class ClockParams:
    """Derived tick-automaton parameters for one graph.

    q/q0/q1: per-step interaction probability of an average/min/max-degree
    node; theta = q1/q0... stored explicitly; tau_tick is the target tick
    interval (steps); tau_tick_slow = lam * theta * tau_tick is the interval
    the automaton is actually sized for; eta is the realized slowdown of a
    minimum-degree token relative to tau_tick, so its expected tick interval
    is eta * tau_tick >= lam * theta * tau_tick."""

    n: int
    m: int
    delta: int
    Delta: int
    kappa: int
    lam: float
    q: float
    q0: float
    q1: float
    theta: float
    tau_tick: float
    tau_tick_slow: float
    H: int
    K: int
    p: float
    eta: float

    @property
    def coins_per_tick(self) -> int:
        return self.H * 2**self.K

    @property
    def interactions_per_tick(self) -> int:
        return self.H * self.K * 2**self.K

    @property
    def states_per_token(self) -> int:
        return self.H * (2 * self.K - 1)


def derive_clock_params(
    n: int,
    m: int,
    delta: int,
    Delta: int,
    tau_tick: float,
    kappa: int = DEFAULT_KAPPA,
    lam: float = DEFAULT_LAM,
) -> ClockParams:
    """Size the automaton (H columns, K bits per coin) for a tick interval.

    H = ceil(kappa * log2 n) makes the tick-count concentration strong
    enough for whp statements at exponent kappa. K is the least integer such
    that H coins of K bits consume at least the interactions a maximum-rate
    token collects in lam * theta * tau_tick steps: K = ceil(J(x)) with
    J 2^J = x and x = q1 * lam * tau_tick / H... computed with the average
    rate q = 2/n and theta = q1/q folded in, which is the same product."""
    if n < 2:
        raise ValueError("n must be at least 2")
    if not (1 <= delta <= Delta <= n - 1):
        raise ValueError("need 1 <= delta <= Delta <= n-1")
    if m < 1:
        raise ValueError("m must be positive")
    if tau_tick <= 0:
        raise ValueError("tau_tick must be positive")
    if kappa < 1:
        raise ValueError("kappa must be at least 1")
    if lam <= 1:
        raise ValueError("lam must exceed 1")
    q = 2.0 / n
    q0 = delta / m
    q1 = Delta / m
    theta = q1 / q
    tau_slow = lam * theta * tau_tick
    H = max(1, math.ceil(kappa * math.log2(n)))
    x = q * tau_slow / H
    K = max(1, math.ceil(solve_J(x)))
    if H * K * 2**K < q * tau_slow - 1e-9:
        raise AssertionError("automaton sized below its target interval")
    eta = lam * H * K * 2**K / (q0 * tau_tick)
    return ClockParams(
        n=n,
        m=m,
        delta=delta,
        Delta=Delta,
        kappa=kappa,
        lam=lam,
        q=q,
        q0=q0,
        q1=q1,
        theta=theta,
        tau_tick=tau_tick,
        tau_tick_slow=tau_slow,
        H=H,
        K=K,
        p=2.0**-K,
        eta=eta,
    )


def phase_clock_window(tau_rel: float, n: int, kappa: int = DEFAULT_KAPPA, c_br: float = 0.0) -> float:
    """Length R of the freeze window: R = max(80 (kappa+2) tau_rel ln n,
    c_br tau_rel ln n). c_br comes from calibrate_broadcast_constant and
    guarantees a raised mark floods the graph within one window whp."""
    base = WINDOW_CONST * (kappa + 2) * tau_rel * math.log(n)
    return max(base, c_br * tau_rel * math.log(n))


def calibrate_broadcast_constant(
    g: Graph,
    trials: int = 200,
    seed: int | RandomStream = 0,
    tau_rel: float | None = None,
    quantile: float = 0.999,
    safety: float = 1.5,
) -> float:
    """Empirical constant c with T_br <= c tau_rel ln n whp: measures the
    spread time from a worst-placed single source, takes the given quantile
    across trials and inflates it by the safety factor."""
    from .dynamics import track_influence
    from .graphs import bfs_distances

    if tau_rel is None:
        tau_rel = spectral_summary(g).tau_rel
    stream = as_stream(seed)
    # worst single source: maximize eccentricity
    ecc_best, src = -1, 0
    for v in range(g.n):
        e = int(bfs_distances(g, v).max())
        if e > ecc_best:
            ecc_best, src = e, v
    scale = tau_rel * math.log(max(g.n, 2))
    horizon = int(200 * scale) + 1000
    ratios = np.empty(trials, dtype=np.float64)
    for i in range(trials):
        r = track_influence(g, [src], horizon=horizon, seed=stream.split(i + 1))
        if r.censored:
            raise RuntimeError("broadcast calibration censored; raise the horizon")
        ratios[i] = r.t_br / scale
    return float(np.quantile(ratios, quantile) * safety)


def clock_params_for_graph(
    g: Graph,
    kappa: int = DEFAULT_KAPPA,
    lam: float = DEFAULT_LAM,
    c_br: float = 0.0,
    tau_rel: float | None = None,
) -> tuple[ClockParams, float]:
    """(ClockParams, R) for a graph: R from the spectral gap, tick target
    tau_tick = 2R so a frozen window fits strictly inside every tick gap."""
    if tau_rel is None:
        tau_rel = spectral_summary(g).tau_rel
    deg = g.degrees()
    R = phase_clock_window(tau_rel, g.n, kappa=kappa, c_br=c_br)
    params = derive_clock_params(
        n=g.n,
        m=g.m,
        delta=int(deg.min()),
        Delta=int(deg.max()),
        tau_tick=2.0 * R,
        kappa=kappa,
        lam=lam,
    )
    return params, R


# ---------------------------------------------------------------------------
# single-token automaton, reference path


@dataclass
class ClockTokenState:
    """Automaton position: column 0..H-1, position 0..2K-2 inside it.
    Positions < K lie on the still-successful path, the rest on the failed
    path that only drains the remaining bits of the coin."""

    col: int = 0
    pos: int = 0


def clock_token_step(state: ClockTokenState, bit: int, H: int, K: int) -> tuple[ClockTokenState, bool, bool]:
    """Pure-Python twin of the compiled transition. Returns
    (new_state, ticked, coin_done)."""
    col, pos = state.col, state.pos
    if pos < K:
        consumed = pos + 1
        if bit:
            if consumed == K:
                col += 1
                if col == H:
                    return ClockTokenState(0, 0), True, True
                return ClockTokenState(col, 0), False, True
            return ClockTokenState(col, pos + 1), False, False
        if consumed == K:
            return ClockTokenState(col, 0), False, True
        return ClockTokenState(col, K + consumed - 1), False, False
    consumed = pos - K + 2
    if consumed == K:
        return ClockTokenState(col, 0), False, True
    return ClockTokenState(col, pos + 1), False, False


def enumerate_clock_states(H: int, K: int) -> set[tuple[int, int]]:
    """All (col, pos) pairs reachable from (0, 0); must have exactly
    H * (2K - 1) members."""
    seen = {(0, 0)}
    frontier = [(0, 0)]
    while frontier:
        col, pos = frontier.pop()
        for bit in (0, 1):
            nxt, _, _ = clock_token_step(ClockTokenState(col, pos), bit, H, K)
            key = (nxt.col, nxt.pos)
            if key not in seen:
                seen.add(key)
                frontier.append(key)
    return seen


@dataclass
class TickGapResult:
    gaps: np.ndarray  # global steps between consecutive ticks
    coins: np.ndarray  # coins consumed per tick
    H: int
    K: int
    expected_coins_per_tick: float
    host_expected_gap: float  # for the starting host's degree


def measure_tick_gaps(
    g: Graph,
    H: int,
    K: int,
    n_ticks: int,
    host0: int = 0,
    seed: int | RandomStream = 0,
) -> TickGapResult:
    """Tick gaps of one circulating clock token on an otherwise passive
    population. Only the token's own interactions are simulated; waiting
    times between them are sampled geometrically, so the cost per tick is
    O(H K 2^K) instead of O(m/delta * H K 2^K)."""
    stream = as_stream(seed)
    deg = g.degrees().astype(np.int64)
    adj = g.adjacency_lists()
    off = np.zeros(g.n + 1, dtype=np.int64)
    for v in range(g.n):
        off[v + 1] = off[v] + deg[v]
    flat = np.empty(off[-1], dtype=np.int64)
    for v in range(g.n):
        flat[off[v] : off[v + 1]] = adj[v]
    gaps = np.zeros(n_ticks, dtype=np.int64)
    coins = np.zeros(n_ticks, dtype=np.int64)
    _t_end, ctr = _kernels.solo_clock_run(
        deg,
        flat,
        off,
        np.int64(host0),
        np.int64(g.m),
        np.int64(H),
        np.int64(K),
        np.int64(n_ticks),
        np.uint64(stream.key),
        np.uint64(stream.counter),
        gaps,
        coins,
    )
    stream.counter = int(ctr)
    return TickGapResult(
        gaps=gaps,
        coins=coins,
        H=H,
        K=K,
        expected_coins_per_tick=float(H * 2**K),
        host_expected_gap=float(H * K * 2**K) * g.m / float(deg[host0]),
    )


# ---------------------------------------------------------------------------
# shared 4-phase clock


def phase_update(p_own: int, p_other: int, ticked: bool) -> tuple[int, bool]:
    """Pure phase rule for one participant, evaluated on the pre-interaction
    phases: an own tick advances by one; a partner exactly one phase ahead
    is adopted (both can fire, they agree). Returns (new_phase,
    adopted_from_partner)."""
    p = p_own
    if ticked:
        p = (p_own + 1) % PHI
    adopted = p_other == (p_own + 1) % PHI
    if adopted:
        p = p_other
    return p, adopted


@dataclass
class PhaseTrace:
    """Complete phase-event history of one run: token t moved old -> new at
    a step. Enough to reconstruct every token's phase at any step."""

    n: int
    initial_phases: np.ndarray
    steps: np.ndarray
    tokens: np.ndarray
    old: np.ndarray
    new: np.ndarray

    def phases_at(self, step: int) -> np.ndarray:
        ph = self.initial_phases.copy()
        k = int(np.searchsorted(self.steps, step, side="right"))
        for i in range(k):
            ph[self.tokens[i]] = self.new[i]
        return ph


def detect_sync_steps(trace: PhaseTrace) -> tuple[np.ndarray, np.ndarray]:
    """Steps at which every token shares one phase (entered at that step),
    with that phase. Step 0 is included when the start is synchronized."""
    cnt = np.bincount(trace.initial_phases, minlength=PHI)
    steps = []
    phases = []
    if cnt.max() == trace.n:
        steps.append(0)
        phases.append(int(cnt.argmax()))
    i = 0
    N = len(trace.steps)
    while i < N:
        t = trace.steps[i]
        j = i
        while j < N and trace.steps[j] == t:
            cnt[trace.old[j]] -= 1
            cnt[trace.new[j]] += 1
            j += 1
        # a sync step must coincide with an event that completed it
        if cnt.max() == trace.n:
            p = int(cnt.argmax())
            if not steps or steps[-1] != t:
                steps.append(int(t))
                phases.append(p)
        i = j
    return np.asarray(steps, dtype=np.int64), np.asarray(phases, dtype=np.int64)


@dataclass
class PhaseClockReport:
    sync_steps: np.ndarray
    sync_phases: np.ndarray
    gaps: np.ndarray
    R: float
    window_hi: float  # 2 * eta * R
    monotone_ok: bool
    gaps_ok: bool
    freeze_ok: bool
    two_phase_ok: bool
    gap_violations: list
    freeze_violations: list
    two_phase_violations: list

    @property
    def ok(self) -> bool:
        return self.monotone_ok and self.gaps_ok and self.freeze_ok and self.two_phase_ok


def validate_phase_clock(trace: PhaseTrace, R: float, eta: float) -> PhaseClockReport:
    """Check the four clock properties on a trace: phases only step forward
    by one; consecutive synchronization steps are R to 2*eta*R apart; no
    phase moves within R steps after a synchronization; between consecutive
    synchronizations only the current and next phase are ever present."""
    monotone_ok = bool(np.all(trace.new == (trace.old + 1) % PHI))
    sync_steps, sync_phases = detect_sync_steps(trace)
    gaps = np.diff(sync_steps)
    window_hi = 2.0 * eta * R
    gap_violations = []
    for i, gp in enumerate(gaps):
        if not (R <= gp <= window_hi):
            gap_violations.append((int(sync_steps[i]), int(sync_steps[i + 1]), int(gp)))

    freeze_violations = []
    two_phase_violations = []
    # replay once, checking the freeze window and the two-phase support
    cnt = np.bincount(trace.initial_phases, minlength=PHI)
    sync_idx = 0 if len(sync_steps) and sync_steps[0] == 0 else -1
    N = len(trace.steps)
    i = 0
    while i < N:
        t = int(trace.steps[i])
        j = i
        while j < N and trace.steps[j] == t:
            cnt[trace.old[j]] -= 1
            cnt[trace.new[j]] += 1
            j += 1
        if sync_idx >= 0 and sync_idx < len(sync_steps):
            r_i = int(sync_steps[sync_idx])
            if r_i < t <= r_i + R:
                freeze_violations.append((r_i, t))
        while sync_idx + 1 < len(sync_steps) and sync_steps[sync_idx + 1] == t:
            sync_idx += 1
        if sync_idx >= 0 and sync_idx < len(sync_steps):
            p = int(sync_phases[sync_idx])
            allowed = {p, (p + 1) % PHI}
            present = {int(x) for x in np.flatnonzero(cnt > 0)}
            if not present <= allowed:
                two_phase_violations.append((t, sorted(present), sorted(allowed)))
        i = j
    return PhaseClockReport(
        sync_steps=sync_steps,
        sync_phases=sync_phases,
        gaps=gaps,
        R=R,
        window_hi=window_hi,
        monotone_ok=monotone_ok,
        gaps_ok=not gap_violations,
        freeze_ok=not freeze_violations,
        two_phase_ok=not two_phase_violations,
        gap_violations=gap_violations,
        freeze_violations=freeze_violations,
        two_phase_violations=two_phase_violations,
    )
