"""Exact majority by synchronized cancellation and doubling.

Tokens carry an opinion omega in {A, B, a, b, C, clock}, a phase mod 4, a
saturating iteration counter, an embedded tick automaton (clock tokens
only), three one-way flags (abort / a-wins / b-wins), and a 4-state backup
opinion updated on every interaction. Even phases cancel opposite strong
opinions pairwise, odd phases split a strong opinion with a neutral token
into two half-weight ones, and the promotion at the next even phase doubles
the survivor count. The flag overlay turns the always-correct-but-slow core
into a stabilizing protocol: a strong token that survives a full doubling
phase announces victory, inconsistencies or counter overflow raise abort,
and an aborted population falls back to the backup protocol's output.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from ._kernels import (
    FL_ABORT,
    FL_AWINS,
    FL_BWINS,
    MASK_ID,
    MASK_OM,
    OM_A,
    OM_B,
    OM_C,
    OM_CLOCK,
    OM_SA,
    OM_SB,
    SH_ACT,
    SH_BK,
    SH_COL,
    SH_FL,
    SH_ID,
    SH_PHI,
    SH_POS,
    SH_TH,
)
from .clock import PHI, ClockParams, PhaseTrace, clock_params_for_graph, clock_token_step, ClockTokenState
from .dynamics import FS_S0, FS_S1, FS_W0, FS_W1, assign_inputs, four_state_protocol, majority_split
from .graphs import Graph
from .rng import RandomStream, as_stream

OMEGA_LABELS = ("A", "B", "a", "b", "C", "clock")
MAX_N = 1 << 20  # token ids are 20 bits; also keeps the potential in int64


def theta_cap(n: int) -> int:
    """Saturation value of the iteration counter."""
    return math.ceil(2 * math.log2(n))


def potential_scale_exp(n: int) -> int:
    """lmax: potentials are stored as integers scaled by 2**lmax, the worst
    case being a half-weight token at the counter cap."""
    return (theta_cap(n) + 1) // 2


@dataclass(frozen=True)
class MajorityParams:
    """Everything the protocol kernel needs, plus the clock derivation it
    came from."""

    n: int
    H: int
    K: int
    theta_max: int
    lmax: int
    with_flags: bool
    clock: ClockParams | None = None
    R: float = 0.0

    @property
    def eta(self) -> float:
        return self.clock.eta if self.clock is not None else 0.0


def majority_params_for_graph(
    g: Graph,
    kappa: int = 2,
    lam: float = 4.0,
    c_br: float = 0.0,
    tau_rel: float | None = None,
    with_flags: bool = True,
) -> MajorityParams:
    if g.n > MAX_N:
        raise ValueError(f"n capped at {MAX_N}")
    cp, R = clock_params_for_graph(g, kappa=kappa, lam=lam, c_br=c_br, tau_rel=tau_rel)
    return MajorityParams(
        n=g.n,
        H=cp.H,
        K=cp.K,
        theta_max=theta_cap(g.n),
        lmax=potential_scale_exp(g.n),
        with_flags=with_flags,
        clock=cp,
        R=R,
    )


@dataclass
class MajorityToken:
    """Unpacked token, the reference-side view of one int64 word."""

    omega: str = "A"
    phase: int = 0
    theta: int = 0
    col: int = 0
    pos: int = 0
    active: bool = False
    abort: bool = False
    a_wins: bool = False
    b_wins: bool = False
    backup: int = FS_S0
    token_id: int = 0


def pack_token(t: MajorityToken) -> int:
    om = OMEGA_LABELS.index(t.omega)
    fl = (FL_ABORT if t.abort else 0) | (FL_AWINS if t.a_wins else 0) | (FL_BWINS if t.b_wins else 0)
    return (
        om
        | (t.phase << SH_PHI)
        | (t.theta << SH_TH)
        | (t.col << SH_COL)
        | (t.pos << SH_POS)
        | (int(t.active) << SH_ACT)
        | (fl << SH_FL)
        | (t.backup << SH_BK)
        | ((t.token_id & 0xFFFFF) << SH_ID)
    )


def unpack_token(w: int) -> MajorityToken:
    w = int(w)
    fl = (w >> SH_FL) & 7
    return MajorityToken(
        omega=OMEGA_LABELS[w & MASK_OM],
        phase=(w >> SH_PHI) & 3,
        theta=(w >> SH_TH) & 0x7F,
        col=(w >> SH_COL) & 0xFF,
        pos=(w >> SH_POS) & 0xFF,
        active=bool((w >> SH_ACT) & 1),
        abort=bool(fl & FL_ABORT),
        a_wins=bool(fl & FL_AWINS),
        b_wins=bool(fl & FL_BWINS),
        backup=(w >> SH_BK) & 3,
        token_id=(w >> SH_ID) & 0xFFFFF,
    )


def init_words(bits: np.ndarray) -> np.ndarray:
    """Initial packed population: bit 0 -> strong A with backup S0, bit 1 ->
    strong B with backup S1; token id = position."""
    bits = np.asarray(bits, dtype=np.int64)
    n = bits.shape[0]
    if n > MAX_N:
        raise ValueError(f"n capped at {MAX_N}")
    om = np.where(bits == 0, OM_A, OM_B).astype(np.int64)
    bk = np.where(bits == 0, FS_S0, FS_S1).astype(np.int64)
    ids = np.arange(n, dtype=np.int64)
    return om | (bk << SH_BK) | (ids << SH_ID)


def phase_study_words(n: int, n_clocks: int) -> np.ndarray:
    """Population for isolated clock/phase experiments: n_clocks active
    clock tokens, the rest neutral C tokens; all phases 0."""
    if not 1 <= n_clocks <= n // 2:
        raise ValueError("need 1 <= n_clocks <= n/2")
    w = np.full(n, OM_C, dtype=np.int64)
    w[:n_clocks] = OM_CLOCK | (1 << SH_ACT)
    return w | (np.arange(n, dtype=np.int64) << SH_ID)


def token_output(w: int) -> int:
    """Output bit of one token: abort defers to the backup, else a victory
    flag decides, else the backup."""
    fl = (int(w) >> SH_FL) & 7
    bk = (int(w) >> SH_BK) & 3
    if fl & FL_ABORT:
        return bk & 1
    if fl & FL_AWINS:
        return 0
    if fl & FL_BWINS:
        return 1
    return bk & 1


def outputs(words: np.ndarray) -> np.ndarray:
    return np.asarray([token_output(int(w)) for w in words], dtype=np.int8)


def token_potential_scaled(w: int, lmax: int) -> int:
    """Signed weight of one token, scaled by 2**lmax: strong opinions count
    2^-floor(theta/2), weak ones 2^-floor((theta+1)/2), A-side positive."""
    om = int(w) & MASK_OM
    th = (int(w) >> SH_TH) & 0x7F
    if om == OM_A:
        return 1 << (lmax - th // 2)
    if om == OM_B:
        return -(1 << (lmax - th // 2))
    if om == OM_SA:
        return 1 << (lmax - (th + 1) // 2)
    if om == OM_SB:
        return -(1 << (lmax - (th + 1) // 2))
    return 0


def total_potential(words: np.ndarray, lmax: int) -> int:
    return sum(token_potential_scaled(int(w), lmax) for w in words)


def certified_stabilized(words: np.ndarray) -> int:
    """0: not certified. 1: A won cleanly (every token carries a-wins, no
    abort/b-wins, and no A-side opinion is left to be poisoned... no B-side
    opinion remains, so no rule can ever raise another flag). 2: the same
    for B. 3: fully aborted with unanimous backup output."""
    n = len(words)
    fl = (np.asarray(words, dtype=np.int64) >> SH_FL) & 7
    om = np.asarray(words, dtype=np.int64) & MASK_OM
    bk1 = ((np.asarray(words, dtype=np.int64) >> SH_BK) & 1).sum()
    n_abort = int((fl & FL_ABORT != 0).sum())
    n_awins = int((fl & FL_AWINS != 0).sum())
    n_bwins = int((fl & FL_BWINS != 0).sum())
    if n_abort == 0 and n_bwins == 0 and n_awins == n:
        if int(((om == OM_B) | (om == OM_SB)).sum()) == 0:
            return 1
    if n_abort == 0 and n_awins == 0 and n_bwins == n:
        if int(((om == OM_A) | (om == OM_SA)).sum()) == 0:
            return 2
    if n_abort == n and int(bk1) in (0, n):
        return 3
    return 0


# ---------------------------------------------------------------------------
# single-interaction paths


_FS_TABLE = four_state_protocol().table
_FS_I = np.ascontiguousarray(_FS_TABLE[:, :, 0]).reshape(16).astype(np.int64)
_FS_R = np.ascontiguousarray(_FS_TABLE[:, :, 1]).reshape(16).astype(np.int64)


def interact(wu: int, wv: int, params: MajorityParams) -> tuple[int, int]:
    """One ordered interaction via the compiled transition; returns the two
    updated token words in place (initiator's token first, before the swap
    that the scheduler would apply)."""
    tu, tv = _kernels.maj_tokens_nb(
        np.int64(wu),
        np.int64(wv),
        np.int64(params.H),
        np.int64(params.K),
        np.int64(params.theta_max),
        params.with_flags,
        _FS_I,
        _FS_R,
    )
    return int(tu), int(tv)


def interact_reference(u: MajorityToken, v: MajorityToken, params: MajorityParams) -> tuple[MajorityToken, MajorityToken]:
    """Independent plain-Python implementation of one interaction, used to
    cross-check the compiled path. Follows the same rule order: clock
    substep, phase rules on pre-phases, counter/promotion/flag raises, flag
    union, poisoning, inconsistency, opinion rule, backup step."""
    H, K, theta_max, with_flags = params.H, params.K, params.theta_max, params.with_flags
    u = MajorityToken(**vars(u))
    v = MajorityToken(**vars(v))

    tick_u = tick_v = False
    if u.omega == "clock":
        st, ticked, _ = clock_token_step(ClockTokenState(u.col, u.pos), 1, H, K)
        u.col, u.pos = st.col, st.pos
        tick_u = ticked and u.active
    if v.omega == "clock":
        st, ticked, _ = clock_token_step(ClockTokenState(v.col, v.pos), 0, H, K)
        v.col, v.pos = st.col, st.pos
        tick_v = ticked and v.active

    pu0, pv0 = u.phase, v.phase
    if tick_u:
        u.phase = (pu0 + 1) % PHI
    if pv0 == (pu0 + 1) % PHI:
        u.phase = pv0
        if u.omega == "clock" and u.active:
            u.active = False
    if tick_v:
        v.phase = (pv0 + 1) % PHI
    if pu0 == (pv0 + 1) % PHI:
        v.phase = pu0
        if v.omega == "clock" and v.active:
            v.active = False

    for tok, p0 in ((u, pu0), (v, pv0)):
        if tok.omega != "clock" and tok.phase != p0:
            reached = False
            if tok.theta < theta_max:
                tok.theta += 1
                reached = tok.theta == theta_max
            if p0 % 2 == 1:
                if tok.omega == "a":
                    tok.omega = "A"
                elif tok.omega == "b":
                    tok.omega = "B"
                elif with_flags and tok.omega == "A":
                    tok.a_wins = True
                elif with_flags and tok.omega == "B":
                    tok.b_wins = True
            if with_flags and reached and not (tok.a_wins or tok.b_wins):
                tok.abort = True

    if with_flags:
        ab = u.abort or v.abort
        aw = u.a_wins or v.a_wins
        bw = u.b_wins or v.b_wins
        for tok in (u, v):
            tok.abort, tok.a_wins, tok.b_wins = ab, aw, bw
        for tok in (u, v):
            if tok.omega in ("A", "a") and tok.b_wins:
                tok.abort = True
            elif tok.omega in ("B", "b") and tok.a_wins:
                tok.abort = True
        bad = (u.phase - v.phase) % PHI == 2
        if u.omega != "clock" and v.omega != "clock" and abs(u.theta - v.theta) > 1:
            bad = True
        if bad:
            for tok in (u, v):
                if not (tok.a_wins or tok.b_wins):
                    tok.abort = True

    if u.omega != "clock" and v.omega != "clock":
        if u.theta == 0 and v.theta == 0:
            if {u.omega, v.omega} == {"A", "B"}:
                u.omega = "clock"
                u.col = u.pos = 0
                u.active = True
                v.omega = "C"
        elif u.phase == v.phase:
            if u.phase % 2 == 0:
                if {u.omega, v.omega} == {"A", "B"}:
                    u.omega = "C"
                    v.omega = "C"
            else:
                if {u.omega, v.omega} == {"A", "C"}:
                    u.omega = "a"
                    v.omega = "a"
                elif {u.omega, v.omega} == {"B", "C"}:
                    u.omega = "b"
                    v.omega = "b"

    if with_flags:
        bu, bv = u.backup, v.backup
        u.backup = int(_FS_I[(bu << 2) | bv])
        v.backup = int(_FS_R[(bu << 2) | bv])
    return u, v


# ---------------------------------------------------------------------------
# full runs


@dataclass
class SyncRecord:
    step: int
    phase: int
    counts: dict  # omega label -> count
    n_abort: int
    n_awins: int
    n_bwins: int

    @property
    def strong_bias(self) -> int:
        return self.counts["A"] - self.counts["B"]


@dataclass
class StabilizationResult:
    n: int
    stop_step: int
    stop_reason: str  # "certified" | "horizon" | "event-overflow" | "sync-target"
    censored: bool
    certified_case: int  # 0 none, 1 A-won, 2 B-won, 3 aborted-consensus
    certified_step: int
    correct: bool | None
    consensus_bit: int | None
    observed_stab_step: int
    majority_bit: int
    bias0: int
    first_flag_step: int
    first_abort_step: int
    first_awins_step: int
    first_bwins_step: int
    potential0: int
    potential_final: int
    potential_break_step: int
    max_clock_tokens: int
    a_extinct_step: int
    b_extinct_step: int
    sync_records: list
    n_phase_events: int
    final_words: np.ndarray
    final_counts: dict
    trace: PhaseTrace | None
    params: MajorityParams
    stream_counter: int


_REASONS = {0: "certified", 1: "horizon", 2: "event-overflow", 3: "sync-target"}


def run_majority(
    g: Graph,
    params: MajorityParams,
    horizon: int,
    gamma: float | None = None,
    bits: np.ndarray | None = None,
    words: np.ndarray | None = None,
    placement: str = "random",
    majority_bit: int = 0,
    seed: int | RandomStream = 0,
    sync_target: int = 0,
    stop_on_certified: bool = True,
    with_events: bool = False,
    event_cap: int | None = None,
    sync_cap: int = 1024,
) -> StabilizationResult:
    """Run the protocol to certified stabilization, a sync-record target, or
    the horizon. Exactly one of gamma, bits, words chooses the start."""
    given = sum(x is not None for x in (gamma, bits, words))
    if given != 1:
        raise ValueError("pass exactly one of gamma=, bits=, words=")
    stream = as_stream(seed)
    if words is None:
        if bits is None:
            bits = assign_inputs(g, gamma, placement=placement, seed=stream, majority_bit=majority_bit)
        words = init_words(bits)
    else:
        words = np.asarray(words, dtype=np.int64).copy()
    if words.shape != (g.n,):
        raise ValueError("words shape mismatch")
    words0 = words.copy()
    initial_phases = ((words0 >> SH_PHI) & 3).astype(np.int64)

    om0 = words0 & MASK_OM
    n_a0 = int(((om0 == OM_A) | (om0 == OM_SA)).sum())
    n_b0 = int(((om0 == OM_B) | (om0 == OM_SB)).sum())
    bias0 = n_a0 - n_b0
    maj_bit: int | None
    if n_a0 > n_b0:
        maj_bit = 0
    elif n_b0 > n_a0:
        maj_bit = 1
    else:
        maj_bit = None

    if event_cap is None:
        event_cap = (g.n * PHI * (sync_target + 16) + 4096) if with_events else 0
    ev_step = np.zeros(event_cap, dtype=np.int64)
    ev_tok = np.zeros(event_cap, dtype=np.int64)
    ev_old = np.zeros(event_cap, dtype=np.int64)
    ev_new = np.zeros(event_cap, dtype=np.int64)
    sync_step = np.zeros(sync_cap, dtype=np.int64)
    sync_phase = np.zeros(sync_cap, dtype=np.int64)
    sync_counts = np.zeros((sync_cap, _kernels.CNT_LEN), dtype=np.int64)

    out, cnt, ctr = _kernels.majority_run(
        g.edges[:, 0].astype(np.int32),
        g.edges[:, 1].astype(np.int32),
        words,
        np.int64(params.H),
        np.int64(params.K),
        np.int64(params.theta_max),
        params.with_flags,
        np.int64(params.lmax),
        np.int64(horizon),
        np.uint64(stream.key),
        np.uint64(stream.counter),
        np.int64(sync_target),
        stop_on_certified,
        _FS_I,
        _FS_R,
        ev_step,
        ev_tok,
        ev_old,
        ev_new,
        sync_step,
        sync_phase,
        sync_counts,
    )
    stream.counter = int(ctr)
    (
        stop_step,
        reason,
        n_ev,
        n_sync,
        first_flag,
        first_abort,
        first_awins,
        first_bwins,
        pot0,
        pot_final,
        pot_break,
        max_clock,
        a_ext,
        b_ext,
        last_outchg,
        n_out1,
        cert,
        cert_step,
    ) = (int(x) for x in out)

    sync_records = []
    for i in range(n_sync):
        c = sync_counts[i]
        sync_records.append(
            SyncRecord(
                step=int(sync_step[i]),
                phase=int(sync_phase[i]),
                counts={OMEGA_LABELS[k]: int(c[_kernels.CNT_OM0 + k]) for k in range(6)},
                n_abort=int(c[_kernels.CNT_ABORT]),
                n_awins=int(c[_kernels.CNT_AWINS]),
                n_bwins=int(c[_kernels.CNT_BWINS]),
            )
        )

    consensus_bit: int | None = None
    if n_out1 == 0:
        consensus_bit = 0
    elif n_out1 == g.n:
        consensus_bit = 1
    correct = None if (maj_bit is None or consensus_bit is None) else consensus_bit == maj_bit

    trace = None
    if with_events:
        trace = PhaseTrace(
            n=g.n,
            initial_phases=initial_phases,
            steps=ev_step[:n_ev].copy(),
            tokens=ev_tok[:n_ev].copy(),
            old=ev_old[:n_ev].copy(),
            new=ev_new[:n_ev].copy(),
        )

    final_counts = {OMEGA_LABELS[k]: int(cnt[_kernels.CNT_OM0 + k]) for k in range(6)}
    final_counts["abort"] = int(cnt[_kernels.CNT_ABORT])
    final_counts["a_wins"] = int(cnt[_kernels.CNT_AWINS])
    final_counts["b_wins"] = int(cnt[_kernels.CNT_BWINS])
    final_counts["out1"] = int(cnt[_kernels.CNT_OUT1])

    return StabilizationResult(
        n=g.n,
        stop_step=stop_step,
        stop_reason=_REASONS[reason],
        censored=(reason == 1 and stop_on_certified),
        certified_case=cert,
        certified_step=cert_step,
        correct=correct,
        consensus_bit=consensus_bit,
        observed_stab_step=last_outchg,
        majority_bit=maj_bit if maj_bit is not None else -1,
        bias0=bias0,
        first_flag_step=first_flag,
        first_abort_step=first_abort,
        first_awins_step=first_awins,
        first_bwins_step=first_bwins,
        potential0=pot0,
        potential_final=pot_final,
        potential_break_step=pot_break,
        max_clock_tokens=max_clock,
        a_extinct_step=a_ext,
        b_extinct_step=b_ext,
        sync_records=sync_records,
        n_phase_events=n_ev,
        final_words=words,
        final_counts=final_counts,
        trace=trace,
        params=params,
        stream_counter=stream.counter,
    )


def measure_stabilization(
    g: Graph,
    gamma: float,
    horizon: int,
    params: MajorityParams | None = None,
    placement: str = "random",
    majority_bit: int = 0,
    seed: int | RandomStream = 0,
) -> StabilizationResult:
    """Convenience wrapper: derive parameters if needed, run to certified
    stabilization or the horizon."""
    if params is None:
        params = majority_params_for_graph(g)
    return run_majority(
        g,
        params,
        horizon=horizon,
        gamma=gamma,
        placement=placement,
        majority_bit=majority_bit,
        seed=seed,
    )


def doubling_checks(result: StabilizationResult) -> list[dict]:
    """Exact bias-doubling audit between even-phase synchronization records.

    For even records r_i and r_{i+2} both at or before the first flag step,
    the strong bias must either exactly double or the minority side must be
    extinct by r_{i+2}. Returns one dict per comparable pair."""
    recs = result.sync_records
    first_flag = result.first_flag_step if result.first_flag_step >= 0 else None
    checks = []
    for i in range(len(recs) - 2):
        r0, r2 = recs[i], recs[i + 2]
        if r0.phase % 2 != 0:
            continue
        if first_flag is not None and r2.step > first_flag:
            continue
        b0, b2 = r0.strong_bias, r2.strong_bias
        minority_gone = (b0 >= 0 and r2.counts["B"] + r2.counts["b"] == 0) or (
            b0 <= 0 and r2.counts["A"] + r2.counts["a"] == 0
        )
        checks.append(
            {
                "i": i,
                "step_lo": r0.step,
                "step_hi": r2.step,
                "bias_lo": b0,
                "bias_hi": b2,
                "doubled": b2 == 2 * b0,
                "minority_extinct": minority_gone,
                "ok": b2 == 2 * b0 or minority_gone,
            }
        )
    return checks
