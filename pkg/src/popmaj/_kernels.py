"""Compiled inner loops.

Every kernel consumes one SplitMix64 counter stream (see rng.py): an
interaction costs one draw (two on bitmask rejection), giving the ordered
pair (initiator, responder) with probability exactly 1/(2m). All kernels are
nogil so trials can run on worker threads.

Token words for the cancellation-doubling protocol are packed int64:

    bits 0-2   omega (0 A, 1 B, 2 a, 3 b, 4 C, 5 clock)
    bits 3-4   phase (mod 4)
    bits 5-11  iteration counter
    bits 12-19 clock column (0..H-1)
    bits 20-27 clock column position (0..2K-2)
    bit  28    clock active
    bits 29-31 flags (abort, a-wins, b-wins)
    bits 32-33 backup four-state opinion (S0, S1, W0, W1)
    bits 40-59 token id (fixed at init, travels with the token)
"""

from __future__ import annotations

import numba
import numpy as np

from .rng import stream_draw

U64 = np.uint64
I64 = np.int64

# omega codes
OM_A, OM_B, OM_SA, OM_SB, OM_C, OM_CLOCK = 0, 1, 2, 3, 4, 5
# flag bits (within the 3-bit flag field)
FL_ABORT, FL_AWINS, FL_BWINS = 1, 2, 4
# packed-word field shifts/masks
SH_PHI, SH_TH, SH_COL, SH_POS, SH_ACT, SH_FL, SH_BK, SH_ID = 3, 5, 12, 20, 28, 29, 32, 40
MASK_OM = 7
MASK_POT = MASK_OM | (0x7F << SH_TH)
MASK_ID = 0xFFFFF << SH_ID
# count-vector offsets used by the protocol kernel
CNT_OM0 = 0  # 0..5: omega counts
CNT_PHI0 = 6  # 6..9: phase counts
CNT_ABORT, CNT_AWINS, CNT_BWINS, CNT_BOP1, CNT_OUT1 = 10, 11, 12, 13, 14
CNT_LEN = 15


@numba.njit(cache=True, nogil=True, inline="always")
def _pow2mask(m):
    mask = np.int64(1)
    while mask < m:
        mask <<= 1
    return np.uint64(mask - 1)


@numba.njit(cache=True, nogil=True, inline="always")
def _draw_pair(key, ctr, eu, ev, m, umask):
    # ordered adjacent pair, each with probability exactly 1/(2m)
    while True:
        r = stream_draw(key, ctr)
        ctr += U64(1)
        idx = np.int64(r & umask)
        if idx < m:
            if (r >> U64(63)) != U64(0):
                return ev[idx], eu[idx], ctr
            return eu[idx], ev[idx], ctr


@numba.njit(cache=True, nogil=True, inline="always")
def _uniform_open(key, ctr):
    r = stream_draw(key, ctr)
    return (np.float64(r >> U64(11)) + 1.0) * (2.0**-53), ctr + U64(1)


# ---------------------------------------------------------------------------
# table-driven protocols (pair rule given as two S x S lookup tables)


@numba.njit(cache=True, nogil=True)
def table_run(
    eu,
    ev,
    next_i,
    next_r,
    states,
    counts,
    horizon,
    key,
    ctr0,
    cond_w,
    cond_op,
    cond_thr,
    watch_w,
    watch_on,
    snap_every,
    snap_steps,
    snap_counts,
):
    m = eu.shape[0]
    umask = _pow2mask(m)
    key = U64(key)
    ctr = U64(ctr0)
    ncond = cond_thr.shape[0]
    S = counts.shape[0]

    cond_sums = np.zeros(ncond, dtype=np.int64)
    for c in range(ncond):
        acc = np.int64(0)
        for s in range(S):
            acc += cond_w[c, s] * counts[s]
        cond_sums[c] = acc
    watch0 = np.int64(0)
    if watch_on:
        for s in range(S):
            watch0 += watch_w[s] * counts[s]
    watch_sum = watch0
    watch_step = np.int64(-1)

    n_snap = 0
    if snap_steps.shape[0] > 0:
        snap_steps[0] = 0
        for s in range(S):
            snap_counts[0, s] = counts[s]
        n_snap = 1

    # conditions may already hold at step 0
    for c in range(ncond):
        hit = cond_sums[c] <= cond_thr[c] if cond_op[c] == 0 else cond_sums[c] >= cond_thr[c]
        if hit:
            return np.int64(0), 0, watch_step, n_snap, ctr

    stop_step = horizon
    reason = 1
    for t in range(np.int64(1), horizon + np.int64(1)):
        a, b, ctr = _draw_pair(key, ctr, eu, ev, m, umask)
        sa = states[a]
        sb = states[b]
        na = next_i[sa, sb]
        nb = next_r[sa, sb]
        if na != sa or nb != sb:
            states[a] = na
            states[b] = nb
            counts[sa] -= 1
            counts[sb] -= 1
            counts[na] += 1
            counts[nb] += 1
            for c in range(ncond):
                cond_sums[c] += cond_w[c, na] + cond_w[c, nb] - cond_w[c, sa] - cond_w[c, sb]
            if watch_on:
                watch_sum += watch_w[na] + watch_w[nb] - watch_w[sa] - watch_w[sb]
                if watch_sum != watch0 and watch_step < 0:
                    watch_step = t
            fired = False
            for c in range(ncond):
                hit = cond_sums[c] <= cond_thr[c] if cond_op[c] == 0 else cond_sums[c] >= cond_thr[c]
                if hit:
                    fired = True
            if fired:
                stop_step = t
                reason = 0
                if snap_every > 0 and n_snap < snap_steps.shape[0]:
                    snap_steps[n_snap] = t
                    for s in range(S):
                        snap_counts[n_snap, s] = counts[s]
                    n_snap += 1
                return stop_step, reason, watch_step, n_snap, ctr
        if snap_every > 0 and t % snap_every == 0 and n_snap < snap_steps.shape[0]:
            snap_steps[n_snap] = t
            for s in range(S):
                snap_counts[n_snap, s] = counts[s]
            n_snap += 1
    if snap_every > 0 and n_snap < snap_steps.shape[0] and (n_snap == 0 or snap_steps[n_snap - 1] != stop_step):
        snap_steps[n_snap] = stop_step
        for s in range(S):
            snap_counts[n_snap, s] = counts[s]
        n_snap += 1
    return stop_step, reason, watch_step, n_snap, ctr


@numba.njit(cache=True, nogil=True)
def table_run_continuous(
    eu,
    ev,
    next_i,
    next_r,
    states,
    counts,
    horizon_events,
    horizon_time,
    key,
    ctr0,
    cond_w,
    cond_op,
    cond_thr,
):
    """Continuous-time variant: global exponential(1/2) gaps, then a uniform
    ordered pair. Stops on a count condition, on horizon_events interactions,
    or when the next event would pass horizon_time (whichever first)."""
    m = eu.shape[0]
    umask = _pow2mask(m)
    key = U64(key)
    ctr = U64(ctr0)
    ncond = cond_thr.shape[0]
    S = counts.shape[0]
    cond_sums = np.zeros(ncond, dtype=np.int64)
    for c in range(ncond):
        for s in range(S):
            cond_sums[c] += cond_w[c, s] * counts[s]
    for c in range(ncond):
        hit = cond_sums[c] <= cond_thr[c] if cond_op[c] == 0 else cond_sums[c] >= cond_thr[c]
        if hit:
            return np.int64(0), 0.0, 0, ctr
    t_real = 0.0
    stop_step = np.int64(0)
    reason = 1
    for t in range(np.int64(1), horizon_events + np.int64(1)):
        u, ctr = _uniform_open(key, ctr)
        gap = -np.log(u) * 2.0  # rate 1/2
        if horizon_time > 0.0 and t_real + gap > horizon_time:
            stop_step = t - 1
            reason = 2
            return stop_step, t_real, reason, ctr
        t_real += gap
        a, b, ctr = _draw_pair(key, ctr, eu, ev, m, umask)
        sa = states[a]
        sb = states[b]
        na = next_i[sa, sb]
        nb = next_r[sa, sb]
        if na != sa or nb != sb:
            states[a] = na
            states[b] = nb
            counts[sa] -= 1
            counts[sb] -= 1
            counts[na] += 1
            counts[nb] += 1
            for c in range(ncond):
                cond_sums[c] += cond_w[c, na] + cond_w[c, nb] - cond_w[c, sa] - cond_w[c, sb]
            for c in range(ncond):
                hit = cond_sums[c] <= cond_thr[c] if cond_op[c] == 0 else cond_sums[c] >= cond_thr[c]
                if hit:
                    return t, t_real, 0, ctr
        stop_step = t
    return stop_step, t_real, reason, ctr


# ---------------------------------------------------------------------------
# influence propagation


@numba.njit(cache=True, nogil=True)
def broadcast_run(eu, ev, marked, horizon, key, ctr0):
    """Spread a mark by pairwise union; returns the first step with all nodes
    marked (-1 if the horizon hits first)."""
    n = marked.shape[0]
    m = eu.shape[0]
    umask = _pow2mask(m)
    key = U64(key)
    ctr = U64(ctr0)
    cnt = np.int64(0)
    for i in range(n):
        if marked[i]:
            cnt += 1
    if cnt == n:
        return np.int64(0), ctr
    for t in range(np.int64(1), horizon + np.int64(1)):
        a, b, ctr = _draw_pair(key, ctr, eu, ev, m, umask)
        if marked[a] != marked[b]:
            marked[a] = True
            marked[b] = True
            cnt += 1
            if cnt == n:
                return t, ctr
    return np.int64(-1), ctr


@numba.njit(cache=True, nogil=True)
def influence_run(eu, ev, words, marked, horizon, key, ctr0):
    """Full influencer bitsets: words[v] accumulates everyone whose initial
    information reached v. Both participants merge on every interaction.
    marked carries a chosen source set's mark under the same merges; the
    returned step is the first with every node marked (-1 if censored).
    Always runs the full horizon so the bitsets are complete."""
    n = words.shape[0]
    m = eu.shape[0]
    W = words.shape[1]
    umask = _pow2mask(m)
    key = U64(key)
    ctr = U64(ctr0)
    cnt = np.int64(0)
    for i in range(n):
        if marked[i]:
            cnt += 1
    t_br = np.int64(0) if cnt == n else np.int64(-1)
    for t in range(np.int64(1), horizon + np.int64(1)):
        a, b, ctr = _draw_pair(key, ctr, eu, ev, m, umask)
        for w in range(W):
            merged = words[a, w] | words[b, w]
            words[a, w] = merged
            words[b, w] = merged
        if marked[a] != marked[b]:
            marked[a] = True
            marked[b] = True
            cnt += 1
            if cnt == n and t_br < 0:
                t_br = t
    return t_br, ctr


# ---------------------------------------------------------------------------
# coupled annihilation chains (shared schedule)


@numba.njit(cache=True, nogil=True)
def domination_run(eu, ev, z_hi, z_lo, horizon, key, ctr0):
    """Two sign chains driven by the same interaction sequence.

    Chain rule per ordered pair (a, b): opposite nonzero signs annihilate to
    0, anything else swaps. Returns the first step where z_hi >= z_lo fails
    pointwise (-1 if never)."""
    m = eu.shape[0]
    umask = _pow2mask(m)
    key = U64(key)
    ctr = U64(ctr0)
    for t in range(np.int64(1), horizon + np.int64(1)):
        a, b, ctr = _draw_pair(key, ctr, eu, ev, m, umask)
        xa = z_hi[a]
        xb = z_hi[b]
        if xa + xb == 0 and xa != 0:
            z_hi[a] = 0
            z_hi[b] = 0
        else:
            z_hi[a] = xb
            z_hi[b] = xa
        ya = z_lo[a]
        yb = z_lo[b]
        if ya + yb == 0 and ya != 0:
            z_lo[a] = 0
            z_lo[b] = 0
        else:
            z_lo[a] = yb
            z_lo[b] = ya
        if z_hi[a] < z_lo[a] or z_hi[b] < z_lo[b]:
            return t, ctr
    return np.int64(-1), ctr


# ---------------------------------------------------------------------------
# tick automaton


@numba.njit(cache=True, nogil=True, inline="always")
def clock_step_nb(col, pos, bit, H, K):
    """One transition of the H-column coin automaton.

    Positions 0..K-1 are the still-successful path (pos bits consumed),
    positions K..2K-2 the already-failed path (pos-K+1 bits consumed). A coin
    takes exactly K transitions; success (probability 2^-K) advances the
    column, the H-th success overflows into a tick.
    Returns (col, pos, ticked, coin_done)."""
    if pos < K:
        consumed = pos + 1
        if bit != 0:
            if consumed == K:
                col += 1
                if col == H:
                    return np.int64(0), np.int64(0), True, True
                return col, np.int64(0), False, True
            return col, pos + 1, False, False
        if consumed == K:
            return col, np.int64(0), False, True
        return col, K + consumed - 1, False, False
    consumed = pos - K + 2
    if consumed == K:
        return col, np.int64(0), False, True
    return col, pos + 1, False, False


@numba.njit(cache=True, nogil=True)
def solo_clock_run(deg, nbr_flat, nbr_off, host0, m, H, K, n_ticks, key, ctr0, gaps_out, coins_out):
    """Inter-tick gaps of a single circulating clock token.

    Waiting times between the host's interactions are geometric with success
    probability deg(host)/m and are sampled directly (inversion), so only the
    token's own interactions are simulated. Each interaction: one fair bit
    drives the automaton, then the token swaps across a uniform incident
    edge. Fills gaps_out (global steps between consecutive ticks) and
    coins_out (coin flips consumed per tick) for n_ticks ticks."""
    key = U64(key)
    ctr = U64(ctr0)
    host = host0
    t = np.int64(0)
    last = np.int64(0)
    coins = np.int64(0)
    col = np.int64(0)
    pos = np.int64(0)
    k = 0
    while k < n_ticks:
        q = np.float64(deg[host]) / np.float64(m)
        if q >= 1.0:
            t += 1
        else:
            u, ctr = _uniform_open(key, ctr)
            g = np.int64(np.ceil(np.log(u) / np.log1p(-q)))
            if g < 1:
                g = np.int64(1)
            t += g
        # one draw: top bit is the coin bit, low bits pick the incident edge
        d = deg[host]
        dmask = _pow2mask(d)
        while True:
            r = stream_draw(key, ctr)
            ctr += U64(1)
            i = np.int64(r & dmask)
            if i < d:
                bit = np.int64(r >> U64(63))
                break
        col, pos, ticked, coin_done = clock_step_nb(col, pos, bit, H, K)
        if coin_done:
            coins += 1
        if ticked:
            gaps_out[k] = t - last
            coins_out[k] = coins
            last = t
            coins = np.int64(0)
            k += 1
        host = nbr_flat[nbr_off[host] + i]
    return t, ctr


# ---------------------------------------------------------------------------
# cancellation-doubling protocol (packed token words)


@numba.njit(cache=True, nogil=True, inline="always")
def _lam_scaled(om, th, lmax):
    # signed token weight scaled by 2**lmax so it stays integral
    if om == OM_A:
        return np.int64(1) << (lmax - th // 2)
    if om == OM_B:
        return -(np.int64(1) << (lmax - th // 2))
    if om == OM_SA:
        return np.int64(1) << (lmax - (th + 1) // 2)
    if om == OM_SB:
        return -(np.int64(1) << (lmax - (th + 1) // 2))
    return np.int64(0)


@numba.njit(cache=True, nogil=True, inline="always")
def _token_out(fl, bk):
    # abort wins over victory flags; otherwise flags decide, else the backup
    if fl & FL_ABORT:
        return bk & 1
    if fl & FL_AWINS:
        return np.int64(0)
    if fl & FL_BWINS:
        return np.int64(1)
    return bk & 1


MASK_NOT_ID = ~MASK_ID
# phase + flags + backup: the fields that must agree for the no-op shortcuts
MASK_SYNC = (3 << SH_PHI) | (7 << SH_FL) | (3 << SH_BK)
MASK_COLPOS = (0xFF << SH_COL) | (0xFF << SH_POS)


@numba.njit(cache=True, nogil=True, inline="always")
def _poison_noop(om, fl):
    # True when the opposite-victory poisoning rule cannot change this token
    if (fl & FL_ABORT) != 0 or fl == 0:
        return True
    if om == OM_A or om == OM_SA:
        return (fl & FL_BWINS) == 0
    if om == OM_B or om == OM_SB:
        return (fl & FL_AWINS) == 0
    return True


@numba.njit(cache=True, nogil=True, inline="always")
def maj_tokens_nb(wu, wv, H, K, theta_max, with_flags, fs_i, fs_r):
    """One interaction of the cancellation-doubling protocol.

    wu is the initiator's token, wv the responder's. Returns the two updated
    token words (not yet swapped; the caller exchanges their positions).
    Order per interaction: clock substep, phase update rules on the old
    phases, counter bump + promotion + victory/overflow flags on a phase
    change, flag union, poisoning, inconsistency detection, opinion rule on
    the new phases, backup protocol step."""
    om_u = wu & MASK_OM
    om_v = wv & MASK_OM

    # fast no-op paths for the two dominant cases; each is exact (no rule
    # below can fire under its guard)
    if om_u != OM_CLOCK and om_v != OM_CLOCK:
        if (wu ^ wv) & MASK_NOT_ID == 0 and _poison_noop(om_u, (wu >> SH_FL) & 7):
            # identical non-clock tokens: no phase motion, flag union and
            # backup are no-ops, and no opinion rule matches an equal pair
            return wu, wv
    elif (wu ^ wv) & MASK_SYNC == 0:
        flq = (wu >> SH_FL) & 7
        if _poison_noop(om_u, flq) and _poison_noop(om_v, flq):
            # shared phase/flags/backup and at least one clock token: only
            # the embedded automata can move, unless an active one ticks
            tu = wu
            tv = wv
            blocked = False
            if om_u == OM_CLOCK:
                c, p, ticked, _cd = clock_step_nb((wu >> SH_COL) & 0xFF, (wu >> SH_POS) & 0xFF, np.int64(1), H, K)
                if ticked and ((wu >> SH_ACT) & 1) == 1:
                    blocked = True
                else:
                    tu = (wu & ~MASK_COLPOS) | (c << SH_COL) | (p << SH_POS)
            if om_v == OM_CLOCK and not blocked:
                c, p, ticked, _cd = clock_step_nb((wv >> SH_COL) & 0xFF, (wv >> SH_POS) & 0xFF, np.int64(0), H, K)
                if ticked and ((wv >> SH_ACT) & 1) == 1:
                    blocked = True
                else:
                    tv = (wv & ~MASK_COLPOS) | (c << SH_COL) | (p << SH_POS)
            if not blocked:
                return tu, tv
    phi_u = (wu >> SH_PHI) & 3
    phi_v = (wv >> SH_PHI) & 3
    th_u = (wu >> SH_TH) & 0x7F
    th_v = (wv >> SH_TH) & 0x7F
    col_u = (wu >> SH_COL) & 0xFF
    col_v = (wv >> SH_COL) & 0xFF
    pos_u = (wu >> SH_POS) & 0xFF
    pos_v = (wv >> SH_POS) & 0xFF
    act_u = (wu >> SH_ACT) & 1
    act_v = (wv >> SH_ACT) & 1
    fl_u = (wu >> SH_FL) & 7
    fl_v = (wv >> SH_FL) & 7
    bk_u = (wu >> SH_BK) & 3
    bk_v = (wv >> SH_BK) & 3

    # clock substep: initiator consumes bit 1, responder bit 0
    tick_u = False
    tick_v = False
    if om_u == OM_CLOCK:
        col_u, pos_u, ticked, _cd = clock_step_nb(col_u, pos_u, np.int64(1), H, K)
        tick_u = ticked and act_u == 1
    if om_v == OM_CLOCK:
        col_v, pos_v, ticked, _cd = clock_step_nb(col_v, pos_v, np.int64(0), H, K)
        tick_v = ticked and act_v == 1

    # phase updates, both evaluated on the pre-interaction phases
    p_u0 = phi_u
    p_v0 = phi_v
    if tick_u:
        phi_u = (p_u0 + 1) & 3
    if p_v0 == (p_u0 + 1) & 3:
        phi_u = p_v0
        if om_u == OM_CLOCK and act_u == 1:
            act_u = np.int64(0)
    if tick_v:
        phi_v = (p_v0 + 1) & 3
    if p_u0 == (p_v0 + 1) & 3:
        phi_v = p_u0
        if om_v == OM_CLOCK and act_v == 1:
            act_v = np.int64(0)

    # counter bump on a phase change; promotion and entry flags at the
    # odd-to-even crossing; overflow flag when the counter tops out
    if om_u != OM_CLOCK and phi_u != p_u0:
        reached = False
        if th_u < theta_max:
            th_u += 1
            reached = th_u == theta_max
        if (p_u0 & 1) == 1:
            if om_u == OM_SA:
                om_u = OM_A
            elif om_u == OM_SB:
                om_u = OM_B
            elif with_flags and om_u == OM_A:
                fl_u |= FL_AWINS
            elif with_flags and om_u == OM_B:
                fl_u |= FL_BWINS
        if with_flags and reached and (fl_u & (FL_AWINS | FL_BWINS)) == 0:
            fl_u |= FL_ABORT
    if om_v != OM_CLOCK and phi_v != p_v0:
        reached = False
        if th_v < theta_max:
            th_v += 1
            reached = th_v == theta_max
        if (p_v0 & 1) == 1:
            if om_v == OM_SA:
                om_v = OM_A
            elif om_v == OM_SB:
                om_v = OM_B
            elif with_flags and om_v == OM_A:
                fl_v |= FL_AWINS
            elif with_flags and om_v == OM_B:
                fl_v |= FL_BWINS
        if with_flags and reached and (fl_v & (FL_AWINS | FL_BWINS)) == 0:
            fl_v |= FL_ABORT

    if with_flags:
        merged = fl_u | fl_v
        fl_u = merged
        fl_v = merged
        # a strong/weak opinion meeting the opposite victory flag poisons it
        if (om_u == OM_A or om_u == OM_SA) and (fl_u & FL_BWINS) != 0:
            fl_u |= FL_ABORT
        elif (om_u == OM_B or om_u == OM_SB) and (fl_u & FL_AWINS) != 0:
            fl_u |= FL_ABORT
        if (om_v == OM_A or om_v == OM_SA) and (fl_v & FL_BWINS) != 0:
            fl_v |= FL_ABORT
        elif (om_v == OM_B or om_v == OM_SB) and (fl_v & FL_AWINS) != 0:
            fl_v |= FL_ABORT
        # inconsistent pair: opposite phases, or counters two apart
        bad = ((phi_u - phi_v) & 3) == 2
        if om_u != OM_CLOCK and om_v != OM_CLOCK:
            dt = th_u - th_v
            if dt < 0:
                dt = -dt
            if dt > 1:
                bad = True
        if bad:
            if (fl_u & (FL_AWINS | FL_BWINS)) == 0:
                fl_u |= FL_ABORT
            if (fl_v & (FL_AWINS | FL_BWINS)) == 0:
                fl_v |= FL_ABORT

    # opinion rule on the updated phases
    if om_u != OM_CLOCK and om_v != OM_CLOCK:
        if th_u == 0 and th_v == 0:
            # fresh strong pair: initiator becomes an active clock token
            if (om_u == OM_A and om_v == OM_B) or (om_u == OM_B and om_v == OM_A):
                om_u = OM_CLOCK
                col_u = np.int64(0)
                pos_u = np.int64(0)
                act_u = np.int64(1)
                om_v = OM_C
        elif phi_u == phi_v:
            if (phi_u & 1) == 0:
                if (om_u == OM_A and om_v == OM_B) or (om_u == OM_B and om_v == OM_A):
                    om_u = OM_C
                    om_v = OM_C
            else:
                if om_u == OM_A and om_v == OM_C:
                    om_u = OM_SA
                    om_v = OM_SA
                elif om_u == OM_C and om_v == OM_A:
                    om_u = OM_SA
                    om_v = OM_SA
                elif om_u == OM_B and om_v == OM_C:
                    om_u = OM_SB
                    om_v = OM_SB
                elif om_u == OM_C and om_v == OM_B:
                    om_u = OM_SB
                    om_v = OM_SB

    if with_flags:
        idx = (bk_u << 2) | bk_v
        nbk_u = fs_i[idx]
        nbk_v = fs_r[idx]
        bk_u = nbk_u
        bk_v = nbk_v

    tu = (
        om_u
        | (phi_u << SH_PHI)
        | (th_u << SH_TH)
        | (col_u << SH_COL)
        | (pos_u << SH_POS)
        | (act_u << SH_ACT)
        | (fl_u << SH_FL)
        | (bk_u << SH_BK)
        | (wu & MASK_ID)
    )
    tv = (
        om_v
        | (phi_v << SH_PHI)
        | (th_v << SH_TH)
        | (col_v << SH_COL)
        | (pos_v << SH_POS)
        | (act_v << SH_ACT)
        | (fl_v << SH_FL)
        | (bk_v << SH_BK)
        | (wv & MASK_ID)
    )
    return tu, tv


@numba.njit(cache=True, nogil=True, inline="always")
def _acct(old, new, cnt, lmax):
    """Move one token's contribution in the count vector from old to new.
    Returns (event_bits, pot_delta): bit 0 phase changed, bit 1 flags
    changed, bit 2 omega/backup/flags changed (certified-relevant)."""
    bits = np.int64(0)
    pot = np.int64(0)
    om0 = old & MASK_OM
    om1 = new & MASK_OM
    if om0 != om1:
        cnt[CNT_OM0 + om0] -= 1
        cnt[CNT_OM0 + om1] += 1
        bits |= 4
    p0 = (old >> SH_PHI) & 3
    p1 = (new >> SH_PHI) & 3
    if p0 != p1:
        cnt[CNT_PHI0 + p0] -= 1
        cnt[CNT_PHI0 + p1] += 1
        bits |= 1
    f0 = (old >> SH_FL) & 7
    f1 = (new >> SH_FL) & 7
    if f0 != f1:
        cnt[CNT_ABORT] += (f1 & 1) - (f0 & 1)
        cnt[CNT_AWINS] += ((f1 >> 1) & 1) - ((f0 >> 1) & 1)
        cnt[CNT_BWINS] += ((f1 >> 2) & 1) - ((f0 >> 2) & 1)
        bits |= 2 | 4
    b0 = (old >> SH_BK) & 3
    b1 = (new >> SH_BK) & 3
    if b0 != b1:
        cnt[CNT_BOP1] += (b1 & 1) - (b0 & 1)
        bits |= 4
    if f0 != f1 or b0 != b1:
        o0 = _token_out(f0, b0)
        o1 = _token_out(f1, b1)
        if o0 != o1:
            cnt[CNT_OUT1] += o1 - o0
            bits |= 8
    if (old ^ new) & MASK_POT != 0:
        th0 = (old >> SH_TH) & 0x7F
        th1 = (new >> SH_TH) & 0x7F
        pot = _lam_scaled(om1, th1, lmax) - _lam_scaled(om0, th0, lmax)
    return bits, pot


@numba.njit(cache=True, nogil=True)
def majority_init_counts(words, cnt, lmax):
    pot = np.int64(0)
    for i in range(words.shape[0]):
        w = words[i]
        cnt[CNT_OM0 + (w & MASK_OM)] += 1
        cnt[CNT_PHI0 + ((w >> SH_PHI) & 3)] += 1
        fl = (w >> SH_FL) & 7
        cnt[CNT_ABORT] += fl & 1
        cnt[CNT_AWINS] += (fl >> 1) & 1
        cnt[CNT_BWINS] += (fl >> 2) & 1
        bk = (w >> SH_BK) & 3
        cnt[CNT_BOP1] += bk & 1
        cnt[CNT_OUT1] += _token_out(fl, bk)
        pot += _lam_scaled(w & MASK_OM, (w >> SH_TH) & 0x7F, lmax)
    return pot


@numba.njit(cache=True, nogil=True, inline="always")
def _certified_case(cnt, n):
    # 1: clean win for A, 2: clean win for B, 3: all aborted with backup
    # agreement; 0: not certified
    if cnt[CNT_ABORT] == 0 and cnt[CNT_BWINS] == 0 and cnt[CNT_AWINS] == n:
        if cnt[CNT_OM0 + OM_B] + cnt[CNT_OM0 + OM_SB] == 0:
            return 1
    if cnt[CNT_ABORT] == 0 and cnt[CNT_AWINS] == 0 and cnt[CNT_BWINS] == n:
        if cnt[CNT_OM0 + OM_A] + cnt[CNT_OM0 + OM_SA] == 0:
            return 2
    if cnt[CNT_ABORT] == n and (cnt[CNT_BOP1] == 0 or cnt[CNT_BOP1] == n):
        return 3
    return 0


@numba.njit(cache=True, nogil=True)
def majority_run(
    eu,
    ev,
    words,
    H,
    K,
    theta_max,
    with_flags,
    lmax,
    horizon,
    key,
    ctr0,
    sync_target,
    stop_on_certified,
    fs_i,
    fs_r,
    ev_step,
    ev_tok,
    ev_old,
    ev_new,
    sync_step,
    sync_phase,
    sync_counts,
):
    """Drive the full protocol; returns a packed result vector.

    Stops on: certified stabilization (reason 0), horizon (reason 1), phase
    event buffer full (reason 2), sync_target synchronization records
    (reason 3). Sync record j holds the step, the common phase, and the
    count vector at that step; record 0 is the initial configuration.
    """
    n = words.shape[0]
    m = eu.shape[0]
    umask = _pow2mask(m)
    key = U64(key)
    ctr = U64(ctr0)

    cnt = np.zeros(CNT_LEN, dtype=np.int64)
    pot = majority_init_counts(words, cnt, lmax)
    pot0 = pot

    ev_cap = ev_step.shape[0]
    n_ev = np.int64(0)
    sync_cap = sync_step.shape[0]
    n_sync = np.int64(0)
    p0_all = (words[0] >> SH_PHI) & 3
    if sync_cap > 0 and cnt[CNT_PHI0 + p0_all] == n:
        sync_step[0] = 0
        sync_phase[0] = p0_all
        for j in range(CNT_LEN):
            sync_counts[0, j] = cnt[j]
        n_sync = 1

    first_flag = np.int64(-1)
    first_abort = np.int64(-1)
    first_awins = np.int64(-1)
    first_bwins = np.int64(-1)
    pot_break = np.int64(-1)
    max_clock = cnt[CNT_OM0 + OM_CLOCK]
    a_ext = np.int64(-1)
    b_ext = np.int64(-1)
    if cnt[CNT_OM0 + OM_A] + cnt[CNT_OM0 + OM_SA] == 0:
        a_ext = 0
    if cnt[CNT_OM0 + OM_B] + cnt[CNT_OM0 + OM_SB] == 0:
        b_ext = 0
    last_outchg = np.int64(0)
    cert = _certified_case(cnt, n)
    cert_step = np.int64(-1)
    if cert != 0:
        cert_step = 0

    stop_step = horizon
    reason = 1
    if n_sync >= sync_target and sync_target > 0:
        stop_step = np.int64(0)
        reason = 3
    elif cert != 0 and stop_on_certified:
        stop_step = np.int64(0)
        reason = 0
    else:
        for t in range(np.int64(1), horizon + np.int64(1)):
            a, b, ctr = _draw_pair(key, ctr, eu, ev, m, umask)
            wu = words[a]
            wv = words[b]
            tu, tv = maj_tokens_nb(wu, wv, H, K, theta_max, with_flags, fs_i, fs_r)
            words[a] = tv
            words[b] = tu
            # automaton col/pos moves are invisible to every observable
            if ((wu ^ tu) | (wv ^ tv)) & ~(MASK_COLPOS | MASK_ID) == 0:
                continue
            bits_u, dp_u = _acct(wu, tu, cnt, lmax)
            bits_v, dp_v = _acct(wv, tv, cnt, lmax)
            pot += dp_u + dp_v
            bits = bits_u | bits_v
            if (bits & 1) != 0:
                # phase event log: one row per token whose phase moved
                if ev_cap > 0:
                    if bits_u & 1:
                        if n_ev >= ev_cap:
                            stop_step = t
                            reason = 2
                            break
                        ev_step[n_ev] = t
                        ev_tok[n_ev] = (wu >> SH_ID) & 0xFFFFF
                        ev_old[n_ev] = (wu >> SH_PHI) & 3
                        ev_new[n_ev] = (tu >> SH_PHI) & 3
                        n_ev += 1
                    if bits_v & 1:
                        if n_ev >= ev_cap:
                            stop_step = t
                            reason = 2
                            break
                        ev_step[n_ev] = t
                        ev_tok[n_ev] = (wv >> SH_ID) & 0xFFFFF
                        ev_old[n_ev] = (wv >> SH_PHI) & 3
                        ev_new[n_ev] = (tv >> SH_PHI) & 3
                        n_ev += 1
                # synchronization record when everyone shares the new phase
                pnew = (tu >> SH_PHI) & 3 if (bits_u & 1) else (tv >> SH_PHI) & 3
                if cnt[CNT_PHI0 + pnew] == n and n_sync < sync_cap:
                    sync_step[n_sync] = t
                    sync_phase[n_sync] = pnew
                    for j in range(CNT_LEN):
                        sync_counts[n_sync, j] = cnt[j]
                    n_sync += 1
                    if n_sync >= sync_target and sync_target > 0:
                        stop_step = t
                        reason = 3
                        break
            if (bits & 2) != 0:
                if first_flag < 0:
                    first_flag = t
                if first_abort < 0 and cnt[CNT_ABORT] > 0:
                    first_abort = t
                if first_awins < 0 and cnt[CNT_AWINS] > 0:
                    first_awins = t
                if first_bwins < 0 and cnt[CNT_BWINS] > 0:
                    first_bwins = t
            if pot != pot0 and pot_break < 0:
                pot_break = t
            if cnt[CNT_OM0 + OM_CLOCK] > max_clock:
                max_clock = cnt[CNT_OM0 + OM_CLOCK]
            if a_ext < 0 and cnt[CNT_OM0 + OM_A] + cnt[CNT_OM0 + OM_SA] == 0:
                a_ext = t
            if b_ext < 0 and cnt[CNT_OM0 + OM_B] + cnt[CNT_OM0 + OM_SB] == 0:
                b_ext = t
            if (bits & 8) != 0:
                last_outchg = t
            if (bits & (2 | 4)) != 0:
                c = _certified_case(cnt, n)
                if c != 0 and cert == 0:
                    cert = c
                    cert_step = t
                if cert != 0 and stop_on_certified:
                    stop_step = t
                    reason = 0
                    break

    out = np.empty(18, dtype=np.int64)
    out[0] = stop_step
    out[1] = reason
    out[2] = n_ev
    out[3] = n_sync
    out[4] = first_flag
    out[5] = first_abort
    out[6] = first_awins
    out[7] = first_bwins
    out[8] = pot0
    out[9] = pot
    out[10] = pot_break
    out[11] = max_clock
    out[12] = a_ext
    out[13] = b_ext
    out[14] = last_outchg
    out[15] = cnt[CNT_OUT1]
    out[16] = cert
    out[17] = cert_step
    return out, cnt, ctr
