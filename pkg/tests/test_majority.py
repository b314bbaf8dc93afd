"""Synchronized cancellation-doubling protocol: packing, single-interaction
rules, potential accounting, certification, and small end-to-end runs.

The compiled interaction is fuzzed against interact_reference, a separate
pure-Python implementation of the same rules; unit cases below pin the
individual rules so a fuzz that compares two identically wrong
implementations cannot hide a rule bug."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from popmaj.graphs import build_graph, complete_graph
from popmaj.majority import (
    MajorityToken,
    OMEGA_LABELS,
    SyncRecord,
    certified_stabilized,
    doubling_checks,
    init_words,
    interact,
    interact_reference,
    majority_params_for_graph,
    pack_token,
    phase_study_words,
    potential_scale_exp,
    run_majority,
    theta_cap,
    token_output,
    token_potential_scaled,
    total_potential,
    unpack_token,
)
from popmaj.rng import RandomStream


def tok(omega="A", phase=0, theta=0, col=0, pos=0, active=False, abort=False, a_wins=False, b_wins=False, backup=0, tid=0):
    return pack_token(
        MajorityToken(
            omega=omega,
            phase=phase,
            theta=theta,
            col=col,
            pos=pos,
            active=active,
            abort=abort,
            a_wins=a_wins,
            b_wins=b_wins,
            backup=backup,
            token_id=tid,
        )
    )


_PARAMS_CACHE = {}


def params_for(n=16, with_flags=True):
    key = (n, with_flags)
    if key not in _PARAMS_CACHE:
        _PARAMS_CACHE[key] = majority_params_for_graph(complete_graph(n), with_flags=with_flags)
    return _PARAMS_CACHE[key]


def test_theta_cap_and_scale():
    assert theta_cap(64) == 12
    assert theta_cap(16) == 8
    assert potential_scale_exp(64) == 6
    assert potential_scale_exp(16) == 4


@settings(max_examples=200, deadline=None)
@given(
    st.sampled_from(OMEGA_LABELS),
    st.integers(0, 3),
    st.integers(0, 127),
    st.integers(0, 255),
    st.integers(0, 255),
    st.booleans(),
    st.booleans(),
    st.booleans(),
    st.booleans(),
    st.integers(0, 3),
    st.integers(0, 2**20 - 1),
)
def test_pack_unpack_roundtrip(omega, phase, theta, col, pos, active, abort, a_wins, b_wins, backup, tid):
    t = MajorityToken(omega, phase, theta, col, pos, active, abort, a_wins, b_wins, backup, tid)
    assert unpack_token(pack_token(t)) == t


def test_init_words():
    bits = np.array([0, 1, 1, 0], dtype=np.int64)
    words = init_words(bits)
    toks = [unpack_token(int(w)) for w in words]
    assert [t.omega for t in toks] == ["A", "B", "B", "A"]
    assert all(t.phase == 0 and t.theta == 0 for t in toks)
    assert not any(t.abort or t.a_wins or t.b_wins for t in toks)
    assert [t.backup for t in toks] == [0, 1, 1, 0]  # S0 / S1 per input bit
    assert sorted(t.token_id for t in toks) == [0, 1, 2, 3]


def test_token_output():
    assert token_output(tok("A")) == 0
    assert token_output(tok("B", backup=1)) == 1
    # victory flags override the default
    assert token_output(tok("B", a_wins=True, backup=1)) == 0
    assert token_output(tok("A", b_wins=True)) == 1
    # abort defers to the 4-state backup output bit
    assert token_output(tok("A", abort=True, backup=3)) == 1
    assert token_output(tok("B", abort=True, backup=2)) == 0
    assert token_output(tok("clock", backup=0)) == 0


def test_potential_values():
    lmax = 4  # n = 16
    assert token_potential_scaled(tok("A", theta=0), lmax) == 16
    assert token_potential_scaled(tok("B", theta=0), lmax) == -16
    assert token_potential_scaled(tok("A", theta=2), lmax) == 8
    assert token_potential_scaled(tok("a", theta=1), lmax) == 8
    assert token_potential_scaled(tok("a", theta=3), lmax) == 4
    assert token_potential_scaled(tok("b", theta=3), lmax) == -4
    assert token_potential_scaled(tok("C", theta=5), lmax) == 0
    assert token_potential_scaled(tok("clock"), lmax) == 0


def test_total_potential_equals_scaled_bias_at_start():
    bits = np.array([0, 0, 0, 1, 1, 0], dtype=np.int64)
    words = init_words(bits)
    lmax = potential_scale_exp(6)
    assert total_potential(words, lmax) == (4 - 2) * 2**lmax


def test_rule_initialization():
    # two theta=0 strong tokens seed a clock: initiator becomes an active
    # clock at column 0, responder becomes C; potential sum stays 0
    p = params_for()
    u, v = interact(tok("A", tid=3), tok("B", tid=9, backup=1), p)
    tu, tv = unpack_token(u), unpack_token(v)
    assert tu.omega == "clock" and tu.active and tu.col == 0 and tu.pos == 0
    assert tv.omega == "C"
    assert tu.token_id == 3 and tv.token_id == 9
    assert token_potential_scaled(u, 4) + token_potential_scaled(v, 4) == 0


def test_rule_initialization_symmetric():
    p = params_for()
    u, v = interact(tok("B", backup=1), tok("A"), p)
    assert unpack_token(u).omega == "clock"
    assert unpack_token(v).omega == "C"


def test_rule_cancellation_even_phase():
    p = params_for()
    u, v = interact(tok("A", phase=2, theta=2), tok("B", phase=2, theta=2, backup=1), p)
    assert unpack_token(u).omega == "C"
    assert unpack_token(v).omega == "C"


def test_no_cancellation_on_odd_phase():
    p = params_for()
    u, v = interact(tok("A", phase=1, theta=1), tok("B", phase=1, theta=1, backup=1), p)
    assert unpack_token(u).omega == "A"
    assert unpack_token(v).omega == "B"


def test_wrapped_phase_zero_cancels_when_theta_positive():
    # absolute phase 4 shows as phase=0; cancellation must apply since the
    # initialization rule is reserved for theta = 0 pairs
    p = params_for()
    u, v = interact(tok("A", phase=0, theta=4), tok("B", phase=0, theta=4, backup=1), p)
    assert unpack_token(u).omega == "C"
    assert unpack_token(v).omega == "C"


def test_rule_doubling():
    p = params_for()
    u, v = interact(tok("A", phase=1, theta=1), tok("C", phase=1, theta=1), p)
    assert unpack_token(u).omega == "a"
    assert unpack_token(v).omega == "a"
    u, v = interact(tok("C", phase=3, theta=3), tok("B", phase=3, theta=3, backup=1), p)
    assert unpack_token(u).omega == "b"
    assert unpack_token(v).omega == "b"


def test_doubling_conserves_potential():
    p = params_for()
    u0, v0 = tok("A", phase=1, theta=1), tok("C", phase=1, theta=1)
    before = token_potential_scaled(u0, 4) + token_potential_scaled(v0, 4)
    u, v = interact(u0, v0, p)
    after = token_potential_scaled(u, 4) + token_potential_scaled(v, 4)
    assert before == after == 16


def test_no_doubling_across_phases():
    p = params_for()
    u, v = interact(tok("A", phase=1, theta=1), tok("C", phase=2, theta=2), p)
    assert unpack_token(u).omega == "A"
    assert unpack_token(v).omega == "C"


def _random_token(stream, p):
    omega = OMEGA_LABELS[stream.randrange(6)]
    is_clock = omega == "clock"
    return tok(
        omega,
        phase=stream.randrange(4),
        theta=stream.randrange(p.theta_max + 1),
        col=stream.randrange(p.H) if is_clock else 0,
        pos=stream.randrange(2 * p.K - 1) if is_clock else 0,
        active=bool(stream.bit()) if is_clock else False,
        abort=bool(stream.bit() and stream.bit()),
        a_wins=bool(stream.bit() and stream.bit()),
        b_wins=bool(stream.bit() and stream.bit()),
        backup=stream.randrange(4),
        tid=stream.randrange(1 << 20),
    )


def test_fuzz_kernel_vs_reference():
    p_on = params_for(64, with_flags=True)
    p_off = params_for(64, with_flags=False)
    stream = RandomStream(0xF00D)
    for trial in range(20000):
        p = p_on if trial % 2 == 0 else p_off
        wu = _random_token(stream, p)
        wv = _random_token(stream, p)
        got = interact(wu, wv, p)
        ru, rv = interact_reference(unpack_token(wu), unpack_token(wv), p)
        want = (pack_token(ru), pack_token(rv))
        assert got == want, (trial, unpack_token(wu), unpack_token(wv))


def test_certified_cases():
    # case 1: a-wins everywhere, nobody aborted, no B side left
    words = np.array([tok("A", a_wins=True), tok("C", a_wins=True), tok("clock", a_wins=True)], dtype=np.int64)
    assert certified_stabilized(words) == 1
    # case 2: symmetric
    words = np.array([tok("B", b_wins=True, backup=1), tok("C", b_wins=True, backup=1)], dtype=np.int64)
    assert certified_stabilized(words) == 2
    # case 3: everyone aborted and the backup outputs agree (S0 and W0)
    words = np.array([tok("C", abort=True, backup=0), tok("C", abort=True, backup=2)], dtype=np.int64)
    assert certified_stabilized(words) == 3
    # not certified: mixed backup outputs under abort
    words = np.array([tok("C", abort=True, backup=0), tok("C", abort=True, backup=1)], dtype=np.int64)
    assert certified_stabilized(words) == 0
    # not certified: a-wins everywhere but a B token survives
    words = np.array([tok("A", a_wins=True), tok("B", a_wins=True, backup=1)], dtype=np.int64)
    assert certified_stabilized(words) == 0


def test_phase_study_words():
    words = phase_study_words(8, 2)
    toks = [unpack_token(int(w)) for w in words]
    assert sum(t.omega == "clock" for t in toks) == 2
    assert all(t.active for t in toks if t.omega == "clock")
    assert all(t.omega == "C" for t in toks if t.omega != "clock")
    with pytest.raises(ValueError):
        phase_study_words(8, 5)  # above n/2


def test_run_majority_small_correct(warm_kernels):
    g = complete_graph(8)
    p = majority_params_for_graph(g)
    for seed in range(5):
        r = run_majority(g, p, horizon=5_000_000, gamma=0.25, seed=seed)
        assert not r.censored
        assert r.correct, (seed, r.certified_case, r.final_counts)
        assert r.max_clock_tokens <= 4
        # potential is exact until the first flag event
        if r.potential_break_step >= 0:
            assert r.first_flag_step >= 0
            assert r.potential_break_step >= r.first_flag_step


def test_run_majority_minority_one(warm_kernels):
    g = complete_graph(9)
    p = majority_params_for_graph(g)
    bits = np.array([1, 0, 0, 0, 0, 1, 1, 1, 1], dtype=np.int64)
    r = run_majority(g, p, bits=bits, horizon=10_000_000, seed=2)
    assert r.correct
    assert r.consensus_bit == 1


def test_run_majority_reproducible(warm_kernels):
    g = complete_graph(8)
    p = majority_params_for_graph(g)
    a = run_majority(g, p, horizon=10**6, gamma=0.5, seed=7)
    b = run_majority(g, p, horizon=10**6, gamma=0.5, seed=7)
    assert a.stop_step == b.stop_step
    assert np.array_equal(a.final_words, b.final_words)


def test_doubling_checks_crafted():
    def rec(step, phase, A, B, a=0, b=0, C=0):
        return SyncRecord(
            step=step,
            phase=phase,
            counts={"A": A, "B": B, "a": a, "b": b, "C": C, "clock": 0},
            n_abort=0,
            n_awins=0,
            n_bwins=0,
        )

    class R:
        first_flag_step = -1
        sync_records = [
            rec(100, 1, A=4, B=2),
            rec(200, 2, A=4, B=2),
            rec(300, 3, A=4, B=2),
            rec(400, 0, A=8, B=4),
            rec(500, 1, A=8, B=4),
            rec(600, 2, A=16, B=0),
        ]

    checks = doubling_checks(R())
    assert len(checks) == 2
    assert checks[0]["doubled"] and checks[0]["ok"]
    # second pair: bias jumps 4 -> 16 instead of doubling, but the minority
    # died on the way, which the clause allows
    assert not checks[1]["doubled"]
    assert checks[1]["minority_extinct"] and checks[1]["ok"]


def test_run_with_events_collects_trace(warm_kernels):
    g = build_graph("complete", 8)
    p = majority_params_for_graph(g)
    r = run_majority(g, p, horizon=10**6, gamma=0.5, seed=3, with_events=True)
    assert r.trace is not None
    assert r.n_phase_events == len(r.trace.steps)
    # every recorded move is a forward step by one
    assert np.all(r.trace.new == (r.trace.old + 1) % 4)
