"""Interaction-counting clock: parameter solver, automaton reachability,
tick statistics, and the phase-clock property checker.

Oracle for the tick rate: a column advances after a run of K winning coin
flips (probability 2^-K per coin), so a tick consumes H * 2^K coins in
expectation, each coin being K interactions. These identities are exact,
not asymptotic."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from popmaj.clock import (
    ClockTokenState,
    PhaseTrace,
    clock_params_for_graph,
    clock_token_step,
    derive_clock_params,
    detect_sync_steps,
    enumerate_clock_states,
    measure_tick_gaps,
    phase_clock_window,
    phase_update,
    solve_J,
    validate_phase_clock,
)
from popmaj.graphs import build_graph, complete_graph, cycle_graph
from popmaj.rng import RandomStream
from popmaj.spectral import spectral_summary
from popmaj import _kernels


def test_solve_J_at_one():
    # J 2^J = 1 has the fixed root 0.6411857445049859
    assert solve_J(1.0) == pytest.approx(0.6411857445049859, abs=1e-9)


def test_solve_J_inverts_its_defining_equation():
    for x in (0.5, 1.0, 3.0, 32.0, 1e4, 7.3e5):
        J = solve_J(x)
        assert J * 2**J == pytest.approx(x, rel=1e-9)


@settings(max_examples=60, deadline=None)
@given(st.floats(min_value=1e-3, max_value=1e7, allow_nan=False))
def test_solve_J_property(x):
    J = solve_J(x)
    assert J * 2**J == pytest.approx(x, rel=1e-8)


def test_solve_J_example_giving_K4():
    # at q tau_slow / H = 32 the solver sits between 3 and 4, so K = 4
    J = solve_J(32.0)
    assert 3 < J < 4
    assert math.ceil(J) == 4


def test_H_at_n_1024():
    p = derive_clock_params(n=1024, m=2048, delta=4, Delta=4, tau_tick=10**6, kappa=2)
    assert p.H == 20  # ceil(2 log2 1024)


def test_derive_clock_params_basic_identities():
    p = derive_clock_params(n=64, m=96, delta=3, Delta=3, tau_tick=2 * 10**6)
    assert p.q == pytest.approx(2 / 64)
    assert p.q0 == pytest.approx(3 / 96)
    assert p.q1 == pytest.approx(3 / 96)
    assert p.theta == pytest.approx(p.q1 / p.q)
    assert p.coins_per_tick == p.H * 2**p.K
    assert p.interactions_per_tick == p.H * p.K * 2**p.K
    assert p.states_per_token == p.H * (2 * p.K - 1)
    assert p.eta > 1
    # the slow-host tick target must be reachable: H K 2^K >= q tau_slow
    assert p.H * p.K * 2**p.K >= p.q * p.tau_tick_slow - 1e-9


def test_derive_clock_params_validation():
    with pytest.raises(ValueError):
        derive_clock_params(n=1, m=1, delta=1, Delta=1, tau_tick=100)
    with pytest.raises(ValueError):
        derive_clock_params(n=16, m=15, delta=8, Delta=4, tau_tick=100)  # delta > Delta
    with pytest.raises(ValueError):
        derive_clock_params(n=16, m=15, delta=1, Delta=4, tau_tick=0)


def test_clock_kernel_matches_python_automaton():
    stream = RandomStream(31337)
    for H, K in ((1, 1), (2, 1), (3, 2), (5, 4), (12, 11)):
        col, pos = 0, 0
        state = ClockTokenState(0, 0)
        for _ in range(4000):
            bit = stream.bit()
            col2, pos2, ticked, coin_done = _kernels.clock_step_nb(col, pos, bit, H, K)
            state, ticked_py, coin_py = clock_token_step(state, bit, H, K)
            assert (col2, pos2) == (state.col, state.pos)
            assert bool(ticked) == ticked_py
            assert bool(coin_done) == coin_py
            col, pos = col2, pos2


def test_enumerate_clock_states_count():
    for H, K in ((1, 1), (2, 3), (3, 2), (4, 4), (8, 8), (12, 11)):
        states = enumerate_clock_states(H, K)
        assert len(states) == H * (2 * K - 1), (H, K)


def test_mean_coins_per_tick_small_automaton():
    # H=3, K=2: expected 3 * 4 = 12 coins per tick
    stream = RandomStream(5)
    state = ClockTokenState(0, 0)
    coins = ticks = 0
    while ticks < 3000:
        state, ticked, coin_done = clock_token_step(state, stream.bit(), 3, 2)
        coins += int(coin_done)
        ticks += int(ticked)
    assert coins / ticks == pytest.approx(12.0, rel=0.05)


def test_measure_tick_gaps_cycle16():
    # C_16, H=3, K=2: 24 interactions per tick, token hit every 8 steps on
    # average, so the mean gap is 192 steps
    g = cycle_graph(16)
    r = measure_tick_gaps(g, H=3, K=2, n_ticks=3000, seed=0)
    assert r.gaps.shape == (3000,)
    assert float(r.gaps.mean()) == pytest.approx(192.0, rel=0.05)
    assert float(r.coins.mean()) == pytest.approx(12.0, rel=0.05)
    assert r.expected_coins_per_tick == 12


def test_measure_tick_gaps_deterministic():
    g = complete_graph(8)
    a = measure_tick_gaps(g, H=2, K=2, n_ticks=50, seed=9)
    b = measure_tick_gaps(g, H=2, K=2, n_ticks=50, seed=9)
    assert np.array_equal(a.gaps, b.gaps)
    assert np.array_equal(a.coins, b.coins)


def test_phase_update_rules():
    for p in range(4):
        assert phase_update(p, p, True) == ((p + 1) % 4, False)  # own tick
        assert phase_update(p, (p + 1) % 4, False) == ((p + 1) % 4, True)  # adopt
        assert phase_update(p, (p + 2) % 4, False) == (p, False)  # too far: ignore
        assert phase_update(p, (p + 3) % 4, False) == (p, False)  # behind: ignore
        assert phase_update(p, p, False) == (p, False)
        # tick and adoption can fire together and agree
        assert phase_update(p, (p + 1) % 4, True) == ((p + 1) % 4, True)


def test_phase_clock_window_floor():
    g = build_graph("random_regular", 16, seed=1, d=3)
    tau = spectral_summary(g).tau_rel
    R = phase_clock_window(tau, 16, kappa=2)
    assert R >= 80 * 4 * tau * math.log(16) - 1e-9


def test_clock_params_for_graph():
    g = complete_graph(16)
    params, R = clock_params_for_graph(g)
    assert params.tau_tick == pytest.approx(2 * R)
    tau = spectral_summary(g).tau_rel
    assert R >= 80 * 4 * tau * math.log(16) - 1e-9
    assert params.eta >= 1


def _trace(n, steps, tokens, old, new, init=None):
    return PhaseTrace(
        n=n,
        initial_phases=np.zeros(n, dtype=np.int64) if init is None else np.asarray(init),
        steps=np.asarray(steps, dtype=np.int64),
        tokens=np.asarray(tokens, dtype=np.int64),
        old=np.asarray(old, dtype=np.int64),
        new=np.asarray(new, dtype=np.int64),
    )


def test_detect_sync_steps_handmade():
    # two tokens: token 0 ticks at step 5, token 1 adopts at step 9
    tr = _trace(2, [5, 9], [0, 1], [0, 0], [1, 1])
    steps, phases = detect_sync_steps(tr)
    # start is synchronized at phase 0, then again at step 9 in phase 1
    assert steps.tolist() == [0, 9]
    assert phases.tolist() == [0, 1]


def test_validate_phase_clock_good_trace():
    # gaps of 100 with R=50, eta=2: inside [50, 200], events right at the
    # sync step, two phases never overlap between syncs
    steps, tokens, old, new = [], [], [], []
    t = 0
    for k in range(6):
        t += 100
        steps += [t, t]
        tokens += [0, 1]
        old += [k % 4, k % 4]
        new += [(k + 1) % 4, (k + 1) % 4]
    rep = validate_phase_clock(_trace(2, steps, tokens, old, new), R=50.0, eta=2.0)
    assert rep.monotone_ok and rep.gaps_ok and rep.freeze_ok and rep.two_phase_ok
    assert rep.ok
    assert len(rep.gaps) == 6


def test_validate_phase_clock_catches_short_gap():
    steps = [100, 100, 120, 120]
    tokens = [0, 1, 0, 1]
    old = [0, 0, 1, 1]
    new = [1, 1, 2, 2]
    rep = validate_phase_clock(_trace(2, steps, tokens, old, new), R=50.0, eta=2.0)
    assert not rep.gaps_ok
    assert rep.gap_violations


def test_validate_phase_clock_catches_freeze_violation():
    # second token moves 10 steps after a sync with R=50: inside the frozen
    # window
    steps = [100, 100, 110, 200]
    tokens = [0, 1, 0, 1]
    old = [0, 0, 1, 1]
    new = [1, 1, 2, 2]
    rep = validate_phase_clock(_trace(2, steps, tokens, old, new), R=50.0, eta=3.0)
    assert not rep.freeze_ok
    assert rep.freeze_violations


def test_validate_phase_clock_catches_three_phases():
    # three tokens: one sprints two phases ahead while another lags
    steps = [100, 110, 150, 150, 150]
    tokens = [0, 0, 1, 2, 0]
    old = [0, 1, 0, 0, 2]
    new = [1, 2, 1, 1, 3]
    rep = validate_phase_clock(_trace(3, steps, tokens, old, new), R=5.0, eta=100.0)
    assert not rep.two_phase_ok


def test_validate_phase_clock_catches_backward_step():
    steps = [100]
    tokens = [0]
    old = [1]
    new = [0]
    rep = validate_phase_clock(_trace(1, steps, tokens, old, new, init=[1]), R=5.0, eta=10.0)
    assert not rep.monotone_ok
