"""Acceptance gate: sixteen pinned criteria, one test and one printed
verdict line each (see conftest.record_criterion).

The two heavy workloads are shared: 100 flag-free phase-study runs feed
criteria 7, 10, and 15; 300 full protocol trials feed criteria 8, 9, and 10.
Every run is seeded, so a pass is reproducible bit for bit.
"""

import math
import time

import numpy as np
import pytest
from conftest import record_criterion

from popmaj.clock import (
    clock_params_for_graph,
    enumerate_clock_states,
    measure_tick_gaps,
    validate_phase_clock,
)
from popmaj.dynamics import (
    annihilation_protocol,
    assign_inputs,
    measure_clearing_time,
    measure_extinction_time,
    run_domination_coupling,
    track_influence,
)
from popmaj.engine import StoppingRule, run_continuous, run_discrete
from popmaj.experiments import scaling_report, state_count_audit
from popmaj.graphs import bfs_distances, build_graph
from popmaj.majority import (
    doubling_checks,
    majority_params_for_graph,
    run_majority,
)
from popmaj.rng import RandomStream, derive_key
from popmaj.spectral import (
    rs_spectrum_check,
    spectral_sandwich_check,
    spectral_summary,
    verify_lambda_RS_bound,
)


def diameter(g) -> int:
    return max(int(bfs_distances(g, v).max()) for v in range(g.n))


# ---------------------------------------------------------------------------
# shared heavy workloads


@pytest.fixture(scope="session")
def alg1_runs(rr3_64, warm_kernels):
    """100 seeded flag-free runs on the 3-regular n=64 instance, stopped at
    the 21st synchronization so each covers the first 20 phases."""
    g = rr3_64
    params = majority_params_for_graph(g, with_flags=False)
    horizon = int(22 * 2.0 * params.eta * params.R)
    runs = []
    for seed in range(100):
        res = run_majority(
            g,
            params,
            horizon=horizon,
            gamma=1.0 / 32.0,
            seed=seed,
            sync_target=21,
            stop_on_certified=False,
            with_events=True,
        )
        report = validate_phase_clock(res.trace, R=params.R, eta=params.eta)
        runs.append(
            {
                "seed": seed,
                "complete": res.stop_reason == "sync-target" and len(res.sync_records) == 21,
                "clock_ok": report.ok,
                "max_clock_tokens": res.max_clock_tokens,
                "first_flag_step": res.first_flag_step,
                "checks": doubling_checks(res),
            }
        )
    return runs


@pytest.fixture(scope="session")
def alg2_runs(warm_kernels):
    """300 seeded full-protocol trials (flags on, run to certification)
    spread over five graph families, n up to 128, bias down to 1/n."""
    mix = []
    for size, cnt in ((8, 30), (16, 30), (32, 25), (64, 20), (128, 15)):
        mix.append(("complete", size, cnt))
    for size, cnt in ((16, 40), (32, 30), (64, 20)):
        mix.append(("random_regular", size, cnt))
    for size, cnt in ((8, 20), (16, 20)):
        mix.append(("cycle", size, cnt))
    for size, cnt in ((8, 20), (16, 10)):
        mix.append(("star", size, cnt))
    for size, cnt in ((4, 10), (8, 10)):
        mix.append(("lollipop", size, cnt))
    assert sum(c for _, _, c in mix) == 300

    placements = ("random", "random", "segregated", "interleaved")
    runs = []
    t = 0
    for family, size, cnt in mix:
        g = build_graph(family, size, seed=0, d=3)
        params = majority_params_for_graph(g)
        horizon = int((params.theta_max + 6) * 2.0 * params.eta * params.R) + 1000
        gammas = (1.0 / g.n, 0.25, 0.5)
        for j in range(cnt):
            res = run_majority(
                g,
                params,
                horizon=horizon,
                gamma=gammas[j % 3],
                placement=placements[j % 4],
                majority_bit=j % 2,
                seed=50_000 + t,
            )
            runs.append(
                {
                    "family": family,
                    "n": g.n,
                    "correct": bool(res.correct) and not res.censored,
                    "censored": res.censored,
                    "potential_break_step": res.potential_break_step,
                    "first_flag_step": res.first_flag_step,
                    "max_clock_tokens": res.max_clock_tokens,
                }
            )
            t += 1
    return runs


# ---------------------------------------------------------------------------
# criteria


def test_criterion_01_bias_conservation(warm_kernels):
    proto = annihilation_protocol()
    sizes = (16, 24, 32, 48, 64, 96, 128)
    gammas = (0.25, 0.5, 0.125)
    t0 = time.monotonic()
    violations = 0
    for i in range(20):
        g = build_graph("random_regular", sizes[i % len(sizes)], seed=100 + i, d=(3, 4, 5)[i % 3])
        bits = assign_inputs(g, gammas[i % 3], seed=200 + i)
        res = run_discrete(
            proto,
            g,
            inputs=bits,
            stop=StoppingRule(horizon=100_000, conditions=(), watch_weights=(1, -1, 0)),
            seed=300 + i,
        )
        if res.watch_violation_step is not None:
            violations += 1
    dt = time.monotonic() - t0
    ok = violations == 0 and dt < 60.0
    record_criterion(1, ok, f"20 random graphs x 1e5 steps, {violations} bias drifts, {dt:.1f}s (< 60s)")
    assert ok


def test_criterion_02_four_state_correctness(warm_kernels):
    from popmaj.dynamics import four_state_protocol

    proto = four_state_protocol()
    mix = []
    for size in (8, 16, 32, 64, 128):
        mix.append(("complete", size, 24, True))
    for size in (8, 16, 33, 64, 128):
        mix.append(("star", size, 20, True))
    for size in (8, 16, 32, 64, 128):
        mix.append(("random_regular", size, 20, True))
    for size in (8, 16, 32):
        mix.append(("cycle", size, 24, True))
    for size in (64, 128):
        mix.append(("cycle", size, 14, False))  # tiny bias on big cycles is slow, not sharper
    for size in (4, 8):
        mix.append(("lollipop", size, 16, True))
    for size in (16, 32, 64):
        mix.append(("lollipop", size, 16, False))
    assert sum(c for _, _, c, _ in mix) == 500

    placements = ("random", "random", "segregated", "interleaved")
    t0 = time.monotonic()
    correct = total = 0
    for family, size, cnt, small_gamma in mix:
        g = build_graph(family, size, seed=0, d=3)
        gammas = (1.0 / g.n, 0.25, 0.5) if small_gamma else (0.25, 0.5)
        for j in range(cnt):
            maj_bit = j % 2
            bits = assign_inputs(
                g, gammas[j % len(gammas)], placement=placements[j % 4], seed=1000 + total, majority_bit=maj_bit
            )
            res = run_discrete(proto, g, inputs=bits, stop=StoppingRule(horizon=2_000_000_000), seed=7000 + total)
            out = res.outputs(proto)
            if not res.censored and (out == maj_bit).all():
                correct += 1
            total += 1
    dt = time.monotonic() - t0
    ok = correct == total == 500 and dt < 600.0
    record_criterion(2, ok, f"{correct}/{total} consensus correct, {dt:.1f}s (< 600s)")
    assert ok


def test_criterion_03_extinction_scaling(warm_kernels):
    t0 = time.monotonic()
    groups = {}
    for n in (16, 32, 64, 128):
        g = build_graph("cycle", n)
        tau = spectral_summary(g).tau_rel
        ts = [
            measure_extinction_time(g, horizon=2_000_000_000, gamma=0.25, placement="segregated", seed=s).t_ext
            for s in range(200)
        ]
        groups[n] = (ts, tau * math.log(n) / 0.25)
    rep = scaling_report(groups)
    dt = time.monotonic() - t0
    ok = rep.spread <= 4.0 and dt < 1200.0
    record_criterion(3, ok, f"median/bound spread {rep.spread:.2f}x across n (limit 4x), {dt:.1f}s (< 1200s)")
    assert ok


def test_criterion_04_clearing_gamma_independence(warm_kernels):
    g = build_graph("complete", 100)
    medians = {}
    for base, gamma in ((10_000, 1.0 / 50.0), (20_000, 0.5)):
        ts = [
            measure_clearing_time(g, horizon=100_000_000, eps=0.1, gamma=gamma, seed=base + s).t_clr
            for s in range(300)
        ]
        medians[gamma] = float(np.median(ts))
    ratio = max(medians.values()) / min(medians.values())
    ok = ratio <= 3.0
    record_criterion(4, ok, f"median clearing-time ratio between gammas {ratio:.2f} (limit 3)")
    assert ok


def test_criterion_05_domination_coupling(warm_kernels):
    graphs = (
        build_graph("complete", 8),
        build_graph("cycle", 10),
        build_graph("random_regular", 32, seed=0, d=3),
    )
    violations = 0
    for gi, g in enumerate(graphs):
        for i in range(100):
            stream = RandomStream(derive_key(9100 + gi, i))
            lo = [stream.randrange(3) - 1 for _ in range(g.n)]
            hi = [z + stream.randrange(2 - z) for z in lo]
            z_lo = np.array(lo, dtype=np.int8)
            z_hi = np.array(hi, dtype=np.int8)
            res = run_domination_coupling(g, z_hi, z_lo, steps=100_000, seed=stream)
            if not res.held:
                violations += 1
    ok = violations == 0
    record_criterion(5, ok, f"300 coupled runs x 1e5 steps, {violations} pointwise violations")
    assert ok


def test_criterion_06_tick_concentration(rr3_64, warm_kernels):
    g = rr3_64
    params, _R = clock_params_for_graph(g)
    res = measure_tick_gaps(g, H=params.H, K=params.K, n_ticks=1000, host0=0, seed=11)
    gaps = np.asarray(res.gaps, dtype=np.float64)
    coins = np.asarray(res.coins, dtype=np.float64)
    frac_out = float(((gaps < params.tau_tick) | (gaps >= params.eta * params.tau_tick)).mean())
    expected = float(params.H * 2**params.K)
    coin_err = abs(float(coins.mean()) - expected) / expected
    ok = frac_out <= 0.05 and coin_err <= 0.03
    record_criterion(
        6, ok, f"{frac_out:.1%} of 1000 gaps outside window (limit 5%), coin error {coin_err:.2%} (limit 3%)"
    )
    assert ok


def test_criterion_07_phase_clock_validity(alg1_runs):
    passing = sum(1 for r in alg1_runs if r["complete"] and r["clock_ok"])
    ok = passing >= 95
    record_criterion(7, ok, f"{passing}/100 runs satisfy all four clock properties over 20 phases (need >= 95)")
    assert ok


def test_criterion_08_full_protocol_correctness(alg2_runs):
    correct = sum(1 for r in alg2_runs if r["correct"])
    ok = correct == len(alg2_runs) == 300
    record_criterion(8, ok, f"{correct}/300 trials certified the true majority")
    assert ok


def test_criterion_09_potential_invariance(alg2_runs):
    bad = [
        r
        for r in alg2_runs
        if r["potential_break_step"] >= 0
        and (r["first_flag_step"] < 0 or r["potential_break_step"] < r["first_flag_step"])
    ]
    ok = not bad
    record_criterion(9, ok, f"{300 - len(bad)}/300 trials hold the potential exactly until the first flag")
    assert ok


def test_criterion_10_clock_token_cap(alg1_runs, alg2_runs):
    bad = sum(1 for r in alg1_runs if r["max_clock_tokens"] > 32)
    bad += sum(1 for r in alg2_runs if r["max_clock_tokens"] > r["n"] // 2)
    ok = bad == 0
    record_criterion(10, ok, f"{bad} of 400 runs ever exceeded n/2 clock tokens")
    assert ok


def test_criterion_11_spectral_sandwich():
    suite = (
        [("complete", s) for s in (4, 5, 6, 8, 16)]
        + [("cycle", s) for s in (4, 5, 6, 8, 16)]
        + [("path", s) for s in (3, 6)]
        + [("star", s) for s in (8, 12, 16)]
        + [("lollipop", s) for s in (4, 6, 8)]
        + [("grid", s) for s in (9, 16)]
    )
    assert len(suite) == 20
    t0 = time.monotonic()
    failures = []
    for family, size in suite:
        chk = spectral_sandwich_check(build_graph(family, size), tol=1e-9)
        if not chk["ok"]:
            failures.append((family, size))
    dt = time.monotonic() - t0
    ok = not failures and dt < 60.0
    record_criterion(11, ok, f"sandwich holds on {20 - len(failures)}/20 graphs, {dt:.1f}s (< 60s)")
    assert ok


def test_criterion_12_restricted_spectrum_bound():
    pool = (
        [("complete", s) for s in range(4, 17)]
        + [("cycle", s) for s in range(4, 17)]
        + [("path", s) for s in range(4, 17)]
        + [("star", s) for s in range(5, 17)]
        + [("grid", s) for s in (9, 16)]
        + [("lollipop", s) for s in (4, 5, 6, 7, 8)]
        + [("random_regular", s) for s in (8, 10, 12, 14, 16)]
    )
    stream = RandomStream(20251216)
    bound_fail = spec_fail = 0
    for i in range(200):
        family, size = pool[stream.randrange(len(pool))]
        g = build_graph(family, size, seed=i, d=3)
        k = 1 + stream.randrange(g.n - 1)
        S = [int(v) for v in stream.permutation(g.n)[:k]]
        if not verify_lambda_RS_bound(g, S, tol=1e-9)["ok"]:
            bound_fail += 1
        if not rs_spectrum_check(g, S)["multiset_ok"]:
            spec_fail += 1
    ok = bound_fail == 0 and spec_fail == 0
    record_criterion(
        12, ok, f"200 random (graph, S) pairs: {bound_fail} bound failures, {spec_fail} spectrum mismatches"
    )
    assert ok


def test_criterion_13_discrete_continuous_equivalence(warm_kernels):
    g = build_graph("complete", 16)
    proto = annihilation_protocol()
    t_disc = [
        measure_extinction_time(g, horizon=10_000_000, gamma=0.25, seed=s).t_ext for s in range(2000)
    ]
    t_cont = []
    for s in range(2000):
        bits = assign_inputs(g, 0.25, seed=100_000 + s)
        res = run_continuous(proto, g, inputs=bits, stop=StoppingRule(horizon=10_000_000), seed=200_000 + s)
        t_cont.append(res.stop_step)
    med_d, med_c = float(np.median(t_disc)), float(np.median(t_cont))
    med_err = abs(med_d - med_c) / med_d
    bits = assign_inputs(g, 0.25, seed=9)
    res = run_continuous(
        proto, g, inputs=bits, stop=StoppingRule(horizon=2**62, conditions=(), time_horizon=250_000.0), seed=77
    )
    rate = res.stop_step / res.stop_time
    rate_err = abs(rate - 0.5) / 0.5
    ok = med_err <= 0.05 and res.stop_step >= 100_000 and rate_err <= 0.02
    record_criterion(
        13,
        ok,
        f"extinction medians {med_d:.0f} vs {med_c:.0f} interactions ({med_err:.1%}, limit 5%), "
        f"event rate {rate:.4f} per unit time ({rate_err:.2%} off 1/2, limit 2%)",
    )
    assert ok


def test_criterion_14_broadcast_bounds(rr3_64, warm_kernels):
    g = rr3_64
    tau = spectral_summary(g).tau_rel
    ts = [track_influence(g, [0], horizon=10_000_000, seed=s).t_br for s in range(1000)]
    p99 = float(np.quantile(np.asarray(ts, dtype=np.float64), 0.99))
    upper = 40.0 * tau * math.log(g.n)
    upper_ok = all(t >= 0 for t in ts) and p99 <= upper

    g2 = build_graph("lollipop", 16)
    u1, u2 = g2.meta["far_edge"]
    ts2 = [track_influence(g2, [u1, u2], horizon=10_000_000, seed=600_000 + s).t_br for s in range(1000)]
    p01 = float(np.quantile(np.asarray(ts2, dtype=np.float64), 0.01))
    lower = 0.05 * diameter(g2) * g2.m
    lower_ok = all(t >= 0 for t in ts2) and p01 >= lower

    ok = upper_ok and lower_ok
    record_criterion(
        14,
        ok,
        f"3-regular p99 {p99:.0f} <= {upper:.0f}; lollipop far-pair p01 {p01:.0f} >= {lower:.1f}",
    )
    assert ok


def test_criterion_15_bias_doubling(alg1_runs):
    eligible = [r for r in alg1_runs if r["complete"] and r["clock_ok"] and r["first_flag_step"] < 0]
    n_pairs = sum(len(r["checks"]) for r in eligible)
    bad = sum(1 for r in eligible for c in r["checks"] if not c["ok"])
    ok = len(eligible) > 0 and n_pairs > 0 and bad == 0
    record_criterion(
        15,
        ok,
        f"{len(eligible)} qualifying runs, {n_pairs} even-phase pairs, {bad} doubling violations",
    )
    assert ok


def test_criterion_16_state_audit(rr3_64):
    ok_fs = state_count_audit("four-state")["total"] == 4
    ok_ann = state_count_audit("annihilation")["total"] == 3
    grid_ok = all(
        len(enumerate_clock_states(H, K)) == H * (2 * K - 1)
        for H, K in ((1, 1), (2, 1), (3, 2), (5, 3), (8, 5), (12, 11), (20, 4))
    )
    params, _ = clock_params_for_graph(rr3_64)
    derived = state_count_audit("majority", n=rr3_64.n, H=params.H, K=params.K)
    ok = ok_fs and ok_ann and grid_ok and derived["core_matches"]
    record_criterion(
        16,
        ok,
        f"4-state=4, annihilation=3, clock core {derived['automaton_core']} = "
        f"H(2K-1) = {derived['automaton_core_formula']} by exhaustive reachability",
    )
    assert ok
