"""The shared 4-phase clock, observed from inside a real run.

Clock tokens tick on their own schedule; everyone else copies a phase from
any partner exactly one phase ahead. The result should look like a global
square wave: long frozen stretches, then a quick sweep to the next phase.
The validator checks the four properties that make the wave usable --
phases only step forward, consecutive sweeps are R to 2*eta*R apart,
nothing moves during the R steps after a sweep completes, and at most two
adjacent phases coexist.

A run with flags disabled also shows the doubling ladder: between entries
into consecutive even phases the strong bias doubles exactly, until the
minority is extinct.
"""

from popmaj import (
    build_graph,
    doubling_checks,
    majority_params_for_graph,
    run_majority,
    validate_phase_clock,
)

g = build_graph("random_regular", 64, seed=0, d=3)
params = majority_params_for_graph(g, with_flags=False)
print(f"n=64 3-regular: H={params.H} K={params.K} R={params.R:.3e} eta={params.eta:.1f}")

res = run_majority(
    g,
    params,
    horizon=10**9,
    gamma=1 / 32,
    seed=4,
    sync_target=9,            # watch the first 8 phases
    stop_on_certified=False,
    with_events=True,
)

print("\nsynchronization records (counts at the step each sweep completed):")
print("      step  phase    A    B    a    b    C  clk  strong bias")
for r in res.sync_records:
    c = r.counts
    print(
        f"{r.step:>10}  {r.phase:>5} {c['A']:>4} {c['B']:>4} {c['a']:>4} "
        f"{c['b']:>4} {c['C']:>4} {c['clock']:>4}  {r.strong_bias:>+6}"
    )

report = validate_phase_clock(res.trace, R=params.R, eta=params.eta)
print(f"\nmonotone={report.monotone_ok} gaps={report.gaps_ok} "
      f"freeze={report.freeze_ok} two-phase={report.two_phase_ok}")

print("\nbias doubling between even-phase entries:")
for c in doubling_checks(res):
    verdict = "doubled" if c["doubled"] else ("minority extinct" if c["minority_extinct"] else "VIOLATION")
    print(f"  {c['bias_lo']:>3} -> {c['bias_hi']:>3}  {verdict}")
