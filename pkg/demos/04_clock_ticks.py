# A single clock token carries H columns of a K-step coin automaton packed
# into one machine word. On average a tick costs H*2^K p-coin draws, i.e.
# H*K*2^K fair coins, and the variance is small enough that consecutive
# ticks land in a predictable window. That concentration is what the phase
# protocol leans on, so measure it.

import numpy as np

from popmaj import (
    build_graph,
    clock_params_for_graph,
    enumerate_clock_states,
    measure_tick_gaps,
)

g = build_graph("random_regular", 64, seed=0, d=3)
params, R = clock_params_for_graph(g)
print(f"derived for 3-regular n=64: H={params.H} K={params.K} eta={params.eta:.1f}")
print(f"freeze window R = {R:.3e} steps, tick target tau_tick = {params.tau_tick:.3e}")
print(f"automaton core states: H(2K-1) = {params.H * (2 * params.K - 1)}"
      f" (reachable: {len(enumerate_clock_states(params.H, params.K))})")

res = measure_tick_gaps(g, H=params.H, K=params.K, n_ticks=300, host0=0, seed=2)
gaps = np.asarray(res.gaps, dtype=np.float64)
coins = np.asarray(res.coins, dtype=np.float64)
inside = ((gaps >= params.tau_tick) & (gaps < params.eta * params.tau_tick)).mean()
print(f"\n300 ticks: mean gap {gaps.mean():.3e}, min {gaps.min():.3e}, max {gaps.max():.3e}")
print(f"inside [tau_tick, eta tau_tick): {inside:.1%}")
print(f"coins per tick: {coins.mean():.1f} measured vs {res.expected_coins_per_tick:.0f} expected")

# the same automaton at toy size, to see the state count scale
for H, K in ((2, 1), (3, 2), (6, 4)):
    print(f"H={H} K={K}: {len(enumerate_clock_states(H, K))} core states, "
          f"{H * 2**K} coins/tick")
