"""Graph families and their interaction-walk spectra.

Every protocol in this package runs on the same scheduler: at each step an
ordered adjacent pair is chosen uniformly, so each node behaves like a lazy
random walk with move probability deg(v)/(2m). The relaxation time of that
walk is the single number that controls how fast anything mixes, and the
edge expansion pins it from both sides. This script builds one graph per
family and prints the numbers next to each other.
"""

import math

from popmaj import (
    build_graph,
    edge_expansion,
    spectral_sandwich_check,
    spectral_summary,
    verify_lambda_RS_bound,
    rs_spectrum_check,
)

print("family            n    m   lambda2      tau_rel     m/zeta   8(m/zeta)^2")
for family, size in [
    ("complete", 16),
    ("cycle", 16),
    ("path", 16),
    ("star", 16),
    ("grid", 16),
    ("lollipop", 8),      # clique of 8 plus a path of 8
    ("random_regular", 16),
]:
    g = build_graph(family, size, seed=1, d=3)
    s = spectral_summary(g)
    zeta, _, _ = edge_expansion(g)
    lo = g.m / zeta
    hi = 8.0 * lo * lo
    print(
        f"{g.family:<14} {g.n:>4} {g.m:>4}   {s.lambda2:.6f}  {s.tau_rel:>10.2f}  {lo:>8.1f}  {hi:>12.1f}"
    )

# the sandwich m/zeta <= tau_rel <= 8 (m/zeta)^2 is checked exactly:
chk = spectral_sandwich_check(build_graph("lollipop", 8))
print("\nlollipop sandwich:", chk["lower"], "<=", chk["tau_rel"], "<=", chk["upper"], "->", chk["ok"])

# Restricting the generator to the complement of a set S and putting the
# resulting top eigenvalue on the S-diagonal gives the R_S matrix. Its top
# eigenvalue controls how long a minority seeded outside S can survive.
g = build_graph("cycle", 12)
S = [0, 3, 6, 9]
b = verify_lambda_RS_bound(g, S)
print(f"\ncycle(12), S={S}: -lambda(R_S)={-b['lhs']:.6f} >= (|S|/n)/tau_rel={b['rhs']:.6f} -> {b['ok']}")
spec = rs_spectrum_check(g, S)
print("spec(R_S) equals spec(Q[V\\S]) plus |S| copies of the top value:", spec["multiset_ok"])
