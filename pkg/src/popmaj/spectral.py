"""Spectral quantities of the pairwise-interaction random walk.

The walk matrix P has p_uv = 1/(2m) for every edge {u,v} and diagonal
1 - deg(u)/(2m); it is symmetric, doubly stochastic, and positive
semidefinite (its smallest eigenvalue is >= 0), with eigenvalues
1 = l1 > l2 >= ... >= ln >= 0 on a connected graph. The relaxation time is
tau_rel = 1/(1 - l2). The generator is Q = P - I.

For a nonempty proper node set S, the absorption-adjusted matrix R_S keeps Q
on V\\S, puts lambda(Q[V\\S]) (the top eigenvalue of the principal submatrix)
on the diagonal of S, and zeroes the rest. Its top eigenvalue obeys
-lambda(R_S) >= (|S|/n) / tau_rel, and its spectrum is that of Q[V\\S] plus
|S| extra copies of lambda(Q[V\\S]).

Edge expansion zeta ties into the sandwich m/zeta <= tau_rel <= 8 (m/zeta)^2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .graphs import Graph, edge_expansion
from .rng import RandomStream, as_stream

DENSE_N_CAP = 2000


def population_walk_matrix(g: Graph) -> np.ndarray:
    n, m = g.n, g.m
    P = np.zeros((n, n), dtype=np.float64)
    w = 1.0 / (2.0 * m)
    for u, v in g.edges:
        P[u, v] += w
        P[v, u] += w
    np.fill_diagonal(P, 1.0 - P.sum(axis=1))
    return P


def generator_matrix(g: Graph) -> np.ndarray:
    Q = population_walk_matrix(g)
    Q[np.diag_indices_from(Q)] -= 1.0
    return Q


@dataclass(frozen=True)
class SpectralSummary:
    n: int
    m: int
    lambda2: float
    gap: float
    tau_rel: float
    method: str
    iterations: int = 0
    residual: float = 0.0


class EigenConvergenceError(RuntimeError):
    def __init__(self, iterations: int, residual: float):
        super().__init__(
            f"second-eigenvalue iteration did not converge: residual {residual:.3e} after {iterations} iterations"
        )
        self.iterations = iterations
        self.residual = residual


def _lambda2_dense(P: np.ndarray) -> float:
    vals = np.linalg.eigvalsh(P)
    return float(vals[-2])


def _lambda2_power(g: Graph, tol: float, max_iter: int, seed: int) -> tuple[float, int, float]:
    # power iteration on P deflated by the uniform top eigenvector; P is PSD
    # and doubly stochastic, so the deflated top eigenvalue is lambda2.
    n = g.n
    eu = g.edges[:, 0].astype(np.int64)
    ev = g.edges[:, 1].astype(np.int64)
    w = 1.0 / (2.0 * g.m)
    deg = g.degrees().astype(np.float64)
    diag = 1.0 - deg * w

    def matvec(x: np.ndarray) -> np.ndarray:
        y = diag * x
        np.add.at(y, eu, w * x[ev])
        np.add.at(y, ev, w * x[eu])
        return y

    stream = as_stream(seed)
    x = np.array([stream.uniform() - 0.5 for _ in range(n)])
    x -= x.mean()
    nrm = np.linalg.norm(x)
    if nrm == 0:
        x = np.arange(n, dtype=np.float64) - (n - 1) / 2.0
        nrm = np.linalg.norm(x)
    x /= nrm
    theta = 0.0
    for it in range(1, max_iter + 1):
        y = matvec(x)
        y -= y.mean()  # deflate the all-ones eigenvector
        theta = float(x @ y)
        res = float(np.linalg.norm(y - theta * x))
        nrm = float(np.linalg.norm(y))
        if nrm == 0.0:
            return 0.0, it, 0.0
        x = y / nrm
        if res <= tol:
            return theta, it, res
    raise EigenConvergenceError(max_iter, res)


def spectral_summary(
    g: Graph,
    method: str = "auto",
    tol: float = 1e-9,
    max_iter: int = 1_000_000,
    seed: int = 0x5EED,
) -> SpectralSummary:
    """lambda2 / gap / tau_rel of the interaction walk.

    method: "auto" (dense up to n <= 2000, iterative beyond), "dense",
    or "iterative".
    """
    if method == "auto":
        method = "dense" if g.n <= DENSE_N_CAP else "iterative"
    if method == "dense":
        lam2 = _lambda2_dense(population_walk_matrix(g))
        iters, res = 0, 0.0
    elif method == "iterative":
        lam2, iters, res = _lambda2_power(g, tol, max_iter, seed)
    else:
        raise ValueError(f"unknown method: {method!r}")
    gap = 1.0 - lam2
    if gap <= 0:
        raise ValueError("nonpositive spectral gap: graph must be connected")
    return SpectralSummary(
        n=g.n, m=g.m, lambda2=lam2, gap=gap, tau_rel=1.0 / gap, method=method, iterations=iters, residual=res
    )


def relaxation_time(g: Graph, **kwargs) -> float:
    return spectral_summary(g, **kwargs).tau_rel


def walk_eigenvalues(g: Graph) -> np.ndarray:
    """All eigenvalues of P, ascending."""
    return np.linalg.eigvalsh(population_walk_matrix(g))


# ---------------------------------------------------------------------------
# absorption-adjusted matrix R_S


def _check_subset(g: Graph, S: Sequence[int]) -> np.ndarray:
    S = np.asarray(sorted(set(int(s) for s in S)), dtype=np.int64)
    if S.size == 0:
        raise ValueError("S must be nonempty")
    if S.size >= g.n:
        raise ValueError("S must be a proper subset of the nodes")
    if S.min() < 0 or S.max() >= g.n:
        raise ValueError("S contains out-of-range nodes")
    return S


def restricted_generator(g: Graph, S: Sequence[int]) -> np.ndarray:
    """Q[V\\S]: principal submatrix of the generator on the complement of S."""
    S = _check_subset(g, S)
    keep = np.setdiff1d(np.arange(g.n), S)
    Q = generator_matrix(g)
    return Q[np.ix_(keep, keep)]


def lambda_top(M: np.ndarray) -> float:
    return float(np.linalg.eigvalsh(M)[-1])


def build_RS(g: Graph, S: Sequence[int]) -> np.ndarray:
    """R_S: q_uv on (V\\S) x (V\\S); diagonal lambda(Q[V\\S]) on S; 0 elsewhere."""
    S = _check_subset(g, S)
    Q = generator_matrix(g)
    lam = lambda_top(restricted_generator(g, S))
    R = Q.copy()
    R[S, :] = 0.0
    R[:, S] = 0.0
    R[S, S] = lam
    return R


def verify_lambda_RS_bound(g: Graph, S: Sequence[int], tau_rel: Optional[float] = None, tol: float = 1e-9) -> dict:
    """Check -lambda(R_S) >= (|S|/n)/tau_rel for this graph and set."""
    S = _check_subset(g, S)
    if tau_rel is None:
        tau_rel = spectral_summary(g).tau_rel
    lam = lambda_top(build_RS(g, S))
    lhs = -lam
    rhs = (S.size / g.n) / tau_rel
    return {
        "lhs": lhs,
        "rhs": rhs,
        "ok": bool(lhs >= rhs - tol),
        "margin": lhs - rhs,
        "set_size": int(S.size),
        "tau_rel": tau_rel,
    }


def rs_spectrum_check(g: Graph, S: Sequence[int], tol: float = 1e-8) -> dict:
    """spec(R_S) must equal spec(Q[V\\S]) plus |S| extra copies of its top
    eigenvalue (block-diagonal structure), and the distinct eigenvalue sets
    must coincide."""
    S = _check_subset(g, S)
    sub = restricted_generator(g, S)
    sub_vals = np.linalg.eigvalsh(sub)
    lam = float(sub_vals[-1])
    expected = np.sort(np.concatenate([sub_vals, np.full(S.size, lam)]))
    got = np.linalg.eigvalsh(build_RS(g, S))
    multiset_ok = bool(np.allclose(got, expected, atol=tol, rtol=0.0))

    def distinct(vals: np.ndarray) -> np.ndarray:
        out = [float(vals[0])]
        for v in vals[1:]:
            if abs(float(v) - out[-1]) > tol:
                out.append(float(v))
        return np.asarray(out)

    da, db = distinct(got), distinct(np.sort(sub_vals))
    set_ok = bool(da.size == db.size and np.allclose(da, db, atol=tol, rtol=0.0))
    return {
        "multiset_ok": multiset_ok,
        "distinct_set_ok": set_ok,
        "lambda_sub": lam,
        "max_abs_diff": float(np.max(np.abs(got - expected))),
    }


def spectral_sandwich_check(g: Graph, tol: float = 1e-9) -> dict:
    """m/zeta <= tau_rel <= 8 (m/zeta)^2, with zeta the exact edge expansion."""
    zeta, _, members = edge_expansion(g)
    tau = spectral_summary(g).tau_rel
    lower = g.m / zeta
    upper = 8.0 * (g.m / zeta) ** 2
    return {
        "zeta": zeta,
        "tau_rel": tau,
        "lower": lower,
        "upper": upper,
        "ok": bool(lower - tol <= tau <= upper + tol),
        "witness_set": members,
    }
