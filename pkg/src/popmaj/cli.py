"""Command-line front end.

Subcommands:
  gen-graph       build a graph and print/save it (JSON or edge list)
  spectral        relaxation time, eigenvalues, expansion for a graph
  simulate        one protocol run on one graph
  experiment      multi-trial experiment from a JSON config (+ overrides)
  validate-clock  tick-gap statistics for the interaction-counting clock
  audit-states    exact state-space counts per protocol

Exit codes: 0 success, 2 bad config/arguments, 3 experiment censored >50%.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from .clock import clock_params_for_graph, measure_tick_gaps
from .dynamics import annihilation_protocol, assign_inputs, four_state_protocol
from .engine import StoppingRule, run_continuous, run_discrete
from .experiments import (
    ConfigError,
    ExperimentConfig,
    run_experiment,
    state_count_audit,
    write_records_jsonl,
    write_summary_csv,
)
from .graphs import (
    GRAPH_FAMILIES,
    GraphParameterError,
    build_graph,
    edge_expansion,
    graph_to_edgelist,
    graph_to_json,
)
from .majority import majority_params_for_graph, run_majority
from .spectral import spectral_summary

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CENSORED = 3


def _add_graph_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--family", required=True, choices=sorted(GRAPH_FAMILIES))
    p.add_argument("--size", type=int, required=True, help="n (lollipop: clique size k, n = 2k)")
    p.add_argument("--d", type=int, default=3, help="degree for random_regular")
    p.add_argument("--graph-seed", type=int, default=0)


def _build_graph(args) -> "Graph":
    return build_graph(args.family, args.size, seed=args.graph_seed, d=args.d)


def cmd_gen_graph(args) -> int:
    g = _build_graph(args)
    text = graph_to_edgelist(g) if args.format == "edgelist" else graph_to_json(g)
    if args.out:
        with open(args.out, "w") as f:
            f.write(text if text.endswith("\n") else text + "\n")
    else:
        print(text)
    return EXIT_OK


def cmd_spectral(args) -> int:
    g = _build_graph(args)
    s = spectral_summary(g)
    out = {
        "family": g.family,
        "n": g.n,
        "m": g.m,
        "lambda2": s.lambda2,
        "tau_rel": s.tau_rel,
    }
    if args.expansion:
        if g.n > 22:
            print("edge expansion scan is exhaustive; n must be <= 22", file=sys.stderr)
            return EXIT_CONFIG
        zeta, size, members = edge_expansion(g)
        out["zeta"] = zeta
        out["zeta_set_size"] = size
        out["zeta_set"] = members
        out["sandwich_lo"] = g.m / zeta
        out["sandwich_hi"] = 8.0 * (g.m / zeta) ** 2
    print(json.dumps(out, sort_keys=True, indent=2))
    return EXIT_OK


def cmd_simulate(args) -> int:
    g = _build_graph(args)
    if args.protocol == "majority":
        params = majority_params_for_graph(g, kappa=args.kappa, lam=args.lam)
        r = run_majority(
            g,
            params,
            horizon=args.horizon,
            gamma=args.gamma,
            placement=args.placement,
            majority_bit=args.majority_bit,
            seed=args.seed,
        )
        out = {
            "protocol": "majority",
            "n": g.n,
            "stop_step": r.stop_step,
            "stop_reason": r.stop_reason,
            "censored": r.censored,
            "correct": r.correct,
            "certified_case": r.certified_case,
            "consensus_bit": r.consensus_bit,
            "max_clock_tokens": r.max_clock_tokens,
        }
        print(json.dumps(out, sort_keys=True, indent=2))
        return EXIT_OK
    proto = annihilation_protocol() if args.protocol == "annihilation" else four_state_protocol()
    bits = assign_inputs(g, args.gamma, placement=args.placement, seed=args.seed, majority_bit=args.majority_bit)
    runner = run_continuous if args.continuous else run_discrete
    r = runner(proto, g, inputs=bits, stop=StoppingRule(horizon=args.horizon), seed=args.seed + 1)
    counts = {proto.states[i]: int(c) for i, c in enumerate(r.final_counts)}
    out = {
        "protocol": proto.name,
        "n": g.n,
        "stop_step": r.stop_step,
        "stop_reason": r.stop_reason,
        "censored": r.censored,
        "final_counts": counts,
    }
    if args.continuous:
        out["stop_time"] = r.stop_time
    print(json.dumps(out, sort_keys=True, indent=2))
    return EXIT_OK


def cmd_experiment(args) -> int:
    try:
        if args.config:
            with open(args.config) as f:
                cfg = ExperimentConfig.from_json(f.read())
        else:
            if not (args.protocol and args.family and args.size):
                raise ConfigError("without --config, --protocol/--family/--size are required")
            cfg = ExperimentConfig(protocol=args.protocol, family=args.family, size=args.size)
        overrides = {
            "protocol": args.protocol,
            "family": args.family,
            "size": args.size,
            "d": args.d,
            "graph_seed": args.graph_seed,
            "gamma": args.gamma,
            "eps": args.eps,
            "placement": args.placement,
            "trials": args.trials,
            "seed": args.seed,
            "horizon": args.horizon,
            "time_mode": args.time_mode,
            "workers": args.workers,
            "out_records": args.out_records,
            "out_summary": args.out_summary,
        }
        for k, v in overrides.items():
            if v is not None:
                setattr(cfg, k, v)
        cfg.validate()
    except (ConfigError, GraphParameterError, OSError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG

    res = run_experiment(cfg)
    s = res.summary
    print(f"protocol={cfg.protocol} graph={cfg.family}({cfg.size}) trials={s.trials} tau_rel={res.tau_rel:.2f}")
    print(
        f"median={s.median:.1f} mean={s.mean:.1f} p01={s.p01:.1f} p99={s.p99:.1f} "
        f"censored={s.censored}/{s.trials}"
    )
    if s.bound is not None:
        ratio = f"{s.ratio_median:.3f}" if s.ratio_median is not None else "n/a"
        print(f"bound={s.bound:.1f} median/bound={ratio}")
    if s.inconclusive:
        print("inconclusive: more than half the trials were censored", file=sys.stderr)
        return EXIT_CENSORED
    return EXIT_OK


def cmd_validate_clock(args) -> int:
    g = _build_graph(args)
    params, R = clock_params_for_graph(g, kappa=args.kappa, lam=args.lam)
    r = measure_tick_gaps(g, H=params.H, K=params.K, n_ticks=args.ticks, host0=0, seed=args.seed)
    gaps = np.asarray(r.gaps, dtype=np.float64)
    coins = np.asarray(r.coins, dtype=np.float64)
    expect_coins = params.coins_per_tick
    out = {
        "H": params.H,
        "K": params.K,
        "eta": params.eta,
        "tau_tick": params.tau_tick,
        "ticks": len(gaps),
        "gap_mean": float(gaps.mean()),
        "gap_min": float(gaps.min()),
        "gap_max": float(gaps.max()),
        "coins_per_tick_expected": expect_coins,
        "coins_per_tick_mean": float(coins.mean()),
        "coins_rel_err": abs(float(coins.mean()) - expect_coins) / expect_coins,
    }
    print(json.dumps(out, sort_keys=True, indent=2))
    return EXIT_OK


def cmd_audit_states(args) -> int:
    try:
        if args.protocol == "majority":
            g = _build_graph(args)
            params = majority_params_for_graph(g, kappa=args.kappa, lam=args.lam)
            out = state_count_audit("majority", n=g.n, H=params.H, K=params.K)
        else:
            out = state_count_audit(args.protocol)
    except (ValueError, GraphParameterError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    print(json.dumps(out, sort_keys=True, indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="popmaj", description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-graph", help="build a graph and print/save it")
    _add_graph_args(p)
    p.add_argument("--format", choices=("json", "edgelist"), default="json")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_gen_graph)

    p = sub.add_parser("spectral", help="eigenvalues and relaxation time")
    _add_graph_args(p)
    p.add_argument("--expansion", action="store_true", help="also scan edge expansion (n <= 22)")
    p.set_defaults(func=cmd_spectral)

    p = sub.add_parser("simulate", help="one protocol run")
    _add_graph_args(p)
    p.add_argument("--protocol", choices=("annihilation", "four-state", "majority"), default="four-state")
    p.add_argument("--gamma", type=float, default=0.25)
    p.add_argument("--placement", choices=("random", "segregated", "interleaved"), default="random")
    p.add_argument("--majority-bit", type=int, choices=(0, 1), default=0)
    p.add_argument("--horizon", type=int, default=10_000_000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--continuous", action="store_true")
    p.add_argument("--kappa", type=int, default=2)
    p.add_argument("--lam", type=float, default=4.0)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("experiment", help="multi-trial experiment")
    p.add_argument("--config", default=None, help="JSON config file; flags override its fields")
    p.add_argument("--protocol", default=None)
    p.add_argument("--family", default=None)
    p.add_argument("--size", type=int, default=None)
    p.add_argument("--d", type=int, default=None)
    p.add_argument("--graph-seed", type=int, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--placement", default=None)
    p.add_argument("--trials", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--time-mode", dest="time_mode", choices=("discrete", "continuous"), default=None)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out-records", default=None, help="write per-trial JSONL here")
    p.add_argument("--out-summary", default=None, help="write summary CSV here")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("validate-clock", help="tick-gap statistics")
    _add_graph_args(p)
    p.add_argument("--ticks", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kappa", type=int, default=2)
    p.add_argument("--lam", type=float, default=4.0)
    p.set_defaults(func=cmd_validate_clock)

    p = sub.add_parser("audit-states", help="exact state-space counts")
    p.add_argument("--protocol", choices=("annihilation", "four-state", "majority"), required=True)
    p.add_argument("--family", default="complete")
    p.add_argument("--size", type=int, default=16)
    p.add_argument("--d", type=int, default=3)
    p.add_argument("--graph-seed", type=int, default=0)
    p.add_argument("--kappa", type=int, default=2)
    p.add_argument("--lam", type=float, default=4.0)
    p.set_defaults(func=cmd_audit_states)

    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on bad arguments already; normalize other codes
        return int(e.code) if e.code is not None else EXIT_CONFIG
    try:
        return args.func(args)
    except (ConfigError, GraphParameterError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
