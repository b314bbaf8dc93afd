"""Reproducible multi-trial experiments: configs, trial records, summary
statistics, theory-bound comparisons, scaling reports, and the state audit.

Determinism contract: a config fully determines its output. Trial i draws
from the stream derive_key(seed, i), so reruns produce byte-identical JSONL
regardless of worker count or interruption/resume.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from .clock import enumerate_clock_states
from .dynamics import (
    four_state_protocol,
    four_state_stabilized,
    majority_split,
    measure_clearing_time,
    measure_extinction_time,
    track_influence,
)
from .engine import StoppingRule, run_continuous, run_discrete
from .graphs import Graph, build_graph
from .majority import majority_params_for_graph, run_majority, theta_cap
from .rng import RandomStream, derive_key
from .spectral import spectral_summary

PROTOCOLS = (
    "extinction",
    "clearing",
    "four-state",
    "majority",
    "broadcast",
)
PLACEMENTS = ("random", "segregated", "interleaved")
FLAT_VERDICT_FACTOR = 4.0


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    """One experiment: a graph, a protocol, input placement, seeded trials."""

    protocol: str
    family: str
    size: int
    d: int = 3
    graph_seed: int = 0
    gamma: float = 0.25
    eps: float = 0.1
    placement: str = "random"
    majority_bit: int = 0
    trials: int = 1
    seed: int = 0
    horizon: int | None = None
    time_mode: str = "discrete"  # extinction only: or "continuous"
    sources: tuple = (0,)  # broadcast only
    kappa: int = 2
    lam: float = 4.0
    c_br: float = 0.0
    workers: int | None = None
    out_records: str | None = None
    out_summary: str | None = None

    def validate(self) -> None:
        if self.protocol not in PROTOCOLS:
            raise ConfigError(f"unknown protocol {self.protocol!r}; choose from {PROTOCOLS}")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.placement not in PLACEMENTS:
            raise ConfigError(f"unknown placement {self.placement!r}")
        if self.time_mode not in ("discrete", "continuous"):
            raise ConfigError("time_mode must be 'discrete' or 'continuous'")
        if self.time_mode == "continuous" and self.protocol not in ("extinction", "clearing"):
            raise ConfigError("continuous mode applies to annihilation protocols only")
        if self.protocol in ("extinction", "clearing", "four-state", "majority"):
            try:
                majority_split(self._n(), self.gamma)
            except ValueError as e:
                raise ConfigError(str(e)) from None
        if self.protocol == "clearing" and not 0 < self.eps < 1:
            raise ConfigError("eps must be in (0, 1)")
        if self.horizon is not None and self.horizon < 1:
            raise ConfigError("horizon must be positive")
        if self.kappa < 1 or self.lam <= 1:
            raise ConfigError("need kappa >= 1 and lam > 1")

    def _n(self) -> int:
        return 2 * self.size if self.family == "lollipop" else self.size

    def to_json(self) -> str:
        d = asdict(self)
        d["sources"] = list(self.sources)
        return json.dumps(d, sort_keys=True, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config is not valid JSON: {e}") from None
        if not isinstance(d, dict):
            raise ConfigError("config must be a JSON object")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if "sources" in d:
            d["sources"] = tuple(d["sources"])
        cfg = cls(**d)
        cfg.validate()
        return cfg

    def build_graph(self) -> Graph:
        return build_graph(self.family, self.size, seed=self.graph_seed, d=self.d)


def default_horizon(g: Graph, tau_rel: float) -> int:
    """Fallback step budget: generous enough for the unclocked protocols on
    any connected graph, scaling as tau_rel * ln n * (degree spread) * log2 n."""
    deg = g.degrees()
    spread = float(deg.max()) / float(deg.min())
    n = max(g.n, 2)
    return int(200.0 * tau_rel * math.log(n) * spread * math.log2(n)) + 1000


def majority_default_horizon(params) -> int:
    """The clocked protocol needs theta_max phase gaps of up to 2*eta*R steps
    each; a few extra gaps cover startup and the final certification sweep."""
    return int((theta_cap(params.n) + 6) * 2.0 * params.eta * params.R) + 1000


@dataclass
class TrialRecord:
    protocol: str
    trial: int
    n: int
    t: float  # primary metric (steps; continuous mode: interaction count)
    censored: bool
    correct: bool | None = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        d = {
            "protocol": self.protocol,
            "trial": self.trial,
            "n": self.n,
            "t": self.t,
            "censored": self.censored,
            "correct": self.correct,
        }
        d.update(self.extra)
        return json.dumps(d, sort_keys=True)


def theory_bound(cfg: ExperimentConfig, g: Graph, tau_rel: float) -> float | None:
    """The step bound the measured times are compared against."""
    n = g.n
    k1 = cfg.kappa + 1
    if cfg.protocol == "extinction":
        return k1 * tau_rel * math.log(n) / cfg.gamma
    if cfg.protocol == "clearing":
        return 8 * k1 * tau_rel * math.log(n) / cfg.eps
    if cfg.protocol == "four-state":
        return tau_rel * math.log(n) / cfg.gamma
    if cfg.protocol == "majority":
        deg = g.degrees()
        spread = float(deg.max()) / float(deg.min())
        return spread * tau_rel * math.log(n) * max(1.0, math.log2(1.0 / cfg.gamma))
    if cfg.protocol == "broadcast":
        return 40.0 * tau_rel * math.log(n)
    return None


@dataclass
class SummaryStats:
    metric: str
    trials: int
    censored: int
    mean: float
    median: float
    p01: float
    p99: float
    bound: float | None
    ratio_median: float | None
    inconclusive: bool  # censoring above 50%: quantiles not meaningful

    def rows(self) -> list:
        return [
            ("metric", self.metric),
            ("trials", self.trials),
            ("censored", self.censored),
            ("mean", self.mean),
            ("median", self.median),
            ("p01", self.p01),
            ("p99", self.p99),
            ("bound", self.bound if self.bound is not None else ""),
            ("ratio_median", self.ratio_median if self.ratio_median is not None else ""),
            ("inconclusive", self.inconclusive),
        ]


def summarize(metric: str, values: list, censored_flags: list, bound: float | None) -> SummaryStats:
    """Aggregate one metric; order-independent. Censored trials are counted,
    never folded into quantiles; above 50% censoring the summary is flagged
    inconclusive."""
    v = np.asarray(values, dtype=np.float64)
    c = int(sum(bool(x) for x in censored_flags))
    ok = v[~np.asarray(censored_flags, dtype=bool)] if len(v) else v
    inconclusive = c > len(values) / 2
    if len(ok) == 0:
        mean = median = p01 = p99 = math.nan
    else:
        mean = float(ok.mean())
        median = float(np.median(ok))
        p01 = float(np.quantile(ok, 0.01))
        p99 = float(np.quantile(ok, 0.99))
    ratio = None
    if bound is not None and len(ok) and bound > 0:
        ratio = float(median / bound)
    return SummaryStats(
        metric=metric,
        trials=len(values),
        censored=c,
        mean=mean,
        median=median,
        p01=p01,
        p99=p99,
        bound=bound,
        ratio_median=ratio,
        inconclusive=inconclusive,
    )


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    records: list
    summary: SummaryStats
    tau_rel: float
    censored_fraction: float


def _one_trial(cfg: ExperimentConfig, g: Graph, params, horizon: int, i: int) -> TrialRecord:
    stream = RandomStream(key=derive_key(cfg.seed, i))
    if cfg.protocol == "extinction":
        if cfg.time_mode == "continuous":
            from .dynamics import annihilation_protocol, assign_inputs

            proto = annihilation_protocol()
            bits = assign_inputs(g, cfg.gamma, placement=cfg.placement, seed=stream, majority_bit=cfg.majority_bit)
            states = proto.init_map[bits]
            counts0 = np.bincount(states, minlength=3)
            minority = 1 if counts0[0] >= counts0[1] else 0
            w = [0, 0, 0]
            w[minority] = 1
            from .engine import CountCondition

            res = run_continuous(
                proto,
                g,
                states=states,
                stop=StoppingRule(horizon=horizon, conditions=(CountCondition(tuple(w), "<=", 0),)),
                seed=stream,
            )
            return TrialRecord(
                protocol=cfg.protocol,
                trial=i,
                n=g.n,
                t=float(res.stop_step),
                censored=res.censored,
                extra={"time": res.stop_time, "mode": "continuous"},
            )
        r = measure_extinction_time(g, horizon=horizon, gamma=cfg.gamma, placement=cfg.placement, seed=stream)
        return TrialRecord(
            protocol=cfg.protocol,
            trial=i,
            n=g.n,
            t=float(r.t_ext),
            censored=r.censored,
            extra={"bias0": r.bias, "mode": "discrete"},
        )
    if cfg.protocol == "clearing":
        r = measure_clearing_time(g, horizon=horizon, eps=cfg.eps, gamma=cfg.gamma, placement=cfg.placement, seed=stream)
        return TrialRecord(
            protocol=cfg.protocol,
            trial=i,
            n=g.n,
            t=float(r.t_clr),
            censored=r.censored,
            extra={"reason": r.reason},
        )
    if cfg.protocol == "four-state":
        from .dynamics import assign_inputs

        proto = four_state_protocol()
        bits = assign_inputs(g, cfg.gamma, placement=cfg.placement, seed=stream, majority_bit=cfg.majority_bit)
        res = run_discrete(proto, g, inputs=bits, stop=StoppingRule(horizon=horizon), seed=stream)
        stabilized = four_state_stabilized(res.final_counts)
        out1 = int(res.final_counts[1] + res.final_counts[3])
        consensus = 1 if out1 == g.n else (0 if out1 == 0 else None)
        correct = None if consensus is None else consensus == cfg.majority_bit
        return TrialRecord(
            protocol=cfg.protocol,
            trial=i,
            n=g.n,
            t=float(res.stop_step),
            censored=not stabilized,
            correct=correct,
            extra={},
        )
    if cfg.protocol == "majority":
        r = run_majority(
            g,
            params,
            horizon=horizon,
            gamma=cfg.gamma,
            placement=cfg.placement,
            majority_bit=cfg.majority_bit,
            seed=stream,
        )
        return TrialRecord(
            protocol=cfg.protocol,
            trial=i,
            n=g.n,
            t=float(r.stop_step),
            censored=r.censored,
            correct=r.correct,
            extra={
                "certified_case": r.certified_case,
                "observed_stab_step": r.observed_stab_step,
                "first_flag_step": r.first_flag_step,
                "potential_break_step": r.potential_break_step,
                "max_clock_tokens": r.max_clock_tokens,
            },
        )
    if cfg.protocol == "broadcast":
        r = track_influence(g, list(cfg.sources), horizon=horizon, seed=stream)
        return TrialRecord(
            protocol=cfg.protocol,
            trial=i,
            n=g.n,
            t=float(r.t_br if r.t_br >= 0 else horizon),
            censored=r.censored,
            extra={"sources": list(cfg.sources)},
        )
    raise ConfigError(f"unknown protocol {cfg.protocol!r}")


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run all trials of a config. Trials are independent (stream i is
    derived from the base seed and i alone) and the record list is ordered
    by trial index, so results do not depend on worker count."""
    cfg.validate()
    g = cfg.build_graph()
    tau_rel = spectral_summary(g).tau_rel
    params = None
    if cfg.protocol == "majority":
        params = majority_params_for_graph(g, kappa=cfg.kappa, lam=cfg.lam, c_br=cfg.c_br, tau_rel=tau_rel)
    if cfg.horizon is not None:
        horizon = cfg.horizon
    elif params is not None:
        horizon = max(default_horizon(g, tau_rel), majority_default_horizon(params))
    else:
        horizon = default_horizon(g, tau_rel)

    workers = cfg.workers if cfg.workers is not None else (os.cpu_count() or 1)
    records: list = [None] * cfg.trials
    if workers > 1 and cfg.trials > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            futs = {ex.submit(_one_trial, cfg, g, params, horizon, i): i for i in range(cfg.trials)}
            for fut, i in futs.items():
                records[i] = fut.result()
    else:
        for i in range(cfg.trials):
            records[i] = _one_trial(cfg, g, params, horizon, i)

    bound = theory_bound(cfg, g, tau_rel)
    summary = summarize(
        metric=cfg.protocol,
        values=[r.t for r in records],
        censored_flags=[r.censored for r in records],
        bound=bound,
    )
    result = ExperimentResult(
        config=cfg,
        records=records,
        summary=summary,
        tau_rel=tau_rel,
        censored_fraction=summary.censored / max(1, summary.trials),
    )
    if cfg.out_records:
        write_records_jsonl(records, cfg.out_records)
    if cfg.out_summary:
        write_summary_csv([summary], cfg.out_summary)
    return result


def write_records_jsonl(records: list, path: str) -> None:
    with open(path, "w") as f:
        for r in records:
            f.write(r.to_json() + "\n")


def records_jsonl_text(records: list) -> str:
    buf = io.StringIO()
    for r in records:
        buf.write(r.to_json() + "\n")
    return buf.getvalue()


def write_summary_csv(summaries: list, path: str) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        keys = [k for k, _ in summaries[0].rows()]
        w.writerow(keys)
        for s in summaries:
            w.writerow([v for _, v in s.rows()])


@dataclass
class ScalingRow:
    n: int
    trials: int
    median: float
    bound: float
    ratio: float


@dataclass
class ScalingReport:
    rows: list
    spread: float  # max ratio / min ratio
    verdict: str  # "flat (x.x)" or "growing (x.x)"

    def table(self) -> str:
        lines = ["n\ttrials\tmedian\tbound\tratio"]
        for r in self.rows:
            lines.append(f"{r.n}\t{r.trials}\t{r.median:.1f}\t{r.bound:.1f}\t{r.ratio:.3f}")
        lines.append(f"verdict: {self.verdict}")
        return "\n".join(lines)


def scaling_report(groups: dict) -> ScalingReport:
    """groups: n -> (values, bound). Compares median/bound ratios across
    sizes; flat means the spread of ratios stays within a factor of 4."""
    if len(groups) < 2:
        raise ValueError("need at least two group sizes")
    rows = []
    for n in sorted(groups):
        values, bound = groups[n]
        if len(values) == 0:
            raise ValueError(f"empty group for n={n}")
        med = float(np.median(np.asarray(values, dtype=np.float64)))
        rows.append(ScalingRow(n=n, trials=len(values), median=med, bound=float(bound), ratio=med / float(bound)))
    ratios = [r.ratio for r in rows]
    spread = max(ratios) / min(ratios)
    verdict = f"{'flat' if spread <= FLAT_VERDICT_FACTOR else 'growing'} ({spread:.1f})"
    return ScalingReport(rows=rows, spread=spread, verdict=verdict)


def state_count_audit(protocol: str, n: int = 0, H: int = 0, K: int = 0) -> dict:
    """Exact state-space sizes. For the clocked protocol the automaton core
    is counted by exhaustive reachability from (0, 0) and must equal
    H(2K-1)."""
    if protocol == "annihilation":
        return {"opinion_states": 3, "clock_states": 0, "total": 3}
    if protocol == "four-state":
        return {"opinion_states": 4, "clock_states": 0, "total": 4}
    if protocol == "majority":
        if n < 2 or H < 1 or K < 1:
            raise ValueError("majority audit needs n, H, K")
        theta_states = theta_cap(n) + 1
        core_formula = H * (2 * K - 1)
        core_reachable = len(enumerate_clock_states(H, K))
        opinion = 5 * 4 * theta_states * 8 * 4
        clock = core_reachable * 4 * 2 * 8 * 4
        return {
            "opinion_states": opinion,
            "clock_states": clock,
            "automaton_core": core_reachable,
            "automaton_core_formula": core_formula,
            "core_matches": core_reachable == core_formula,
            "theta_states": theta_states,
            "total": opinion + clock,
        }
    raise ValueError(f"unknown protocol {protocol!r}")
