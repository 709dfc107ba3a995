"""Summaries, bound comparisons and CSV/text writers used by the CLI."""
from __future__ import annotations

import itertools
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import bounds
from .config import ExperimentConfig
from .errors import BoundInapplicable, DmmfError
from .ideal import ideal_multi, ideal_single, sigma_of_beta
from .simulator import (
    RepStats,
    ReplicationSummary,
    Scenario,
    SimulationTrace,
    replication_seeds,
    replication_stats,
    run_episode,
    summarize,
)
from .value_models import Bernoulli, DemandDistribution, Discrete, stationary_profile, steady_state_mixture

TRACE_HEADER = "replication,t,agent_id,state,value,duration,requested,blocked,own_hold,won,utility,allocation"


def fmt(x: float) -> str:
    return "%.12g" % x


# ---------------------------------------------------------------------------
# trace CSV

def trace_csv_chunk(trace: SimulationTrace, replication: int) -> str:
    """CSV rows (no header) for one replication, one row per agent per round."""
    T, n = trace.horizon, trace.num_agents
    ints = lambda a: list(map(str, np.asarray(a).ravel().tolist()))
    floats = lambda a: ["%.12g" % x for x in np.asarray(a, dtype=float).ravel().tolist()]
    cols = [
        [str(replication)] * (T * n),
        ints(np.repeat(np.arange(1, T + 1), n)),
        ints(np.tile(np.arange(n), T)),
        ints(trace.state),
        floats(trace.value),
        ints(trace.duration),
        ints(trace.requested),
        ints(trace.blocked),
        ints(trace.own_hold),
        ints(trace.won),
        floats(trace.utility),
        ints(trace.allocation),
    ]
    return "\n".join(map(",".join, zip(*cols))) + "\n"


def _rep_worker(args) -> tuple[RepStats, str | None]:
    scenario, seed, rep, want_csv = args
    trace = run_episode(scenario, seed)
    return replication_stats(scenario, trace), (trace_csv_chunk(trace, rep) if want_csv else None)


def run_collect(scenario: Scenario, num_reps: int, master_seed: int, jobs: int | None,
                want_trace: bool) -> tuple[ReplicationSummary, list[str]]:
    seeds = replication_seeds(master_seed, num_reps)
    work = [(scenario, s, k, want_trace) for k, s in enumerate(seeds)]
    jobs = jobs or os.cpu_count() or 1
    if jobs <= 1 or num_reps == 1:
        results = [_rep_worker(w) for w in work]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, num_reps)) as pool:
            results = list(pool.map(_rep_worker, work))
    summary = summarize([r for r, _ in results], scenario.horizon)
    return summary, [c for _, c in results if c is not None]


# ---------------------------------------------------------------------------
# bound comparisons

@dataclass(frozen=True)
class BoundComparison:
    agent: int
    kind: str
    coefficient: float
    v_star: float
    per_round_bound: float
    ratio: float
    condition: str = ""


def _mixture_mean_if_binary(mix) -> float | None:
    if isinstance(mix, Bernoulli):
        return mix.p
    if isinstance(mix, Discrete) and set(mix.values) <= {0.0, 1.0}:
        return mix.mean()
    return None


def bound_params(cfg: ExperimentConfig, scenario: Scenario, i: int, kind: str, overrides: dict) -> dict:
    agent = cfg.agents[i]
    model = scenario.agents[i].model
    alpha = agent.alpha
    beta = agent.strategy.beta if agent.strategy.beta is not None else alpha
    p: dict = {"alpha": alpha}
    if kind in ("general", "state_independent", "mult", "mult_tuned", "impossibility_mult"):
        p["beta"] = beta
    if kind in ("general", "moderate_correlation", "high_correlation", "arbitrary_correlation",
                "impossibility_markov", "pi_min"):
        prof = stationary_profile(model)
        p["gamma"] = prof.gamma
        if kind == "pi_min":
            p = {"alpha": alpha, "min_pi": prof.min_pi}
    mix = steady_state_mixture(model)
    if kind == "bernoulli":
        mean = _mixture_mean_if_binary(mix)
        if mean is None:
            raise BoundInapplicable("values must be 0/1")
        p["p"] = mean
    if kind == "bounded_density":
        if not hasattr(mix, "density_bounds"):
            raise BoundInapplicable("values need a bounded density")
        p["lambda1"], p["lambda2"] = mix.density_bounds()
    if kind == "state_independent":
        p["sigma"] = sigma_of_beta(model, beta)
    if kind == "mult":
        p["r"] = cfg.mechanism.r
    if kind == "impossibility_mult":
        p["r"], p["k_max"] = cfg.mechanism.r, cfg.mechanism.k_max
    if kind == "price_of_anarchy":
        p = {"n": len(cfg.agents)}
    p.update({k: v for k, v in overrides.items() if k not in ("kind", "agent")})
    return p


def v_star(model, beta: float) -> float:
    mix = steady_state_mixture(model)
    if isinstance(mix, DemandDistribution):
        return ideal_multi(mix, beta).value
    return ideal_single(mix, beta).value


def compare_bounds(cfg: ExperimentConfig, scenario: Scenario, summary: ReplicationSummary) -> list[BoundComparison]:
    out = []
    for check in cfg.bound_checks:
        spec = {"kind": check} if isinstance(check, str) else dict(check)
        kind = spec["kind"]
        agents = [spec["agent"]] if "agent" in spec else [
            i for i, a in enumerate(scenario.agents) if not a.is_adversary]
        for i in agents:
            try:
                params = bound_params(cfg, scenario, i, kind, spec)
                rep = bounds.evaluate(kind, **params)
                ref_beta = rep.beta if rep.beta is not None else params.get("alpha")
                vs = v_star(scenario.agents[i].model, ref_beta)
                per_round = rep.coefficient * vs
                ratio = summary.util_mean[i] / per_round if per_round > 0 else math.nan
                out.append(BoundComparison(i, kind, rep.coefficient, vs, per_round, ratio))
            except (BoundInapplicable, DmmfError) as exc:
                out.append(BoundComparison(i, kind, math.nan, math.nan, math.nan, math.nan, str(exc)))
    return out


def summary_text(cfg: ExperimentConfig, scenario: Scenario, summary: ReplicationSummary,
                 comparisons: Sequence[BoundComparison], master_seed: int) -> str:
    lines = [
        f"replications={summary.num_reps}",
        f"horizon={summary.horizon}",
        f"master_seed={master_seed}",
        f"fingerprint={scenario.fingerprint()}",
        f"invariant_violations={int(summary.invariant_violations.sum())}",
        f"window_violations={summary.window_violations}",
    ]
    for i in range(len(scenario.agents)):
        pre = f"agent{i}."
        lines += [
            pre + f"util_mean={fmt(summary.util_mean[i])}",
            pre + f"util_se={fmt(summary.util_se[i])}",
            pre + f"wins_mean={fmt(summary.wins_mean[i])}",
            pre + f"blk_mean={fmt(summary.blk_mean[i])}",
            pre + f"invariant_violations={int(summary.invariant_violations[i])}",
        ]
        for c in comparisons:
            if c.agent != i:
                continue
            lines.append(pre + f"bound_{c.kind}_coeff={fmt(c.coefficient)}")
            lines.append(pre + f"bound_{c.kind}_ratio={fmt(c.ratio)}")
            if c.condition:
                lines.append(pre + f"bound_{c.kind}_condition={c.condition}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# bound tables

def _grid_rows(entry: dict) -> list[dict]:
    kind = entry["kind"]
    keys = sorted(k for k in entry if k != "kind")
    values = [entry[k] if isinstance(entry[k], list) else [entry[k]] for k in keys]
    return [{"kind": kind, **dict(zip(keys, combo))} for combo in itertools.product(*values)]


def bound_table(entries: Sequence[dict]) -> list[tuple[str, str, str, str, str]]:
    """Rows of ``(kind, params, coefficient, applicable, condition)``."""
    rows = []
    for entry in entries:
        for point in _grid_rows(entry):
            kind = point.pop("kind")
            params = ";".join(f"{k}={fmt(v) if isinstance(v, float) else v}" for k, v in sorted(point.items()))
            try:
                rep = bounds.evaluate(kind, **point)
                rows.append((kind, params, fmt(rep.coefficient), "true", ""))
            except BoundInapplicable as exc:
                rows.append((kind, params, "", "false", exc.condition))
            except (KeyError, TypeError) as exc:
                rows.append((kind, params, "", "false", f"missing or bad parameter {exc}"))
    return rows


def write_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
