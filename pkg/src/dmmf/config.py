"""Experiment configuration: TOML schema, validation and canonical dump.

Grammar (TOML)::

    replications = 20              # optional, default 1
    master_seed = 7                # optional, default 0
    bound_checks = ["worst_case"]  # optional; strings or {kind = ..., overrides}

    [mechanism]
    mode = "single_round"          # or "reusable"
    horizon = 200000
    r = 1.5                        # reusable only
    k_max = 3                      # reusable only, default 1

    [outputs]                      # optional; paths are relative to --out-dir
    summary_path = "summary.txt"
    trace_path = "trace.csv"       # optional

    [[agents]]
    alpha = 0.25
    strategy = { kind = "beta_aggressive", beta = 0.25 }
    model = { dist = "uniform:0:1" }          # i.i.d. shortcut

    [[agents]]
    alpha = 0.75
    strategy = { kind = "greedy_blocker", observe = "full_requests" }

A Markov model is written as ``model = { transition = [[...], ...],
states = [<dist>, ...] }`` where each ``<dist>`` is an inline spec string
(see ``parse_dist``) or a table such as ``{ kind = "bernoulli", p = 0.3 }``.
"""
from __future__ import annotations

import math
import re
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any

import numpy as np
import tomli
import tomli_w

from .errors import ConfigError, DmmfError
from .mechanism import MechanismConfig
from .simulator import AgentSetup, Scenario
from .strategies import (
    Always,
    FixedThreshold,
    GreedyBlocker,
    KmaxFlooder,
    Never,
    Silent,
    WinTriggered,
    beta_aggressive,
    state_independent,
)
from .value_models import (
    Bernoulli,
    BoundedDensity,
    DemandDistribution,
    Discrete,
    MarkovValueModel,
    Uniform,
)

SHARE_SUM_TOL = 1e-9
AGENT_KINDS = ("beta_aggressive", "state_independent", "always", "never", "fixed_threshold")
ADVERSARY_KINDS = ("greedy_blocker", "win_triggered", "kmax_flooder", "silent")


# ---------------------------------------------------------------------------
# distribution specs

def _num(text: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"not a number: {text!r}") from None


def parse_dist(spec):
    """Build a distribution from an inline string or a table.

    Inline forms: ``bernoulli:0.3``, ``uniform:0:1``,
    ``discrete:1@0.25,0@0.75``, ``density:0:1:0.5,1.5`` (bucket heights),
    ``demand:1x1@0.5,1x3@0.5`` (value x duration @ probability).
    """
    if isinstance(spec, dict):
        return _dist_from_table(spec)
    if not isinstance(spec, str):
        raise ConfigError("distribution must be a string or a table")
    kind, _, rest = spec.strip().partition(":")
    try:
        if kind == "bernoulli":
            return Bernoulli(_num(rest))
        if kind == "uniform":
            lo, hi = rest.split(":")
            return Uniform(_num(lo), _num(hi))
        if kind == "discrete":
            pairs = [p.split("@") for p in rest.split(",")]
            return Discrete(tuple(_num(v) for v, _ in pairs), tuple(_num(p) for _, p in pairs))
        if kind == "density":
            lo, hi, hs = rest.split(":")
            return BoundedDensity(_num(lo), _num(hi), tuple(_num(h) for h in hs.split(",")))
        if kind == "demand":
            items = []
            for part in rest.split(","):
                vk, p = part.split("@")
                v, k = vk.split("x")
                items.append((_num(v), int(k), _num(p)))
            return DemandDistribution(tuple(items), max(k for _, k, _ in items))
    except (ValueError, DmmfError) as exc:
        raise ConfigError(f"bad distribution spec {spec!r}: {exc}") from None
    raise ConfigError(f"unknown distribution kind {kind!r}")


def _dist_from_table(t: dict):
    kind = t.get("kind")
    try:
        if kind == "bernoulli":
            return Bernoulli(float(t["p"]))
        if kind == "uniform":
            return Uniform(float(t["lo"]), float(t["hi"]))
        if kind == "discrete":
            return Discrete(tuple(map(float, t["values"])), tuple(map(float, t["probs"])))
        if kind == "bounded_density":
            return BoundedDensity(float(t["lo"]), float(t["hi"]), tuple(map(float, t["heights"])),
                                  t.get("lambda1"), t.get("lambda2"))
        if kind == "demand":
            support = tuple((float(v), int(k), float(p)) for v, k, p in t["support"])
            return DemandDistribution(support, int(t.get("k_max", max(k for _, k, _ in support))))
    except KeyError as exc:
        raise ConfigError(f"distribution {kind!r} is missing key {exc}") from None
    except (ValueError, TypeError, DmmfError) as exc:
        raise ConfigError(f"bad {kind!r} distribution: {exc}") from None
    raise ConfigError(f"unknown distribution kind {kind!r}")


# ---------------------------------------------------------------------------
# config dataclasses (plain data, round-trip through TOML)

@dataclass(frozen=True)
class MechanismSection:
    mode: str = "single_round"
    horizon: int = 1000
    r: float | None = None
    k_max: int = 1


@dataclass(frozen=True)
class StrategySpec:
    kind: str
    beta: float | None = None
    tau: float | None = None
    observe: str | None = None
    target: int | None = None
    duration: int | None = None
    ell: int | None = None
    k: int | None = None


@dataclass(frozen=True)
class ModelSpec:
    """Either ``dist`` (i.i.d.) or ``transition`` with one state law per row."""

    dist: Any = None
    transition: tuple[tuple[float, ...], ...] | None = None
    states: tuple = ()
    initial_from_stationary: bool = True
    initial_state: int = 0

    def build(self) -> MarkovValueModel:
        if self.dist is not None:
            return MarkovValueModel.iid(parse_dist(self.dist))
        P = np.asarray(self.transition, dtype=float)
        return MarkovValueModel(P, tuple(parse_dist(s) for s in self.states),
                                self.initial_from_stationary, self.initial_state)


@dataclass(frozen=True)
class AgentConfig:
    alpha: float
    strategy: StrategySpec
    model: ModelSpec | None = None


@dataclass(frozen=True)
class OutputsSpec:
    summary_path: str = "summary.txt"
    trace_path: str | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    mechanism: MechanismSection
    agents: tuple[AgentConfig, ...]
    replications: int = 1
    master_seed: int = 0
    outputs: OutputsSpec = field(default_factory=OutputsSpec)
    bound_checks: tuple = ()

    def mechanism_config(self) -> MechanismConfig:
        m = self.mechanism
        return MechanismConfig(tuple(a.alpha for a in self.agents), m.mode, m.horizon, m.r, m.k_max)

    def scenario(self) -> Scenario:
        return build_scenario(self)


# ---------------------------------------------------------------------------
# line locator

_HEADER = re.compile(r"^\s*(\[\[?)\s*([A-Za-z0-9_.\-]+)\s*\]\]?")
_KEY = re.compile(r"^\s*([A-Za-z0-9_\-]+)\s*=")


class LineLocator:
    """Maps key paths like ``("agents", 1, "alpha")`` to 1-based source lines."""

    def __init__(self, text: str):
        self.lines: dict[tuple, int] = {}
        counters: dict[tuple, int] = {}
        table: tuple = ()
        for no, line in enumerate(text.splitlines(), start=1):
            m = _HEADER.match(line)
            if m:
                parts = tuple(m.group(2).split("."))
                if m.group(1) == "[[":
                    idx = counters.get(parts, -1) + 1
                    counters[parts] = idx
                    table = parts + (idx,)
                else:
                    table = self._resolve(parts, counters)
                self.lines.setdefault(table, no)
                continue
            k = _KEY.match(line)
            if k:
                self.lines.setdefault(table + (k.group(1),), no)

    @staticmethod
    def _resolve(parts: tuple, counters: dict) -> tuple:
        # [agents.model] after [[agents]] refers to the latest array element
        out: tuple = ()
        for p in parts:
            out = out + (p,)
            if out in counters:
                out = out + (counters[out],)
        return out

    def __call__(self, *path) -> int | None:
        path = tuple(path)
        while path:
            if path in self.lines:
                return self.lines[path]
            path = path[:-1]
        return None


# ---------------------------------------------------------------------------
# parsing and validation

def _expect(cond: bool, msg: str, locate: LineLocator, *path) -> None:
    if not cond:
        raise ConfigError(msg, locate(*path))


def _int(x, msg, locate, *path) -> int:
    _expect(isinstance(x, int) and not isinstance(x, bool), msg, locate, *path)
    return x


def _float(x, msg, locate, *path) -> float:
    _expect(isinstance(x, (int, float)) and not isinstance(x, bool), msg, locate, *path)
    return float(x)


def _opt(d: dict, key: str, conv, msg, locate, *path):
    return conv(d[key], msg, locate, *path, key) if key in d else None


def _strategy(d, locate, i) -> StrategySpec:
    path = ("agents", i, "strategy")
    if isinstance(d, str):
        d = {"kind": d}
    _expect(isinstance(d, dict), "strategy must be a table or a kind name", locate, *path)
    kind = d.get("kind")
    _expect(kind in AGENT_KINDS + ADVERSARY_KINDS, f"unknown strategy kind {kind!r}", locate, *path)
    allowed = {"kind", "beta", "tau", "observe", "target", "duration", "ell", "k"}
    extra = set(d) - allowed
    _expect(not extra, f"unknown strategy keys {sorted(extra)}", locate, *path)
    observe = d.get("observe")
    _expect(observe in (None, "wins_only", "full_requests"),
            "observe must be 'wins_only' or 'full_requests'", locate, *path, "observe")
    spec = StrategySpec(
        kind=kind,
        beta=_opt(d, "beta", _float, "beta must be a number", locate, *path),
        tau=_opt(d, "tau", _float, "tau must be a number", locate, *path),
        observe=observe,
        target=_opt(d, "target", _int, "target must be an integer", locate, *path),
        duration=_opt(d, "duration", _int, "duration must be an integer", locate, *path),
        ell=_opt(d, "ell", _int, "ell must be an integer", locate, *path),
        k=_opt(d, "k", _int, "k must be an integer", locate, *path),
    )
    if kind in ("beta_aggressive", "state_independent"):
        _expect(spec.beta is not None and 0 < spec.beta <= 1, "beta must lie in (0, 1]", locate, *path, "beta")
    if kind == "fixed_threshold":
        _expect(spec.tau is not None, "fixed_threshold needs tau", locate, *path)
    if kind == "kmax_flooder":
        _expect(spec.k is not None and spec.k >= 1, "kmax_flooder needs k >= 1", locate, *path, "k")
    return spec


def _model(d, locate, i) -> ModelSpec:
    path = ("agents", i, "model")
    _expect(isinstance(d, dict), "model must be a table", locate, *path)
    extra = set(d) - {"dist", "transition", "states", "initial_from_stationary", "initial_state"}
    _expect(not extra, f"unknown model keys {sorted(extra)}", locate, *path)
    if "dist" in d:
        _expect("transition" not in d and "states" not in d,
                "give either dist or transition/states, not both", locate, *path)
        spec = ModelSpec(dist=d["dist"])
    else:
        _expect("transition" in d and "states" in d, "model needs dist, or transition and states",
                locate, *path)
        P = d["transition"]
        _expect(isinstance(P, list) and all(isinstance(r, list) for r in P),
                "transition must be a list of rows", locate, *path, "transition")
        spec = ModelSpec(
            transition=tuple(tuple(float(x) for x in row) for row in P),
            states=tuple(d["states"]),
            initial_from_stationary=bool(d.get("initial_from_stationary", True)),
            initial_state=int(d.get("initial_state", 0)),
        )
    try:
        spec.build()
    except ConfigError as exc:
        raise ConfigError(exc.message, locate(*path)) from None
    except DmmfError as exc:
        raise ConfigError(str(exc), locate(*path)) from None
    return spec


def config_from_dict(data: dict, locate: LineLocator | None = None) -> ExperimentConfig:
    locate = locate or (lambda *p: None)
    known = {"mechanism", "agents", "replications", "master_seed", "outputs", "bound_checks"}
    extra = set(data) - known
    _expect(not extra, f"unknown top-level keys {sorted(extra)}", locate, sorted(extra)[0] if extra else "")

    mech = data.get("mechanism")
    _expect(isinstance(mech, dict), "missing [mechanism] table", locate, "mechanism")
    mode = mech.get("mode", "single_round")
    _expect(mode in ("single_round", "reusable"), "mode must be 'single_round' or 'reusable'",
            locate, "mechanism", "mode")
    _expect("horizon" in mech, "mechanism.horizon is required", locate, "mechanism")
    horizon = _int(mech["horizon"], "horizon must be an integer", locate, "mechanism", "horizon")
    _expect(horizon >= 1, "horizon must be positive", locate, "mechanism", "horizon")
    r = _opt(mech, "r", _float, "r must be a number", locate, "mechanism")
    k_max = _opt(mech, "k_max", _int, "k_max must be an integer", locate, "mechanism")
    k_max = 1 if k_max is None else k_max
    if mode == "reusable":
        _expect(r is not None, "reusable mode needs r", locate, "mechanism")
        _expect(r >= 1, "r must be at least 1", locate, "mechanism", "r")
        _expect(k_max >= 1, "k_max must be at least 1", locate, "mechanism", "k_max")
    mechanism = MechanismSection(mode, horizon, r, k_max)

    raw_agents = data.get("agents")
    _expect(isinstance(raw_agents, list) and raw_agents, "at least one [[agents]] entry is required",
            locate, "agents")
    agents = []
    for i, a in enumerate(raw_agents):
        _expect(isinstance(a, dict), "agent entries must be tables", locate, "agents", i)
        extra = set(a) - {"alpha", "strategy", "model"}
        _expect(not extra, f"unknown agent keys {sorted(extra)}", locate, "agents", i)
        _expect("alpha" in a, "agent needs alpha", locate, "agents", i)
        alpha = _float(a["alpha"], "alpha must be a number", locate, "agents", i, "alpha")
        _expect(alpha > 0, "alpha must be positive", locate, "agents", i, "alpha")
        _expect("strategy" in a, "agent needs a strategy", locate, "agents", i)
        strat = _strategy(a["strategy"], locate, i)
        model = _model(a["model"], locate, i) if "model" in a else None
        _expect(strat.kind not in AGENT_KINDS or model is not None,
                f"strategy {strat.kind!r} needs a value model", locate, "agents", i)
        agents.append(AgentConfig(alpha, strat, model))
    total = math.fsum(a.alpha for a in agents)
    _expect(abs(total - 1.0) <= SHARE_SUM_TOL,
            f"fair shares (alpha) must sum to 1, got {total:.12g}", locate, "agents", 0, "alpha")

    reps = data.get("replications", 1)
    _int(reps, "replications must be an integer", locate, "replications")
    _expect(reps >= 1, "replications must be at least 1", locate, "replications")
    seed = _int(data.get("master_seed", 0), "master_seed must be an integer", locate, "master_seed")

    out = data.get("outputs", {})
    _expect(isinstance(out, dict), "outputs must be a table", locate, "outputs")
    extra = set(out) - {"summary_path", "trace_path"}
    _expect(not extra, f"unknown output keys {sorted(extra)}", locate, "outputs")
    outputs = OutputsSpec(str(out.get("summary_path", "summary.txt")),
                          str(out["trace_path"]) if "trace_path" in out else None)

    checks = data.get("bound_checks", [])
    _expect(isinstance(checks, list), "bound_checks must be a list", locate, "bound_checks")
    from .bounds import BOUND_KINDS
    check_list = []
    for c in checks:
        kind = c if isinstance(c, str) else c.get("kind") if isinstance(c, dict) else None
        _expect(kind in BOUND_KINDS, f"unknown bound kind {kind!r}", locate, "bound_checks")
        check_list.append(c)

    cfg = ExperimentConfig(mechanism, tuple(agents), reps, seed, outputs, tuple(check_list))
    try:
        build_scenario(cfg)
    except ConfigError as exc:
        raise ConfigError(exc.message, exc.line if exc.line is not None else locate("agents")) from None
    except DmmfError as exc:
        raise ConfigError(str(exc), locate("agents")) from None
    return cfg


def loads_config(text: str) -> ExperimentConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        m = re.search(r"line (\d+)", str(exc))
        raise ConfigError(f"TOML syntax error: {exc}", int(m.group(1)) if m else None) from None
    return config_from_dict(data, LineLocator(text))


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return loads_config(text)


# ---------------------------------------------------------------------------
# building runtime objects

def build_strategy(spec: StrategySpec, model: MarkovValueModel | None):
    k = spec.kind
    if k == "beta_aggressive":
        return beta_aggressive(model, spec.beta)
    if k == "state_independent":
        return state_independent(model, spec.beta)
    if k == "always":
        return Always()
    if k == "never":
        return Never()
    if k == "fixed_threshold":
        return FixedThreshold(spec.tau)
    if k == "greedy_blocker":
        return GreedyBlocker(spec.observe or "full_requests", spec.target or 0, spec.duration or 1)
    if k == "win_triggered":
        return WinTriggered(spec.ell, spec.target or 0)
    if k == "kmax_flooder":
        return KmaxFlooder(spec.k)
    if k == "silent":
        return Silent()
    raise ConfigError(f"unknown strategy kind {k!r}")


def build_scenario(cfg: ExperimentConfig) -> Scenario:
    mech = cfg.mechanism_config()
    agents = []
    for a in cfg.agents:
        model = a.model.build() if a.model is not None else None
        agents.append(AgentSetup(build_strategy(a.strategy, model), model))
    return Scenario(mech, tuple(agents))


# ---------------------------------------------------------------------------
# dumping

def _strip_none(d: dict) -> dict:
    return {k: v for k, v in d.items() if v is not None}


def config_to_dict(cfg: ExperimentConfig) -> dict:
    out: dict = {"replications": cfg.replications, "master_seed": cfg.master_seed}
    if cfg.bound_checks:
        out["bound_checks"] = list(cfg.bound_checks)
    out["mechanism"] = _strip_none(asdict(cfg.mechanism))
    out["outputs"] = _strip_none(asdict(cfg.outputs))
    agents = []
    for a in cfg.agents:
        entry: dict = {"alpha": a.alpha, "strategy": _strip_none(asdict(a.strategy))}
        if a.model is not None:
            m = a.model
            if m.dist is not None:
                entry["model"] = {"dist": m.dist}
            else:
                entry["model"] = {
                    "transition": [list(r) for r in m.transition],
                    "states": list(m.states),
                    "initial_from_stationary": m.initial_from_stationary,
                    "initial_state": m.initial_state,
                }
        agents.append(entry)
    out["agents"] = agents
    return out


def dump_config(cfg: ExperimentConfig) -> str:
    return tomli_w.dumps(config_to_dict(cfg))


def with_overrides(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    """Copy of ``cfg`` with top-level fields (or ``horizon``) replaced."""
    horizon = changes.pop("horizon", None)
    if horizon is not None:
        cfg = replace(cfg, mechanism=replace(cfg.mechanism, horizon=horizon))
    return replace(cfg, **changes)
