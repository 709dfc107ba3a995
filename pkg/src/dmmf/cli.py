"""Command-line front end.

    dmmf simulate CONFIG [--seed S] [--reps R] [--jobs J] [--out-dir D]
    dmmf ideal SPEC --grid a:step:b [--out-dir D] [--out FILE]
    dmmf bounds PARAMS [--out-dir D] [--out FILE]
    dmmf config-dump CONFIG [--out FILE]

Exit codes: 0 success, 2 configuration or input error, 3 pathwise
invariant violation.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np
import tomli

from .config import dump_config, load_config, parse_dist, with_overrides
from .errors import ConfigError, DmmfError
from .ideal import ideal_multi, ideal_single, verify_concavity
from .report import (
    TRACE_HEADER,
    bound_table,
    compare_bounds,
    fmt,
    run_collect,
    summary_text,
    write_text,
)
from .value_models import DemandDistribution

EXIT_OK, EXIT_CONFIG, EXIT_INVARIANT = 0, 2, 3


def _fail(msg: str, path: str | None = None) -> int:
    where = f"{path}: " if path else ""
    print(f"error: {where}{msg}", file=sys.stderr)
    return EXIT_CONFIG


def parse_grid(text: str) -> list[float]:
    """``a:step:b`` inclusive of ``b`` up to round-off."""
    try:
        a, step, b = (float(x) for x in text.split(":"))
    except ValueError:
        raise ConfigError(f"grid must look like a:step:b, got {text!r}") from None
    if not step > 0:
        raise ConfigError("grid step must be positive")
    n = int(np.floor((b - a) / step + 1e-9)) + 1 if b >= a else 0
    grid = [round(a + i * step, 12) for i in range(n)]
    if not grid:
        raise ConfigError("grid is empty")
    if grid[0] < 0 or grid[-1] > 1:
        raise ConfigError("grid values must lie in [0, 1]")
    return grid


def cmd_simulate(args) -> int:
    try:
        cfg = load_config(args.config)
        changes = {}
        if args.seed is not None:
            changes["master_seed"] = args.seed
        if args.reps is not None:
            if args.reps < 1:
                raise ConfigError("--reps must be at least 1")
            changes["replications"] = args.reps
        cfg = with_overrides(cfg, **changes)
        scenario = cfg.scenario()
    except ConfigError as exc:
        return _fail(str(exc), args.config)
    out_dir = Path(args.out_dir)
    want_trace = cfg.outputs.trace_path is not None
    summary, chunks = run_collect(scenario, cfg.replications, cfg.master_seed, args.jobs, want_trace)
    comparisons = compare_bounds(cfg, scenario, summary)
    write_text(out_dir / cfg.outputs.summary_path,
               summary_text(cfg, scenario, summary, comparisons, cfg.master_seed))
    if want_trace:
        path = out_dir / cfg.outputs.trace_path
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            fh.write(TRACE_HEADER + "\n")
            for c in chunks:
                fh.write(c)
    for i, a in enumerate(scenario.agents):
        line = f"agent {i}: util/round={fmt(summary.util_mean[i])} (se {fmt(summary.util_se[i])})"
        for c in comparisons:
            if c.agent == i:
                line += f"  {c.kind}: bound/round={fmt(c.per_round_bound)} ratio={fmt(c.ratio)}"
        print(line)
    bad = int(summary.invariant_violations.sum())
    if bad:
        print(f"pathwise invariant violated in {bad} agent-replications", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


def _load_dist(spec: str):
    p = Path(spec)
    if p.is_file():
        try:
            data = tomli.loads(p.read_text())
        except tomli.TOMLDecodeError as exc:
            raise ConfigError(f"TOML syntax error: {exc}") from None
        return parse_dist(data.get("dist", data))
    return parse_dist(spec)


def cmd_ideal(args) -> int:
    try:
        dist = _load_dist(args.spec)
        grid = parse_grid(args.grid)
    except ConfigError as exc:
        return _fail(str(exc), args.spec)
    multi = isinstance(dist, DemandDistribution)
    rows = [("beta", "v_star", "threshold_or_policy")]
    curve = []
    for b in grid:
        res = ideal_multi(dist, b) if multi else ideal_single(dist, b)
        pol = res.policy
        if multi:
            desc = "rho=" + "|".join(fmt(x) for x in pol.rho)
        else:
            desc = f"tau={fmt(pol.threshold)};atom={fmt(pol.atom_prob)}"
        rows.append((fmt(b), fmt(res.value), desc))
        curve.append((b, res.value))
    path = Path(args.out) if args.out else Path(args.out_dir) / "ideal_curve.csv"
    write_text(path, "\n".join(",".join(r) for r in rows) + "\n")
    if len(curve) >= 3:
        rep = verify_concavity(curve)
        print(f"worst concavity violation: {fmt(rep.worst_violation)}; monotone violation: {fmt(rep.monotone_violation)}")
    print(f"wrote {path}")
    return EXIT_OK


def cmd_bounds(args) -> int:
    try:
        data = tomli.loads(Path(args.params).read_text())
    except (OSError, tomli.TOMLDecodeError) as exc:
        return _fail(str(exc), args.params)
    entries = data.get("rows")
    if not isinstance(entries, list) or not all(isinstance(e, dict) and "kind" in e for e in entries):
        return _fail("expected [[rows]] tables each with a kind", args.params)
    rows = bound_table(entries)
    path = Path(args.out) if args.out else Path(args.out_dir) / "bounds.csv"
    text = "kind,params,coefficient,applicable,condition\n"
    text += "".join(",".join(f'"{c}"' if "," in c else c for c in r) + "\n" for r in rows)
    write_text(path, text)
    print(f"wrote {len(rows)} rows to {path}")
    return EXIT_OK


def cmd_config_dump(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        return _fail(str(exc), args.config)
    text = dump_config(cfg)
    if args.out:
        write_text(Path(args.out), text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dmmf", description="Dynamic max-min fair allocation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run replications of an experiment config")
    sim.add_argument("config")
    sim.add_argument("--seed", type=int, help="override master_seed")
    sim.add_argument("--reps", type=int, help="override replications")
    sim.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    sim.add_argument("--out-dir", default=".")
    sim.set_defaults(func=cmd_simulate)

    ide = sub.add_parser("ideal", help="tabulate the ideal-utility curve")
    ide.add_argument("spec", help="inline distribution spec or a TOML file")
    ide.add_argument("--grid", required=True, help="a:step:b")
    ide.add_argument("--out-dir", default=".")
    ide.add_argument("--out")
    ide.set_defaults(func=cmd_ideal)

    bnd = sub.add_parser("bounds", help="tabulate bound coefficients")
    bnd.add_argument("params")
    bnd.add_argument("--out-dir", default=".")
    bnd.add_argument("--out")
    bnd.set_defaults(func=cmd_bounds)

    dump = sub.add_parser("config-dump", help="print the canonical form of a config")
    dump.add_argument("config")
    dump.add_argument("--out")
    dump.set_defaults(func=cmd_config_dump)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail(str(exc))
    except DmmfError as exc:
        return _fail(str(exc))


if __name__ == "__main__":
    sys.exit(main())
