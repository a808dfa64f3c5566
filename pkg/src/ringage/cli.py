"""Command-line front end.

Every subcommand resolves one configuration (JSON file, then flag
overrides), writes its results under a single output location and pairs
them with a ``*.manifest.json`` recording everything needed to rerun.

Exit codes: 0 success, 2 usage, 3 configuration, 4 domain or statistic
error, 5 simulation failure, 6 file I/O.
"""

from __future__ import annotations

import argparse
import copy
import csv
import datetime as dt
import json
import logging
import math
import sys
from pathlib import Path
from typing import Any, Sequence

from . import __version__
from .engine import simulate
from .errors import ConfigError, DomainError, RingAgeError, UndefinedStatistic
from .experiments import (
    VARIANTS,
    KRule,
    SweepPlan,
    TSampler,
    age_scaling,
    baseline_config,
    default_rules,
    lemma1_check,
    preemption_study,
    regime_study,
    run_sweep,
)
from .instrument import write_records_csv
from .network import RingConfig, build_ring
from .renewal import DistributionSpec


EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_DOMAIN = 4
EXIT_RUNTIME = 5
EXIT_IO = 6

MANIFEST_SCHEMA = "ringage.manifest/1"
DEFAULT_N = 16
DEFAULT_NS = "16,64,256,1024"


# --- configuration ----------------------------------------------------------


def load_config(path: str | None) -> dict[str, Any]:
    """Read a JSON config; a run manifest is accepted in place of one."""
    if path is None:
        return {}
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from None
    if isinstance(data, dict) and str(data.get("schema", "")).startswith("ringage.manifest"):
        data = data.get("config") or {}
    if not isinstance(data, dict):
        raise ConfigError(f"config in {path} must be a JSON object")
    return data


def _parse_spec(text: str, flag: str) -> dict[str, Any]:
    try:
        return DistributionSpec.parse(text).to_dict()
    except ConfigError as exc:
        raise ConfigError(f"{flag}: {exc}") from None


def resolve_config(args: argparse.Namespace, default_direction: str = "uni") -> RingConfig:
    """Config file, then flags. Seed precedence: --seed > sim.seed > 0."""
    data = copy.deepcopy(load_config(args.config))
    ring = data.setdefault("ring", {})
    sim = data.setdefault("sim", {})
    if not isinstance(ring, dict) or not isinstance(sim, dict):
        raise ConfigError("sections 'ring' and 'sim' must be objects")
    ring.setdefault("n", DEFAULT_N)
    ring.setdefault("direction", default_direction)
    if getattr(args, "n", None) is not None:
        ring["n"] = args.n
    if args.direction is not None:
        ring["direction"] = args.direction
    if args.lambda_s is not None:
        ring["lambda_s"] = args.lambda_s
    if args.source is not None:
        data["source"] = _parse_spec(args.source, "--source")
    if args.edges is not None:
        data["edges"] = _parse_spec(args.edges, "--edges")
    if getattr(args, "horizon", None) is not None:
        sim["horizon"] = args.horizon
    if args.seed is not None:
        sim["seed"] = args.seed
    if args.tracked is not None:
        data["track"] = {"nodes": args.tracked}
    config = RingConfig.from_dict(data)
    variant = getattr(args, "variant", None)
    if variant is not None:
        config = config.with_(edge_law=baseline_config(variant).edge_law)
    return config


# --- output helpers ---------------------------------------------------------


def _clean(value: Any) -> Any:
    """JSON-safe copy: non-finite floats become null."""
    if isinstance(value, float):
        return value if math.isfinite(value) else None
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    return value


def write_json(path: Path, payload: dict[str, Any]) -> None:
    path.write_text(json.dumps(_clean(payload), indent=2) + "\n", encoding="utf-8")


def write_manifest(path: Path, command: str, seed: int, config: dict[str, Any], started: str, **extra: Any) -> None:
    write_json(path, {
        "schema": MANIFEST_SCHEMA,
        "subcommand": command,
        "version": __version__,
        "seed": seed,
        "started": started,
        "config": config,
        **extra,
    })


def _csv_value(value: Any) -> str:
    if value is None or (isinstance(value, float) and not math.isfinite(value)):
        return ""
    return repr(value) if isinstance(value, float) else str(value)


def write_rows(path: Path, columns: Sequence[str], rows: Sequence[dict[str, Any]]) -> None:
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_csv_value(row.get(c)) for c in columns])


def out_dir(path: str) -> Path:
    d = Path(path)
    d.mkdir(parents=True, exist_ok=True)
    return d


# --- subcommands ------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace, started: str) -> int:
    config = resolve_config(args)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    stem = out.with_suffix("")
    trace_path = Path(f"{stem}.trace.csv") if args.trace else None
    if trace_path is not None:
        with trace_path.open("w", newline="", encoding="utf-8") as fh:
            result = simulate(config, engine=args.engine, trace=fh, max_records=args.max_records)
    else:
        result = simulate(config, engine=args.engine, max_records=args.max_records)
    with out.open("w", newline="", encoding="utf-8") as fh:
        write_records_csv((r for node in config.tracked for r in result.ages.records(node)), fh)
    ages = {}
    for node in config.tracked:
        try:
            ages[node] = result.ages.time_average_age(node)
        except UndefinedStatistic:
            ages[node] = None
    write_json(Path(f"{stem}.summary.json"), {
        "schema": "ringage.simulate/1",
        **result.summary.to_dict(),
        "time_average_age": ages,
        "acceptances": {node: result.ages.acceptances(node) for node in config.tracked},
    })
    write_manifest(Path(f"{stem}.manifest.json"), "simulate", config.seed, config.to_dict(), started,
                   parameters={"engine": args.engine, "trace": bool(args.trace), "max_records": args.max_records})
    for node, age in ages.items():
        print(f"node {node}: time-average age {age if age is None else f'{age:.6g}'}, "
              f"{result.ages.acceptances(node)} acceptances")
    return EXIT_OK


def _plan(args: argparse.Namespace, default_direction: str = "uni", rules=None) -> SweepPlan:
    config = resolve_config(args, default_direction)
    try:
        ns = tuple(int(x) for x in args.ns.split(","))
    except ValueError:
        raise ConfigError(f"--ns must be a comma-separated list of integers, got {args.ns!r}") from None
    return SweepPlan(
        base=config,
        ns=ns,
        trials=args.trials,
        horizon_multiple=None if args.horizon_multiple <= 0 else args.horizon_multiple,
        tracked=config.tracked,
        rules=default_rules() if rules is None else rules,
        engine=args.engine,
    )


REPLICA_KEYS = ("time_average_age", "acceptances", "mean_peak", "mean_valley", "mean_transit",
                "mean_inter_arrival", "mean_hops", "long_path_fraction")
SWEEP_COLUMNS = ("row", "n", "trial", "node", "seed", "horizon", *REPLICA_KEYS,
                 *(k + "_se" for k in REPLICA_KEYS))


def _sweep_rows(result) -> list[dict[str, Any]]:
    rows = []
    nodes = list(next(iter(result.replicas.values()))["nodes"])
    for (n, trial), rep in result.replicas.items():
        for node in nodes:
            row = {"row": "replica", "n": n, "trial": trial, "node": node, "seed": rep["seed"], "horizon": rep["horizon"]}
            row.update({k: rep["nodes"][node].get(k) for k in REPLICA_KEYS})
            rows.append(row)
    for node in nodes:
        for summary in result.summary(node):
            rows.append({"row": "summary", "node": node, "seed": result.plan.seed,
                         "horizon": result.plan.horizon(summary["n"]), **summary})
    return rows


def cmd_sweep(args: argparse.Namespace, started: str) -> int:
    plan = _plan(args)
    result = run_sweep(plan, args.jobs)
    d = out_dir(args.out_dir)
    write_rows(d / "sweep.csv", SWEEP_COLUMNS, _sweep_rows(result))
    try:
        fit = age_scaling(result).to_dict()
        fit_error = None
    except DomainError as exc:
        fit, fit_error = None, str(exc)
    write_json(d / "sweep.json", {
        "schema": "ringage.sweep/1",
        "plan": plan.to_dict(),
        "fit": fit,
        "fit_error": fit_error,
        "summary": result.summary(),
    })
    write_manifest(d / "sweep.manifest.json", "sweep", plan.seed, plan.base.to_dict(), started, plan=plan.to_dict())
    if fit is not None:
        print(f"slope {fit['slope']:.4f}, R^2 {fit['r2']:.4f}")
    else:
        print(f"no fit: {fit_error}")
    return EXIT_OK


REGIME_COLUMNS = ("rule", "n", "k", "window_fraction", "window_fraction_se", "mean_wait", "mean_wait_se",
                  "analytic_wait", "mean_inter_arrival_inside", "mean_inter_arrival_inside_se")


def cmd_regimes(args: argparse.Namespace, started: str) -> int:
    if args.rules:
        rules = tuple(KRule.parse(text) for text in args.rules.split(","))
    else:
        rules = default_rules(args.c)
    plan = _plan(args, rules=rules)
    result = run_sweep(plan, args.jobs)
    rows = regime_study(result)
    d = out_dir(args.out_dir)
    write_rows(d / "regimes.csv", REGIME_COLUMNS, rows)
    write_json(d / "regimes.json", {"schema": "ringage.regimes/1", "plan": plan.to_dict(), "rows": rows})
    write_manifest(d / "regimes.manifest.json", "regimes", plan.seed, plan.base.to_dict(), started, plan=plan.to_dict())
    for row in rows:
        print(f"{row['rule']:>18} n={row['n']:<5} k={row['k']:<4} fraction {row['window_fraction']:.3f}  "
              f"wait {row['mean_wait']:.3f} (analytic {row['analytic_wait']:.3f})")
    return EXIT_OK


PREEMPT_COLUMNS = ("n", "long_path_fraction", "long_path_fraction_se", "mean_hops", "mean_hops_se")


def cmd_preempt(args: argparse.Namespace, started: str) -> int:
    plan = _plan(args, default_direction="bi")
    if plan.base.direction != "bi":
        raise ConfigError("preempt needs a bi-directional ring (ring.direction = 'bi')")
    study = preemption_study(run_sweep(plan, args.jobs))
    d = out_dir(args.out_dir)
    write_rows(d / "preempt.csv", PREEMPT_COLUMNS, study["rows"])
    write_json(d / "preempt.json", {"schema": "ringage.preempt/1", "plan": plan.to_dict(), **study})
    write_manifest(d / "preempt.manifest.json", "preempt", plan.seed, plan.base.to_dict(), started, plan=plan.to_dict())
    for row in study["rows"]:
        print(f"n={row['n']:<5} long-path fraction {row['long_path_fraction']:.4f}  mean hops {row['mean_hops']:.3f}")
    if study["hops_fit"] is not None:
        print(f"hops exponent {study['hops_fit']['slope']:.4f}")
    return EXIT_OK


def cmd_lemma1(args: argparse.Namespace, started: str) -> int:
    spec = DistributionSpec.parse(args.dist)
    sampler = TSampler.parse(args.t)
    seed = 0 if args.seed is None else args.seed
    report = lemma1_check(spec, sampler, trials=args.trials, seed=seed)
    d = out_dir(args.out_dir)
    write_json(d / "lemma1.json", {"schema": "ringage.lemma1/1", **report.to_dict()})
    params = {"dist": str(spec), "t": str(sampler), "trials": args.trials}
    write_manifest(d / "lemma1.manifest.json", "lemma1", seed, params, started)
    print(f"E[N(T)] = {report.mean_count:.5g} +/- {report.se_count:.2g}, bounds ({report.lower:.5g}, "
          f"{report.upper:.5g}), {'inside' if report.inside else 'OUTSIDE'}")
    return EXIT_OK


def cmd_topo(args: argparse.Namespace, started: str) -> int:
    config = resolve_config(args)
    d = out_dir(args.out_dir)
    (d / "topology.csv").write_text(build_ring(config).to_csv(), encoding="utf-8")
    write_manifest(d / "topology.manifest.json", "topo", config.seed, config.to_dict(), started)
    print(f"{config.n} nodes, {len(build_ring(config).edges)} edges")
    return EXIT_OK


# --- argument parsing -------------------------------------------------------


def _node_list(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated node indices, got {text!r}") from None


def _ring_args(p: argparse.ArgumentParser, single: bool) -> None:
    g = p.add_argument_group("ring configuration (flags override --config)")
    g.add_argument("--config", help="JSON config with sections ring/source/edges/sim/track, or a run manifest")
    g.add_argument("--seed", type=int, help="master seed (default: sim.seed from config, else 0)")
    if single:
        g.add_argument("--n", type=int, help=f"ring size (default {DEFAULT_N})")
        g.add_argument("--horizon", type=float, help="simulated time (default 1000)")
    g.add_argument("--direction", choices=["uni", "bi"], help="ring direction (default uni; bi for preempt)")
    g.add_argument("--lambda-s", dest="lambda_s", type=float, help="total source delivery rate (default 1)")
    g.add_argument("--source", help="source generation law, e.g. exponential:1 (default)")
    g.add_argument("--edges", help="homogeneous edge law, e.g. gamma:2,0.5 (default exponential:1)")
    g.add_argument("--tracked", type=_node_list, help="tracked nodes, comma-separated (default 1)")
    g.add_argument("--engine", choices=["fast", "python"], default="fast",
                   help="compiled kernel or reference engine (default fast)")


def _sweep_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ns", default=DEFAULT_NS, help=f"ring sizes (default {DEFAULT_NS})")
    p.add_argument("--trials", type=int, default=8, help="replicas per ring size (default 8)")
    p.add_argument("--horizon-multiple", dest="horizon_multiple", type=float, default=1200.0,
                   help="horizon = multiple * sqrt(n) / rate scale; <= 0 uses sim.horizon (default 1200)")
    p.add_argument("--variant", choices=VARIANTS, help="replace the edge law with a baseline variant")
    p.add_argument("--jobs", type=int, help="worker processes (default $RINGAGE_JOBS, else CPU count)")
    p.add_argument("--out-dir", dest="out_dir", default=".", help="directory for all outputs (default .)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ringage", description="Version-age simulation of gossip on rings.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log per-replica progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("simulate", help="run one replica")
    _ring_args(p, single=True)
    p.add_argument("--out", default="run.csv", help="records CSV; summary, manifest and trace go beside it")
    p.add_argument("--trace", action="store_true", help="also write the full event trace (reference engine)")
    p.add_argument("--max-records", dest="max_records", type=int, help="keep a reservoir of this many records per node")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", help="age scaling study with log-log fit")
    _ring_args(p, single=False)
    _sweep_args(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("regimes", help="spatial window study")
    _ring_args(p, single=False)
    _sweep_args(p)
    p.add_argument("--rules", help="comma-separated window rules such as 'ceil(n^0.5),2*ceil(n^0.5)'")
    p.add_argument("--c", type=float, default=2.0, help="coefficient of the ceil(c*n^0.5) default rule (default 2)")
    p.set_defaults(func=cmd_regimes)

    p = sub.add_parser("preempt", help="long-path preemption study on the bi-directional ring")
    _ring_args(p, single=False)
    _sweep_args(p)
    p.set_defaults(func=cmd_preempt)

    p = sub.add_parser("lemma1", help="Monte Carlo check of the renewal count sandwich at a random horizon")
    p.add_argument("--dist", default="exponential:1", help="renewal law (default exponential:1)")
    p.add_argument("--t", default="const:10", help="horizon sampler: const:X, exp:MEAN or sum:K:LAW (default const:10)")
    p.add_argument("--trials", type=int, default=100_000, help="Monte Carlo paths (default 100000)")
    p.add_argument("--seed", type=int, help="seed (default 0)")
    p.add_argument("--out-dir", dest="out_dir", default=".", help="directory for all outputs (default .)")
    p.set_defaults(func=cmd_lemma1)

    p = sub.add_parser("topo", help="dump the ring's edges and their laws")
    _ring_args(p, single=True)
    p.add_argument("--out-dir", dest="out_dir", default=".", help="directory for all outputs (default .)")
    p.set_defaults(func=cmd_topo)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code in (0, None) else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    started = dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")
    try:
        return args.func(args, started)
    except ConfigError as exc:
        print(f"ringage: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, UndefinedStatistic) as exc:
        print(f"ringage: domain error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN
    except RingAgeError as exc:
        print(f"ringage: simulation error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except OSError as exc:
        print(f"ringage: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
