"""Command line interface.

Exit codes: 0 success, 1 configuration or usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path
from typing import Optional, Sequence

from .config import PROTOCOLS, ConfigError, default_config, load_config
from .experiments import compare_thresholding, ipt_thresholds, map_calibration, sweep_power
from .output import (
    write_failures,
    write_metadata,
    write_metrics_csv,
    write_seed_metrics_csv,
    write_thresholds_csv,
    write_trace_csv,
)
from .runner import run_scenario
from .svg import line_chart

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

PROTOCOL_LABELS = {"ssf": "SSF", "earq": "e-ARQ", "openloop": "Open-loop"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def parse_seeds(text: str) -> tuple:
    """``"1,2,5"`` or ``"1-5"`` or a mix such as ``"1-3,7"``."""
    seeds = []
    try:
        for part in text.split(","):
            part = part.strip()
            if "-" in part[1:]:
                lo, hi = part.split("-", 1) if not part.startswith("-") else (part, "")
                lo, hi = int(lo), int(hi)
                if hi < lo:
                    raise ValueError
                seeds.extend(range(lo, hi + 1))
            else:
                seeds.append(int(part))
    except ValueError:
        raise ConfigError("--seed", f"cannot parse seed list {text!r}") from None
    if not seeds:
        raise ConfigError("--seed", "empty seed list")
    return tuple(seeds)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="isac-ssf", description="Closed-loop bistatic sensing feedback simulator.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    def common(p, protocol_choices=PROTOCOLS, protocol_default=None):
        p.add_argument("--config", help="TOML configuration file (default: shipped defaults)")
        p.add_argument("--seed", help="seed list, e.g. 1-5 or 1,3,7")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--protocol", choices=protocol_choices, default=protocol_default)
        p.add_argument("--format", choices=("csv", "csv+svg"), default="csv")

    p = sub.add_parser("run", help="single scenario, per-scan trace CSV")
    common(p, protocol_default="ssf")
    p.add_argument("--budget", type=float, help="sensing power budget in dBm (default: P_max)")
    common_sweep = sub.add_parser("sweep", help="power sweep over all protocols")
    common(common_sweep)
    p = sub.add_parser("optimize", help="MAP calibration then interior-point threshold search")
    common(p, protocol_choices=("ssf", "earq"), protocol_default="ssf")
    p.add_argument("--budget", type=float, help="sensing power budget in dBm (default: P_max)")
    p = sub.add_parser("compare-thresholds", help="MAP vs IPT thresholds across the power grid")
    common(p, protocol_choices=("ssf", "earq"))
    p = sub.add_parser("validate-config", help="load and check a configuration")
    p.add_argument("--config")
    return parser


def _load(args):
    if args.config is None:
        return default_config()
    return load_config(args.config)


def _seeds(args, cfg, default=None) -> tuple:
    if args.seed is not None:
        return parse_seeds(args.seed)
    return tuple(cfg.experiment.seeds if default is None else default)


def _cmd_run(args, out: Path) -> int:
    cfg = _load(args)
    seeds = _seeds(args, cfg, default=(cfg.experiment.seeds[0],))
    for seed in seeds:
        trace = run_scenario(cfg, args.protocol, seed=seed, budget_dbm=args.budget)
        path = write_trace_csv(out / f"trace_{args.protocol}_seed{seed}.csv", trace)
        print(path)
    return EXIT_OK


def _plot_family(out: Path, result, protocols, method, attr, name, ylabel):
    series = [(PROTOCOL_LABELS[p], result.series(p, method, "p_consumed_dbm"), result.series(p, method, attr))
              for p in protocols]
    line_chart(out / name, ylabel + " vs consumed sensing power", "consumed sensing power (dBm)", ylabel, series)


def _cmd_sweep(args, out: Path) -> int:
    cfg = _load(args)
    seeds = _seeds(args, cfg)
    protocols = (args.protocol,) if args.protocol else PROTOCOLS
    result = sweep_power(cfg, protocols, seeds=seeds)
    print(write_metrics_csv(out / "metrics.csv", result))
    write_seed_metrics_csv(out / "metrics_seeds.csv", result)
    write_metadata(out / "metadata.json", cfg, seeds, {"command": "sweep"})
    if args.format == "csv+svg":
        _plot_family(out, result, protocols, "fixed", "p_det", "pdet.svg", "detection probability")
        _plot_family(out, result, protocols, "fixed", "latency_scans", "latency.svg", "sensing latency (scans)")
        _plot_family(out, result, protocols, "fixed", "realloc_ratio", "realloc.svg", "power reallocation ratio")
    return _report_failures(out, result)


def _cmd_optimize(args, out: Path) -> int:
    cfg = _load(args)
    seeds = _seeds(args, cfg, default=tuple(range(1, cfg.optimizer.n_eval_seeds + 1)))
    budget = cfg.protocol.p_max_dbm if args.budget is None else float(args.budget)
    start, _, mres = map_calibration(cfg, args.protocol, seeds, budget)
    tuned, trace = ipt_thresholds(cfg, args.protocol, start, seeds, budget)
    trace.to_csv(out / f"optimizer_trace_{args.protocol}.csv")
    best = max(trace.records, key=lambda r: (-r.f, -r.iteration))
    with (out / f"thresholds_{args.protocol}.csv").open("w", encoding="utf-8") as fh:
        n = len(start.as_t())
        fh.write("threshold_method,p_budget_dbm," + ",".join(f"T{i + 1}" for i in range(n)) + ",p_det\n")
        fh.write(f"map,{budget!r}," + ",".join(repr(float(v)) for v in start.as_t())
                 + f",{-trace.records[0].f!r}\n")
        fh.write(f"ipt,{budget!r}," + ",".join(repr(float(v)) for v in tuned.as_t()) + f",{-best.f!r}\n")
    write_metadata(out / "metadata.json", cfg, seeds,
                   {"command": "optimize", "protocol": args.protocol, "budget_dbm": budget,
                    "map_fallback": list(mres.fallback), "simulation_calls": trace.calls})
    print(f"MAP T = {tuple(round(v, 4) for v in start.as_t())}  p_det = {-trace.records[0].f:.4f}")
    print(f"IPT T = {tuple(round(v, 4) for v in tuned.as_t())}  p_det = {-best.f:.4f}")
    return EXIT_OK


def _cmd_compare(args, out: Path) -> int:
    cfg = _load(args)
    seeds = _seeds(args, cfg)
    protocols = (args.protocol,) if args.protocol else ("ssf", "earq")
    result = compare_thresholding(cfg, protocols, seeds=seeds)
    print(write_metrics_csv(out / "thresholding.csv", result))
    write_seed_metrics_csv(out / "thresholding_seeds.csv", result)
    write_thresholds_csv(out / "thresholds.csv", result)
    for (protocol, budget), trace in sorted(result.optimizer_traces.items()):
        trace.to_csv(out / "optimizer" / f"{protocol}_{budget:+.2f}dBm.csv")
    write_metadata(out / "metadata.json", cfg, seeds, {"command": "compare-thresholds"})
    if args.format == "csv+svg":
        series = [(f"{PROTOCOL_LABELS[p]} {m.upper()}", result.series(p, m, "p_consumed_dbm"),
                   result.series(p, m, "p_det")) for p in protocols for m in ("map", "ipt")]
        line_chart(out / "thresholding.svg", "MAP vs IPT thresholds", "consumed sensing power (dBm)",
                   "detection probability", series)
    return _report_failures(out, result)


def _report_failures(out: Path, result) -> int:
    failed = result.failures()
    if failed:
        write_failures(out / "failures.csv", result)
        for c in failed:
            print(f"cell {c.key.protocol}/{c.key.method}/{c.key.budget_dbm} failed: {c.error}", file=sys.stderr)
    return EXIT_OK


def _cmd_validate(args) -> int:
    cfg = _load(args)
    print(f"ok: {cfg.n_scans} scans, {len(cfg.budgets)} budgets, fingerprint {cfg.fingerprint()}")
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage() + "isac-ssf: error: a subcommand is required")
        if args.command == "validate-config":
            return _cmd_validate(args)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        handler = {"run": _cmd_run, "sweep": _cmd_sweep, "optimize": _cmd_optimize,
                   "compare-thresholds": _cmd_compare}[args.command]
        return handler(args, out)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - any runtime failure maps to exit 2
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
