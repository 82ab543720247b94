"""CSV and JSON writers.  Floats are written with ``repr`` so reruns are byte-identical."""

from __future__ import annotations

import csv
import json
from pathlib import Path

TRACE_HEADER = ("scan", "time_s", "beam", "hypothesis", "resi", "p_used_dbm", "p_budget_dbm",
                "tg_in_region", "tg_in_beam", "report_kind")
METRICS_HEADER = ("protocol", "threshold_method", "p_budget_dbm", "p_consumed_dbm", "p_det",
                  "latency_scans", "latency_s", "realloc_ratio", "seed_count")
SEED_HEADER = ("protocol", "threshold_method", "p_budget_dbm", "seed", "p_consumed_dbm", "p_det",
               "latency_scans", "latency_censored", "realloc_ratio", "lock_cycles")


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "1" if value else "0"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _write(path, header, rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([fmt(v) for v in row])
    return path


def write_trace_csv(path, trace) -> Path:
    rows = ((r.scan, float(r.time_s), r.beam, r.hypothesis, float(r.resi), float(r.p_used_dbm),
             float(r.p_budget_dbm), bool(r.tg_in_region), bool(r.tg_in_beam), r.report_kind)
            for r in trace.records)
    return _write(path, TRACE_HEADER, rows)


def write_metrics_csv(path, result) -> Path:
    rows = ((r.protocol, r.threshold_method, r.p_budget_dbm, r.p_consumed_dbm, r.p_det, r.latency_scans,
             r.latency_s, r.realloc_ratio, r.seed_count) for r in result.rows())
    return _write(path, METRICS_HEADER, rows)


def write_seed_metrics_csv(path, result) -> Path:
    rows = []
    for key in result.keys():
        cell = result.cells[key]
        for seed, m in zip(cell.seeds, cell.metrics):
            rows.append((key.protocol, key.method, key.budget_dbm, seed, m.p_consumed_dbm, m.p_det,
                         m.latency.mean_scans, m.latency.censored, m.realloc_ratio, m.lock_cycles))
    return _write(path, SEED_HEADER, rows)


def write_thresholds_csv(path, result) -> Path:
    rows = []
    for key in result.keys():
        th = result.cells[key].thresholds
        if th is None:
            continue
        t = th.as_t()
        rows.append((key.protocol, key.method, key.budget_dbm, *(float(v) for v in t)))
    n = max((len(r) - 3 for r in rows), default=0)
    return _write(path, ("protocol", "threshold_method", "p_budget_dbm") + tuple(f"T{i + 1}" for i in range(n)), rows)


def write_failures(path, result) -> Path:
    rows = [(c.key.protocol, c.key.method, c.key.budget_dbm, c.error) for c in result.failures()]
    return _write(path, ("protocol", "threshold_method", "p_budget_dbm", "error"), rows)


def write_metadata(path, cfg, seeds, extra=None) -> Path:
    from .. import __version__
    meta = {"version": __version__, "config_hash": cfg.fingerprint(), "seeds": list(seeds),
            "optimizer": {k: (repr(v) if isinstance(v, float) else v) for k, v in cfg.to_dict()["optimizer"].items()}}
    if extra:
        meta.update(extra)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path
