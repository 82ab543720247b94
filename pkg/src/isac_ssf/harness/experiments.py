"""Experiment grids: power sweeps, MAP calibration and MAP-vs-IPT thresholding comparison."""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from ..feedback import EArqThresholds, ThresholdVector
from ..metrics import (
    MetricError,
    ScenarioMetrics,
    average_sensing_latency,
    consumed_power_dbm,
    detection_probability,
    lock_cycles,
    mean_or_none,
    power_reallocation_ratio,
)
from ..optimizer import (
    HypothesisFit,
    MapResult,
    OptimizationTrace,
    OptimizerConfig,
    fit_hypothesis_distributions,
    map_thresholds,
    optimize_thresholds,
)
from ..phy import dbm_to_watt, watt_to_dbm
from .config import PROTOCOLS, ConfigError, SimConfig
from .runner import run_scenario

THREADS_ENV = "ISAC_SSF_THREADS"

# calibration classes, by where the probed beam sits relative to the target
ABSENT, ELSEWHERE, ADJACENT, IN_BEAM = 0, 1, 2, 3
# e-ARQ only separates lost / NACK / ACK, so absent and elsewhere share a class
EARQ_GROUPS = ((ABSENT, ELSEWHERE), (ADJACENT,), (IN_BEAM,))


def worker_count() -> int:
    raw = os.environ.get(THREADS_ENV)
    if raw is None or raw == "":
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError(THREADS_ENV, f"expected a positive integer, got {raw!r}") from None
    if n < 1:
        raise ConfigError(THREADS_ENV, f"expected a positive integer, got {raw!r}")
    return n


def scenario_metrics_for(cfg: SimConfig, trace) -> ScenarioMetrics:
    """Metrics of one trace, honouring the configured reallocation reference."""
    reference = cfg.protocol.p_max_dbm if cfg.experiment.realloc_reference == "total" else None
    return ScenarioMetrics(
        p_det=detection_probability(trace),
        latency=average_sensing_latency(trace),
        realloc_ratio=power_reallocation_ratio(trace, reference),
        p_consumed_dbm=consumed_power_dbm(trace),
        lock_cycles=lock_cycles(trace),
    )


def thresholds_from_t(protocol: str, t):
    """Protocol threshold object from a descending optimizer vector."""
    if protocol == "ssf":
        return ThresholdVector.from_t(t)
    if protocol == "earq":
        return EArqThresholds.from_t(t)
    raise ConfigError("protocol", f"thresholds are only optimized for ssf and earq, not {protocol!r}")


# -- grid cells ------------------------------------------------------------------------------------

@dataclass(frozen=True)
class CellKey:
    protocol: str
    method: str
    budget_dbm: float


@dataclass(frozen=True)
class CellResult:
    key: CellKey
    seeds: tuple
    metrics: tuple = ()               # one ScenarioMetrics per seed
    thresholds: object = None
    error: Optional[str] = None

    @property
    def failed(self) -> bool:
        return self.error is not None


@dataclass(frozen=True)
class MetricsRow:
    protocol: str
    threshold_method: str
    p_budget_dbm: float
    p_consumed_dbm: Optional[float]
    p_det: Optional[float]
    latency_scans: Optional[float]
    latency_s: Optional[float]
    realloc_ratio: Optional[float]
    seed_count: int
    p_det_min: Optional[float] = None
    p_det_max: Optional[float] = None


def aggregate(cell: CellResult, scan_duration: float) -> MetricsRow:
    k = cell.key
    if cell.failed or not cell.metrics:
        return MetricsRow(k.protocol, k.method, k.budget_dbm, None, None, None, None, None, 0)
    ms = cell.metrics
    pdets = [m.p_det for m in ms]
    lat = mean_or_none([m.latency.mean_scans for m in ms])
    consumed = float(watt_to_dbm(np.mean(dbm_to_watt([m.p_consumed_dbm for m in ms]))))
    return MetricsRow(
        protocol=k.protocol, threshold_method=k.method, p_budget_dbm=k.budget_dbm,
        p_consumed_dbm=consumed, p_det=float(np.mean(pdets)),
        latency_scans=lat, latency_s=None if lat is None else lat * scan_duration,
        realloc_ratio=float(np.mean([m.realloc_ratio for m in ms])), seed_count=len(ms),
        p_det_min=float(min(pdets)), p_det_max=float(max(pdets)),
    )


@dataclass
class ExperimentResult:
    cells: dict = field(default_factory=dict)          # CellKey -> CellResult
    scan_duration: float = 0.01
    optimizer_traces: dict = field(default_factory=dict)   # (protocol, budget) -> OptimizationTrace
    map_fits: dict = field(default_factory=dict)           # (protocol, budget) -> (HypothesisFit, MapResult)

    def add(self, cell: CellResult) -> None:
        self.cells[cell.key] = cell

    def keys(self) -> list:
        return sorted(self.cells, key=lambda k: (k.protocol, k.method, k.budget_dbm))

    def rows(self) -> list:
        return [aggregate(self.cells[k], self.scan_duration) for k in self.keys()]

    def row(self, protocol: str, budget_dbm: float, method: str = "fixed") -> MetricsRow:
        return aggregate(self.cells[CellKey(protocol, method, budget_dbm)], self.scan_duration)

    def failures(self) -> list:
        return [c for c in self.cells.values() if c.failed]

    def series(self, protocol: str, method: str, attr: str) -> list:
        keys = [k for k in self.keys() if k.protocol == protocol and k.method == method]
        return [getattr(aggregate(self.cells[k], self.scan_duration), attr) for k in keys]


def _run_cell(cfg: SimConfig, key: CellKey, thresholds, seeds: tuple) -> CellResult:
    try:
        metrics = tuple(
            scenario_metrics_for(cfg, run_scenario(cfg, key.protocol, thresholds, seed=s, budget_dbm=key.budget_dbm))
            for s in seeds
        )
    except (ArithmeticError, MetricError, ValueError) as exc:
        return CellResult(key, seeds, (), thresholds, f"{type(exc).__name__}: {exc}")
    return CellResult(key, seeds, metrics, thresholds)


def _run_cell_job(job):
    return _run_cell(*job)


def run_cells(jobs: Sequence[tuple], workers: Optional[int] = None) -> list:
    """Evaluate ``(cfg, key, thresholds, seeds)`` jobs, in a process pool when ``workers > 1``."""
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(jobs) <= 1:
        return [_run_cell(*job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(_run_cell_job, jobs))


# -- sweeps ------------------------------------------------------------------------------------------

def sweep_power(cfg: SimConfig, protocols: Sequence[str] = PROTOCOLS, budgets: Optional[Sequence[float]] = None,
                seeds: Optional[Sequence[int]] = None, workers: Optional[int] = None) -> ExperimentResult:
    """Every (protocol, budget) cell over every seed with the configured thresholds."""
    budgets = tuple(cfg.budgets if budgets is None else budgets)
    seeds = tuple(cfg.experiment.seeds if seeds is None else seeds)
    if not budgets or not seeds or not protocols:
        raise ConfigError("sweep", "protocols, budgets and seeds must all be nonempty")
    jobs = [(cfg, CellKey(p, "fixed", float(b)), cfg.thresholds_for(p), seeds) for p in protocols for b in budgets]
    result = ExperimentResult(scan_duration=cfg.ofdm.scan_duration)
    for cell in run_cells(jobs, workers):
        result.add(cell)
    return result


def evaluate_pdet(cfg: SimConfig, protocol: str, thresholds, seeds: Sequence[int], budget_dbm: float) -> float:
    """Seed-averaged detection probability; the fixed seed set gives common random numbers."""
    values = [detection_probability(run_scenario(cfg, protocol, thresholds, seed=s, budget_dbm=budget_dbm))
              for s in seeds]
    return float(np.mean(values))


# -- MAP calibration -----------------------------------------------------------------------------------

def calibration_samples(cfg: SimConfig, seeds: Sequence[int], budget_dbm: float) -> tuple:
    """Labelled RESI samples from open-loop sweeps.

    Each scan is labelled by the probed beam's position relative to the
    target: absent, elsewhere in the region, adjacent beam, or the target's
    own beam.
    """
    labels, values = [], []
    for s in seeds:
        trace = run_scenario(cfg, "openloop", seed=s, budget_dbm=budget_dbm)
        for r in trace.records:
            if r.tg_beam is None:
                label = ABSENT
            elif r.beam == r.tg_beam:
                label = IN_BEAM
            elif abs(r.beam - r.tg_beam) == 1:
                label = ADJACENT
            else:
                label = ELSEWHERE
            labels.append(label)
            values.append(r.resi)
    return np.array(labels), np.array(values)


def map_calibration(cfg: SimConfig, protocol: str, seeds: Sequence[int], budget_dbm: float) -> tuple:
    """Return ``(thresholds, HypothesisFit, MapResult)`` for ``protocol`` at one budget."""
    labels, values = calibration_samples(cfg, seeds, budget_dbm)
    fit = fit_hypothesis_distributions(labels, values, n_classes=4)
    if protocol == "earq":
        fit = fit.merged(EARQ_GROUPS)
    elif protocol != "ssf":
        raise ConfigError("protocol", f"MAP calibration is defined for ssf and earq, not {protocol!r}")
    result = map_thresholds(fit)
    return thresholds_from_t(protocol, result.descending()), fit, result


def optimizer_config(cfg: SimConfig, t_start) -> OptimizerConfig:
    o = cfg.optimizer
    t = np.asarray(t_start, float)
    return OptimizerConfig(mu0=o.mu0, tau_decay=o.tau_decay, epsilon=o.epsilon, h=o.fd_step,
                           t_min=tuple(o.t_min_scale * t), t_max=tuple(o.t_max_scale * t),
                           max_iter=o.max_iter, armijo=o.armijo)


def ipt_thresholds(cfg: SimConfig, protocol: str, start, seeds: Sequence[int], budget_dbm: float) -> tuple:
    """Interior-point search from ``start``; returns ``(thresholds, OptimizationTrace)``."""
    t0 = start.as_t()

    def pdet(t):
        return evaluate_pdet(cfg, protocol, thresholds_from_t(protocol, t), seeds, budget_dbm)

    best, trace = optimize_thresholds(optimizer_config(cfg, t0), t0, pdet)
    return thresholds_from_t(protocol, best), trace


def _compare_one(job) -> tuple:
    cfg, protocol, budget, seeds = job
    try:
        start, fit, mres = map_calibration(cfg, protocol, seeds, budget)
        tuned, trace = ipt_thresholds(cfg, protocol, start, seeds, budget)
    except (ArithmeticError, MetricError, ValueError) as exc:
        msg = f"{type(exc).__name__}: {exc}"
        return (CellResult(CellKey(protocol, "map", budget), seeds, error=msg),
                CellResult(CellKey(protocol, "ipt", budget), seeds, error=msg), None, None)
    cells = tuple(_run_cell(cfg, CellKey(protocol, method, budget), th, seeds)
                  for method, th in (("map", start), ("ipt", tuned)))
    return cells + ((fit, mres), trace)


def compare_thresholding(cfg: SimConfig, protocols: Sequence[str] = ("ssf", "earq"),
                         seeds: Optional[Sequence[int]] = None, budgets: Optional[Sequence[float]] = None,
                         workers: Optional[int] = None) -> ExperimentResult:
    """MAP and IPT rows for each protocol and budget.

    Calibration, optimization and reporting share one seed set, so the IPT
    row can never fall below the MAP row it started from.
    """
    budgets = tuple(cfg.budgets if budgets is None else budgets)
    seeds = tuple(cfg.experiment.seeds if seeds is None else seeds)
    jobs = [(cfg, p, float(b), seeds) for p in protocols for b in budgets]
    workers = worker_count() if workers is None else workers
    if workers <= 1 or len(jobs) <= 1:
        outputs = [_compare_one(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            outputs = list(pool.map(_compare_one, jobs))
    result = ExperimentResult(scan_duration=cfg.ofdm.scan_duration)
    for (cfg_, protocol, budget, _), (map_cell, ipt_cell, fit, trace) in zip(jobs, outputs):
        result.add(map_cell)
        result.add(ipt_cell)
        if fit is not None:
            result.map_fits[protocol, budget] = fit
            result.optimizer_traces[protocol, budget] = trace
    return result
