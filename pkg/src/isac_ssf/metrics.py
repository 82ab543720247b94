"""Detection probability, sensing latency and power-reallocation ratio from scan traces."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .phy import dbm_to_watt, watt_to_dbm


class MetricError(ValueError):
    pass


@dataclass(frozen=True)
class ScanRecord:
    scan: int
    time_s: float
    beam: int
    hypothesis: str
    resi: float
    p_used_dbm: float
    p_budget_dbm: float
    tg_in_region: bool
    tg_in_beam: bool
    report_kind: str
    # beam cell holding the target (None outside the region); not serialized
    tg_beam: Optional[int] = field(default=None, compare=False)


@dataclass
class ScenarioTrace:
    protocol: str
    records: list
    detection_threshold: float
    scan_duration: float
    seed: int = 0
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)


@dataclass(frozen=True)
class LatencyStats:
    mean_scans: Optional[float]
    mean_seconds: Optional[float]
    completed: int
    censored: int


@dataclass(frozen=True)
class ScenarioMetrics:
    p_det: float
    latency: LatencyStats
    realloc_ratio: float
    p_consumed_dbm: float
    lock_cycles: int


def _on(record: ScanRecord, threshold: float, protocol: str) -> bool:
    """Detected state used for latency and lock counting (H3, ACK, or in-beam hit for open loop)."""
    above = record.resi > threshold
    return above and record.tg_in_beam if protocol == "openloop" else above


def detection_probability(trace: ScenarioTrace, threshold: Optional[float] = None) -> float:
    thr = trace.detection_threshold if threshold is None else threshold
    denom = sum(r.tg_in_region for r in trace.records)
    if denom == 0:
        raise MetricError("target never inside the sensing region; detection probability undefined")
    hits = sum(r.tg_in_beam and r.resi > thr for r in trace.records)
    return hits / denom


def average_sensing_latency(trace: ScenarioTrace, threshold: Optional[float] = None) -> LatencyStats:
    """Scans from region entry (or loss of the detected state) to the next detected scan.

    The count includes the detecting scan, so detection on the entry scan
    is a latency of one scan.  Intervals cut short by the target leaving the
    region or by the end of the trace are censored.
    """
    thr = trace.detection_threshold if threshold is None else threshold
    lengths, censored = [], 0
    start = None
    prev_in, prev_on = False, False
    for rec in trace.records:
        on = _on(rec, thr, trace.protocol)
        if not rec.tg_in_region:
            if start is not None:
                censored += 1
                start = None
            prev_in, prev_on = False, False
            continue
        if start is None and (not prev_in or (prev_on and not on)):
            start = rec.scan
        if start is not None and on:
            lengths.append(rec.scan - start + 1)
            start = None
        prev_in, prev_on = True, on
    if start is not None:
        censored += 1
    if not lengths:
        return LatencyStats(None, None, 0, censored)
    mean = float(np.mean(lengths))
    return LatencyStats(mean, mean * trace.scan_duration, len(lengths), censored)


def power_reallocation_ratio(trace: ScenarioTrace, reference_dbm: Optional[float] = None) -> float:
    """Mean fraction of the per-scan sensing budget handed back to communications.

    With ``reference_dbm`` the freed power is normalized by that fixed level
    (e.g. the total BS power) instead of the per-scan budget.
    """
    if not trace.records:
        raise MetricError("empty trace")
    used = dbm_to_watt([r.p_used_dbm for r in trace.records])
    budget = dbm_to_watt([r.p_budget_dbm for r in trace.records])
    denom = budget if reference_dbm is None else dbm_to_watt(reference_dbm)
    return float(np.mean((budget - used) / denom))


def lock_cycles(trace: ScenarioTrace, threshold: Optional[float] = None) -> int:
    """Number of detected -> not-detected transitions while the target is in the region."""
    thr = trace.detection_threshold if threshold is None else threshold
    cycles, prev = 0, False
    for rec in trace.records:
        on = _on(rec, thr, trace.protocol)
        if rec.tg_in_region and prev and not on:
            cycles += 1
        prev = on and rec.tg_in_region
    return cycles


def consumed_power_dbm(trace: ScenarioTrace) -> float:
    return float(watt_to_dbm(np.mean(dbm_to_watt([r.p_used_dbm for r in trace.records]))))


def scenario_metrics(trace: ScenarioTrace) -> ScenarioMetrics:
    return ScenarioMetrics(
        p_det=detection_probability(trace),
        latency=average_sensing_latency(trace),
        realloc_ratio=power_reallocation_ratio(trace),
        p_consumed_dbm=consumed_power_dbm(trace),
        lock_cycles=lock_cycles(trace),
    )


def mean_or_none(values: Sequence[Optional[float]]) -> Optional[float]:
    vals = [v for v in values if v is not None and math.isfinite(v)]
    return float(np.mean(vals)) if vals else None
