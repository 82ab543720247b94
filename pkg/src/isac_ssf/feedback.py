"""Closed-loop sensing feedback protocols: open-loop sweep, e-ARQ and SSF.

Each protocol is a pure step function ``(state, measurement) -> (action,
state')`` plus a thin stateful wrapper used by the scenario runner.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Optional


class Hypothesis(enum.IntEnum):
    H0 = 0
    H1 = 1
    H2 = 2
    H3 = 3

    def __str__(self):
        return self.name


class EArqCategory(enum.IntEnum):
    LOST = 0
    NACK = 1
    ACK = 2

    def __str__(self):
        return self.name


class BeamDirective(str, enum.Enum):
    STAY = "stay"
    NEXT_ADJACENT = "next_adjacent"
    ADJACENT_HIGHER_RESI = "adjacent_higher_resi"
    RESTART = "restart"


class ReportKind(str, enum.Enum):
    BINARY = "binary"
    STATE_ID = "state_id"
    STATE_PLUS_PEAK = "state_plus_peak"
    FULL_MEASUREMENT = "full_measurement"


@dataclass(frozen=True)
class ThresholdVector:
    """SSF thresholds ``eta0 < eta1 < eta2``.

    The optimizer works on ``T = (T1, T2, T3) = (eta2, eta1, eta0)``.
    """

    eta0: float
    eta1: float
    eta2: float

    def __post_init__(self):
        if not self.eta0 < self.eta1 < self.eta2:
            raise ValueError(f"thresholds must satisfy eta0 < eta1 < eta2, got {self}")

    def as_t(self) -> tuple:
        return (self.eta2, self.eta1, self.eta0)

    @classmethod
    def from_t(cls, t) -> "ThresholdVector":
        t1, t2, t3 = (float(v) for v in t)
        return cls(t3, t2, t1)

    @property
    def detection(self) -> float:
        return self.eta2


@dataclass(frozen=True)
class EArqThresholds:
    eta0: float
    eta1: float

    def __post_init__(self):
        if not self.eta0 < self.eta1:
            raise ValueError(f"e-ARQ thresholds must satisfy eta0 < eta1, got {self}")

    def as_t(self) -> tuple:
        return (self.eta1, self.eta0)

    @classmethod
    def from_t(cls, t) -> "EArqThresholds":
        t1, t2 = (float(v) for v in t)
        return cls(t2, t1)

    @property
    def detection(self) -> float:
        return self.eta1


@dataclass(frozen=True)
class ProtocolParams:
    n_beam: int
    p_min: float
    p_max: float
    delta_down: float = 1.0
    delta_up: float = 2.0
    restart_last_detected: bool = False

    def __post_init__(self):
        if self.n_beam < 2:
            raise ValueError("n_beam must be >= 2")
        if not self.p_min <= self.p_max:
            raise ValueError("p_min must not exceed p_max")
        if self.delta_down < 0 or self.delta_up < 0:
            raise ValueError("power steps must be nonnegative")

    def clamp(self, p: float) -> float:
        return min(max(p, self.p_min), self.p_max)


@dataclass(frozen=True)
class ProtocolState:
    beam: int
    power: float
    scanning: bool = True
    previously_detected: bool = False
    direction: int = 1
    last_detected_beam: Optional[int] = None
    # pending neighbour probes of an H2 decision and what they measured so far
    probes: tuple = ()
    probe_resi: tuple = ()


@dataclass(frozen=True)
class FeedbackAction:
    directive: BeamDirective
    power_delta: float
    scanning: Optional[bool]
    report: ReportKind


def classify(resi: float, t: ThresholdVector) -> Hypothesis:
    if resi > t.eta2:
        return Hypothesis.H3
    if resi > t.eta1:
        return Hypothesis.H2
    if resi > t.eta0:
        return Hypothesis.H1
    return Hypothesis.H0


def earq_category(resi: float, t: EArqThresholds) -> EArqCategory:
    if resi > t.eta1:
        return EArqCategory.ACK
    if resi > t.eta0:
        return EArqCategory.NACK
    return EArqCategory.LOST


def _move(state: ProtocolState, params: ProtocolParams, delta: float, **changes) -> ProtocolState:
    return replace(state, power=params.clamp(state.power + delta), **changes)


def _next_adjacent(state: ProtocolState, params: ProtocolParams) -> int:
    return (state.beam + state.direction) % params.n_beam


def _commit_probe(state: ProtocolState, params: ProtocolParams, origin: int) -> tuple:
    best_beam, _ = max(state.probe_resi, key=lambda br: (br[1], -abs(br[0] - origin)))
    direction = 1 if best_beam > origin else -1
    action = FeedbackAction(BeamDirective.ADJACENT_HIGHER_RESI, 0.0, False, ReportKind.STATE_ID)
    return action, replace(state, beam=best_beam, direction=direction, scanning=False,
                           probes=(), probe_resi=())


def _lock(state: ProtocolState, params: ProtocolParams) -> tuple:
    action = FeedbackAction(BeamDirective.STAY, -params.delta_down, False, ReportKind.STATE_PLUS_PEAK)
    return action, _move(state, params, -params.delta_down, scanning=False, previously_detected=True,
                         last_detected_beam=state.beam, probes=(), probe_resi=())


def ssf_step(state: ProtocolState, h: Hypothesis, params: ProtocolParams,
             resi: float = math.nan, resi_neighbors: Optional[tuple] = None) -> tuple:
    """One SSF decision for the hypothesis observed on ``state.beam``.

    ``resi_neighbors`` is ``(lower, upper)`` last-known RESI of beam-1 and
    beam+1, either entry None when unknown.  Unknown neighbours are probed
    over the following scans at the current power before committing to the
    stronger one.
    """
    h = Hypothesis(h)
    if state.probes:
        # probes = (origin, beam being measured now, beams still to visit...)
        origin, remaining = state.probes[0], state.probes[2:]
        if h == Hypothesis.H3:
            return _lock(state, params)
        state = replace(state, probe_resi=state.probe_resi + ((state.beam, resi),))
        if remaining:
            action = FeedbackAction(BeamDirective.ADJACENT_HIGHER_RESI, 0.0, False, ReportKind.STATE_ID)
            return action, replace(state, beam=remaining[0], probes=(origin,) + remaining)
        return _commit_probe(state, params, origin)

    if h == Hypothesis.H3:
        return _lock(state, params)

    if h == Hypothesis.H2:
        b = state.beam
        state = _move(state, params, -params.delta_down, scanning=False)
        neighbors = resi_neighbors or (None, None)
        known, unknown = [], []
        for nb, value in zip((b - 1, b + 1), neighbors):
            if 0 <= nb < params.n_beam:
                (unknown if value is None else known).append((nb, value))
        # probe along the sweep direction first
        unknown.sort(key=lambda item: -state.direction * item[0])
        state = replace(state, probe_resi=tuple(known))
        if not unknown:
            action, state = _commit_probe(state, params, b)
            return replace(action, power_delta=-params.delta_down), state
        order = tuple(nb for nb, _ in unknown)
        action = FeedbackAction(BeamDirective.ADJACENT_HIGHER_RESI, -params.delta_down, False,
                                ReportKind.STATE_PLUS_PEAK)
        return action, replace(state, beam=order[0], probes=(b,) + order)

    if h == Hypothesis.H1:
        action = FeedbackAction(BeamDirective.NEXT_ADJACENT, -params.delta_down, True, ReportKind.STATE_ID)
        return action, _move(state, params, -params.delta_down, beam=_next_adjacent(state, params),
                             scanning=True)

    if state.previously_detected:
        target = 0
        if params.restart_last_detected and state.last_detected_beam is not None:
            target = state.last_detected_beam
        action = FeedbackAction(BeamDirective.RESTART, params.delta_up, True, ReportKind.BINARY)
        return action, _move(state, params, params.delta_up, beam=target, scanning=True,
                             previously_detected=False, direction=1)
    action = FeedbackAction(BeamDirective.NEXT_ADJACENT, -params.delta_down, True, ReportKind.BINARY)
    return action, _move(state, params, -params.delta_down, beam=_next_adjacent(state, params),
                         scanning=True)


def earq_step(state: ProtocolState, resi: float, t: EArqThresholds, params: ProtocolParams) -> tuple:
    category = earq_category(resi, t)
    if category == EArqCategory.ACK:
        action = FeedbackAction(BeamDirective.STAY, -params.delta_down, False, ReportKind.BINARY)
        return action, _move(state, params, -params.delta_down, scanning=False, previously_detected=True)
    if category == EArqCategory.NACK:
        return FeedbackAction(BeamDirective.STAY, 0.0, False, ReportKind.BINARY), state
    action = FeedbackAction(BeamDirective.NEXT_ADJACENT, 0.0, True, ReportKind.BINARY)
    return action, replace(state, beam=(state.beam + 1) % params.n_beam, scanning=True)


def openloop_step(state: ProtocolState, params: ProtocolParams) -> tuple:
    action = FeedbackAction(BeamDirective.NEXT_ADJACENT, 0.0, True, ReportKind.FULL_MEASUREMENT)
    return action, replace(state, beam=(state.beam + 1) % params.n_beam)


# --- stateful wrappers driven by the scenario runner -------------------------------------------

@dataclass
class OpenLoopProtocol:
    params: ProtocolParams
    detection_threshold: float
    state: ProtocolState = None
    name: str = field(default="openloop", init=False)

    def __post_init__(self):
        if self.state is None:
            self.state = ProtocolState(beam=0, power=self.params.p_max)

    def label(self, resi: float) -> str:
        return "-"

    def detected(self, resi: float, in_beam: bool) -> bool:
        return in_beam and resi > self.detection_threshold

    def step(self, resi: float, scan: int) -> FeedbackAction:
        action, self.state = openloop_step(self.state, self.params)
        return action


@dataclass
class EArqProtocol:
    params: ProtocolParams
    thresholds: EArqThresholds
    state: ProtocolState = None
    name: str = field(default="earq", init=False)

    def __post_init__(self):
        if self.state is None:
            self.state = ProtocolState(beam=0, power=self.params.p_max)

    @property
    def detection_threshold(self) -> float:
        return self.thresholds.eta1

    def label(self, resi: float) -> str:
        return str(earq_category(resi, self.thresholds))

    def detected(self, resi: float, in_beam: bool) -> bool:
        return resi > self.thresholds.eta1

    def step(self, resi: float, scan: int) -> FeedbackAction:
        action, self.state = earq_step(self.state, resi, self.thresholds, self.params)
        return action


@dataclass
class SsfProtocol:
    params: ProtocolParams
    thresholds: ThresholdVector
    neighbor_memory: int = 0
    state: ProtocolState = None
    name: str = field(default="ssf", init=False)

    def __post_init__(self):
        if self.state is None:
            self.state = ProtocolState(beam=0, power=self.params.p_max)
        self._seen = {}

    @property
    def detection_threshold(self) -> float:
        return self.thresholds.eta2

    def label(self, resi: float) -> str:
        return str(classify(resi, self.thresholds))

    def detected(self, resi: float, in_beam: bool) -> bool:
        return resi > self.thresholds.eta2

    def _recent(self, beam: int, scan: int) -> Optional[float]:
        seen = self._seen.get(beam)
        if seen is None or scan - seen[0] > self.neighbor_memory:
            return None
        return seen[1]

    def step(self, resi: float, scan: int) -> FeedbackAction:
        b = self.state.beam
        neighbors = (self._recent(b - 1, scan), self._recent(b + 1, scan))
        self._seen[b] = (scan, resi)
        h = classify(resi, self.thresholds)
        action, self.state = ssf_step(self.state, h, self.params, resi, neighbors)
        return action


def make_protocol(name: str, params: ProtocolParams, thresholds, neighbor_memory: int = 0):
    if name == "ssf":
        return SsfProtocol(params, thresholds, neighbor_memory)
    if name == "earq":
        return EArqProtocol(params, thresholds)
    if name == "openloop":
        return OpenLoopProtocol(params, float(thresholds))
    raise ValueError(f"unknown protocol {name!r}")
