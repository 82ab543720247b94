"""Simulation geometry: sensing region, beam grid, target trajectories and LOS blockage.

All positions are in meters in a right-handed frame with z up. Azimuth is
measured in the xy-plane from +x toward +y, elevation from the xy-plane.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np


class Vec3(NamedTuple):
    x: float
    y: float
    z: float

    @classmethod
    def of(cls, values) -> "Vec3":
        x, y, z = (float(v) for v in values)
        if not all(math.isfinite(v) for v in (x, y, z)):
            raise ValueError(f"non-finite position {values!r}")
        return cls(x, y, z)

    def __array__(self, dtype=None, copy=None):
        return np.array(tuple(self), dtype=dtype or float)


def distance(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a, float) - np.asarray(b, float)))


TRAJECTORY_KINDS = ("linear", "quadratic", "linear-with-direction-change")


@dataclass(frozen=True)
class TrajectorySpec:
    """Parametric motion of one target.

    ``heading`` is the initial direction of travel (azimuth, rad) in the
    horizontal plane.  The quadratic kind adds a constant lateral
    acceleration ``curvature`` (m/s^2, positive turns left), so the path is a
    parabola in time.  The kinked kind travels along ``heading`` until
    ``kink_time`` and then along ``kink_heading`` at the same speed.
    """

    kind: str
    start: Vec3
    heading: float
    speed: float
    curvature: float = 0.0
    kink_time: float = 0.0
    kink_heading: float = 0.0
    horizon: float = 10.0

    def __post_init__(self):
        if self.kind not in TRAJECTORY_KINDS:
            raise ValueError(f"unknown trajectory kind {self.kind!r}")
        object.__setattr__(self, "start", Vec3.of(self.start))
        if not self.speed >= 0:
            raise ValueError("speed must be >= 0")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.kind == "linear-with-direction-change" and not 0 <= self.kink_time <= self.horizon:
            raise ValueError("kink_time must lie within [0, horizon]")


@dataclass(frozen=True)
class TargetSpec:
    trajectory: TrajectorySpec
    rcs: float = 1.0

    def __post_init__(self):
        if not self.rcs > 0:
            raise ValueError("target rcs must be positive")


@dataclass(frozen=True)
class ScattererSpec:
    position: Vec3
    rcs: float = 10.0

    def __post_init__(self):
        object.__setattr__(self, "position", Vec3.of(self.position))
        if not self.rcs > 0:
            raise ValueError("scatterer rcs must be positive")


@dataclass(frozen=True)
class Box:
    """Axis-aligned box occluder."""

    lo: Vec3
    hi: Vec3

    def __post_init__(self):
        lo, hi = Vec3.of(self.lo), Vec3.of(self.hi)
        if any(a >= b for a, b in zip(lo, hi)):
            raise ValueError("box must have lo < hi on every axis")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    def contains(self, p) -> bool:
        p = np.asarray(p, float)
        return bool(np.all(p >= np.asarray(self.lo)) and np.all(p <= np.asarray(self.hi)))


@dataclass(frozen=True)
class SensingRegion:
    az_lo: float
    az_hi: float
    r_lo: float
    r_hi: float
    elevation: float
    n_beam: int

    def __post_init__(self):
        if not self.az_lo < self.az_hi:
            raise ValueError("region requires az_lo < az_hi")
        if not 0 <= self.r_lo < self.r_hi:
            raise ValueError("region requires 0 <= r_lo < r_hi")
        if self.n_beam < 2:
            raise ValueError("region requires n_beam >= 2")


@dataclass(frozen=True)
class BeamGrid:
    region: SensingRegion
    azimuths: tuple
    elevation: float

    @property
    def width(self) -> float:
        return (self.region.az_hi - self.region.az_lo) / self.region.n_beam

    @property
    def n_beam(self) -> int:
        return len(self.azimuths)

    def angles(self, index: int) -> tuple:
        return self.azimuths[index], self.elevation


def _unit(azimuth: float) -> np.ndarray:
    return np.array([math.cos(azimuth), math.sin(azimuth), 0.0])


def _check_time(spec: TrajectorySpec, t: float) -> None:
    if not 0 <= t <= spec.horizon:
        raise ValueError(f"t={t} outside trajectory horizon [0, {spec.horizon}]")


def target_position(spec: TrajectorySpec, t: float) -> Vec3:
    _check_time(spec, t)
    p0 = np.asarray(spec.start)
    if spec.kind == "linear":
        p = p0 + spec.speed * t * _unit(spec.heading)
    elif spec.kind == "quadratic":
        normal = _unit(spec.heading + math.pi / 2)
        p = p0 + spec.speed * t * _unit(spec.heading) + 0.5 * spec.curvature * t * t * normal
    else:
        tk = spec.kink_time
        if t <= tk:
            p = p0 + spec.speed * t * _unit(spec.heading)
        else:
            p = (p0 + spec.speed * tk * _unit(spec.heading)
                 + spec.speed * (t - tk) * _unit(spec.kink_heading))
    return Vec3.of(p)


def target_velocity(spec: TrajectorySpec, t: float) -> np.ndarray:
    """Velocity (m/s); for the kinked kind the post-kink value is returned at the kink."""
    _check_time(spec, t)
    if spec.kind == "linear":
        return spec.speed * _unit(spec.heading)
    if spec.kind == "quadratic":
        return spec.speed * _unit(spec.heading) + spec.curvature * t * _unit(spec.heading + math.pi / 2)
    heading = spec.heading if t < spec.kink_time else spec.kink_heading
    return spec.speed * _unit(heading)


def build_beam_grid(region: SensingRegion) -> BeamGrid:
    width = (region.az_hi - region.az_lo) / region.n_beam
    centers = tuple(region.az_lo + (i + 0.5) * width for i in range(region.n_beam))
    return BeamGrid(region=region, azimuths=centers, elevation=region.elevation)


def azimuth_and_range(origin, p) -> tuple:
    """Azimuth (rad) and horizontal range (m) of ``p`` seen from ``origin``."""
    d = np.asarray(p, float) - np.asarray(origin, float)
    return math.atan2(d[1], d[0]), math.hypot(d[0], d[1])


def in_region(region: SensingRegion, bs_pos, p) -> bool:
    az, rng = azimuth_and_range(bs_pos, p)
    return region.az_lo <= az <= region.az_hi and region.r_lo <= rng <= region.r_hi


def beam_containing(grid: BeamGrid, bs_pos, p) -> Optional[int]:
    """Index of the azimuth cell holding ``p``, or None outside the region.

    Cells are half-open ``[lo + i*w, lo + (i+1)*w)``; the last one also
    owns the upper sweep edge so the cells partition the region.
    """
    region = grid.region
    if not in_region(region, bs_pos, p):
        return None
    az, _ = azimuth_and_range(bs_pos, p)
    index = int(math.floor((az - region.az_lo) / grid.width))
    return min(max(index, 0), grid.n_beam - 1)


def los_blocked(tg, ue, blocker: Optional[Box]) -> bool:
    """True iff the closed segment tg->ue intersects the box (slab test)."""
    if blocker is None:
        return False
    a = np.asarray(tg, float)
    d = np.asarray(ue, float) - a
    lo, hi = np.asarray(blocker.lo), np.asarray(blocker.hi)
    t0, t1 = 0.0, 1.0
    for axis in range(3):
        if abs(d[axis]) < 1e-15:
            if a[axis] < lo[axis] or a[axis] > hi[axis]:
                return False
            continue
        ta = (lo[axis] - a[axis]) / d[axis]
        tb = (hi[axis] - a[axis]) / d[axis]
        if ta > tb:
            ta, tb = tb, ta
        t0, t1 = max(t0, ta), min(t1, tb)
        if t0 > t1:
            return False
    return True


@dataclass(frozen=True)
class Scene:
    """Everything geometric about one scenario."""

    bs: Vec3
    ue: Vec3
    region: SensingRegion
    targets: tuple
    scatterer: ScattererSpec
    blocker: Optional[Box] = None

    def __post_init__(self):
        object.__setattr__(self, "bs", Vec3.of(self.bs))
        object.__setattr__(self, "ue", Vec3.of(self.ue))
        object.__setattr__(self, "targets", tuple(self.targets))

    @property
    def grid(self) -> BeamGrid:
        return build_beam_grid(self.region)

    def region_centroid(self, height: float = 0.0) -> Vec3:
        """Centroid of the annular sector at the given height."""
        r = self.region
        r_mid = (2.0 / 3.0) * (r.r_hi ** 3 - r.r_lo ** 3) / (r.r_hi ** 2 - r.r_lo ** 2)
        half = 0.5 * (r.az_hi - r.az_lo)
        r_c = r_mid * math.sin(half) / half
        az_c = 0.5 * (r.az_lo + r.az_hi)
        return Vec3(self.bs.x + r_c * math.cos(az_c), self.bs.y + r_c * math.sin(az_c), height)
