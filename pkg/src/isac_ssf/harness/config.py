"""Simulation configuration: dataclasses, TOML loading and validation."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ..channel import ArrayGeometry
from ..feedback import EArqThresholds, ThresholdVector
from ..phy import OfdmConfig
from ..scene import Box, Scene, ScattererSpec, SensingRegion, TargetSpec, TrajectorySpec, Vec3

PROTOCOLS = ("ssf", "earq", "openloop")


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending key."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class ArraysConfig:
    bs_rows: int = 1
    bs_cols: int = 32
    ue_rows: int = 4
    ue_cols: int = 4
    spacing: float = 0.5


@dataclass(frozen=True)
class TargetConfig:
    kind: str = "linear"
    start: tuple = (-38.16, 23.85, 1.5)
    heading_deg: float = 58.0
    speed: float = 3.0
    curvature: float = 0.0
    kink_time: float = 0.0
    kink_heading_deg: float = 0.0
    rcs: float = 1.0


@dataclass(frozen=True)
class SceneConfig:
    duration: float = 10.0
    bs: tuple = (0.0, 0.0, 10.0)
    ue: tuple = (80.0, 0.0, 1.5)
    sweep_deg: tuple = (45.0, 135.0)
    range_m: tuple = (20.0, 120.0)
    n_beam: int = 20
    beam_elevation_deg: float = -10.0
    targets: tuple = (TargetConfig(),)
    scatterer: tuple = (40.0, 60.0, 5.0)
    scatterer_rcs: float = 10.0
    blocker_lo: Optional[tuple] = (19.7, 11.2, 0.0)
    blocker_hi: Optional[tuple] = (23.7, 15.2, 8.0)


@dataclass(frozen=True)
class ChannelConfig:
    noise_figure_db: float = 6.0
    temperature_k: float = 290.0
    nu_d: float = 50.0
    link_gain_db: float = 78.0


@dataclass(frozen=True)
class DetectorConfig:
    n_del: int = 10
    n_dop: int = 10


@dataclass(frozen=True)
class ProtocolConfig:
    p_min_dbm: float = -20.0
    p_max_dbm: float = -3.0
    max_backoff_db: float = math.inf
    delta_down: float = 1.0
    delta_up: float = 2.0
    restart_last_detected: bool = True
    neighbor_memory: int = 0
    ssf_thresholds: tuple = (3.0, 5.0, 8.0)
    earq_thresholds: tuple = (3.0, 8.0)
    openloop_threshold: float = 6.0


@dataclass(frozen=True)
class OptimizerSettings:
    mu0: float = 0.1
    tau_decay: float = 0.5
    epsilon: float = 1e-3
    fd_step: float = 0.05
    t_min_scale: float = 0.5
    t_max_scale: float = 2.0
    max_iter: int = 40
    n_eval_seeds: int = 8
    armijo: float = 1e-4


@dataclass(frozen=True)
class ExperimentConfig:
    seeds: tuple = (1, 2, 3, 4, 5)
    n_budgets: int = 8
    realloc_reference: str = "budget"


@dataclass(frozen=True)
class SimConfig:
    arrays: ArraysConfig = field(default_factory=ArraysConfig)
    ofdm: OfdmConfig = field(default_factory=OfdmConfig)
    scene: SceneConfig = field(default_factory=SceneConfig)
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    optimizer: OptimizerSettings = field(default_factory=OptimizerSettings)
    experiment: ExperimentConfig = field(default_factory=ExperimentConfig)

    # -- derived objects -------------------------------------------------------------------------
    @property
    def n_scans(self) -> int:
        return int(round(self.scene.duration / self.ofdm.scan_duration))

    @property
    def budgets(self) -> tuple:
        p = self.protocol
        n = self.experiment.n_budgets
        if n == 1:
            return (p.p_max_dbm,)
        step = (p.p_max_dbm - p.p_min_dbm) / (n - 1)
        return tuple(round(p.p_min_dbm + i * step, 9) for i in range(n))

    def physics_key(self) -> tuple:
        return (self.arrays, self.ofdm, self.scene, self.channel, self.detector)

    def region(self) -> SensingRegion:
        s = self.scene
        return SensingRegion(math.radians(s.sweep_deg[0]), math.radians(s.sweep_deg[1]),
                             s.range_m[0], s.range_m[1], math.radians(s.beam_elevation_deg), s.n_beam)

    def build_scene(self) -> Scene:
        s = self.scene
        targets = []
        for t in s.targets:
            traj = TrajectorySpec(kind=t.kind, start=Vec3.of(t.start), heading=math.radians(t.heading_deg),
                                  speed=t.speed, curvature=t.curvature, kink_time=t.kink_time,
                                  kink_heading=math.radians(t.kink_heading_deg), horizon=s.duration)
            targets.append(TargetSpec(traj, t.rcs))
        blocker = None
        if s.blocker_lo is not None and s.blocker_hi is not None:
            blocker = Box(Vec3.of(s.blocker_lo), Vec3.of(s.blocker_hi))
        return Scene(bs=Vec3.of(s.bs), ue=Vec3.of(s.ue), region=self.region(), targets=targets,
                     scatterer=ScattererSpec(Vec3.of(s.scatterer), s.scatterer_rcs), blocker=blocker)

    def bs_array(self) -> ArrayGeometry:
        s = self.scene
        boresight = math.radians(0.5 * (s.sweep_deg[0] + s.sweep_deg[1]))
        return ArrayGeometry(self.arrays.bs_rows, self.arrays.bs_cols, self.arrays.spacing, boresight)

    def ue_array(self, scene: Scene) -> ArrayGeometry:
        c = scene.region_centroid()
        boresight = math.atan2(c.y - scene.ue.y, c.x - scene.ue.x)
        return ArrayGeometry(self.arrays.ue_rows, self.arrays.ue_cols, self.arrays.spacing, boresight)

    def thresholds_for(self, protocol: str):
        p = self.protocol
        if protocol == "ssf":
            return ThresholdVector(*p.ssf_thresholds)
        if protocol == "earq":
            return EArqThresholds(*p.earq_thresholds)
        if protocol == "openloop":
            return float(p.openloop_threshold)
        raise ConfigError("protocol", f"unknown protocol {protocol!r}")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, default=_json_default)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def replace(self, **sections) -> "SimConfig":
        return dataclasses.replace(self, **sections)


def _json_default(obj):
    if isinstance(obj, float) and math.isinf(obj):
        return "inf"
    raise TypeError(type(obj))


# -- loading -----------------------------------------------------------------------------------

_SECTIONS = {
    "arrays": ArraysConfig,
    "ofdm": OfdmConfig,
    "scene": SceneConfig,
    "channel": ChannelConfig,
    "detector": DetectorConfig,
    "protocol": ProtocolConfig,
    "optimizer": OptimizerSettings,
    "experiment": ExperimentConfig,
}


def _tupleize(value):
    if isinstance(value, list):
        return tuple(_tupleize(v) for v in value)
    return value


def _coerce(section: str, cls, raw: dict):
    if not isinstance(raw, dict):
        raise ConfigError(section, "expected a table")
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in raw.items():
        if key not in known:
            raise ConfigError(f"{section}.{key}", "unknown key")
        if section == "scene" and key == "targets":
            if not isinstance(value, list) or not value:
                raise ConfigError("scene.targets", "need at least one [[scene.targets]] table")
            value = tuple(_coerce(f"scene.targets[{i}]", TargetConfig, t) for i, t in enumerate(value))
        elif isinstance(value, str) and value in ("inf", "+inf"):
            value = math.inf
        else:
            value = _tupleize(value)
        kwargs[key] = value
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(section, str(exc)) from exc


def config_from_dict(data: dict) -> SimConfig:
    sections = {}
    for key, value in data.items():
        if key not in _SECTIONS:
            raise ConfigError(key, "unknown section")
        sections[key] = _coerce(key, _SECTIONS[key], value)
    cfg = SimConfig(**sections)
    validate(cfg)
    return cfg


def load_config(path) -> SimConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError("--config", f"no such file: {path}")
    try:
        with path.open("rb") as fh:
            data = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError("--config", f"cannot parse {path}: {exc}") from exc
    return config_from_dict(data)


def default_config_path():
    return resources.files("isac_ssf") / "data" / "default.toml"


def default_config() -> SimConfig:
    with resources.as_file(default_config_path()) as path:
        return load_config(path)


def _require(cond: bool, field_name: str, message: str) -> None:
    if not cond:
        raise ConfigError(field_name, message)


def _vec(field_name: str, value) -> None:
    _require(isinstance(value, tuple) and len(value) == 3
             and all(isinstance(v, (int, float)) and math.isfinite(v) for v in value),
             field_name, "expected three finite numbers")


def validate(cfg: SimConfig) -> None:
    """Raise ConfigError naming the first field that violates a constraint."""
    a, s, c, d, p, o, e = (cfg.arrays, cfg.scene, cfg.channel, cfg.detector, cfg.protocol,
                           cfg.optimizer, cfg.experiment)
    for name in ("bs_rows", "bs_cols", "ue_rows", "ue_cols"):
        _require(isinstance(getattr(a, name), int) and getattr(a, name) >= 1, f"arrays.{name}", "must be >= 1")
    _require(a.spacing > 0, "arrays.spacing", "must be positive")

    ratio = s.duration / cfg.ofdm.scan_duration
    _require(s.duration > 0, "scene.duration", "must be positive")
    _require(abs(ratio - round(ratio)) < 1e-9 and round(ratio) >= 1, "scene.duration",
             "T_S / (N_sym * T_sym) must be a positive integer")
    for name in ("bs", "ue", "scatterer"):
        _vec(f"scene.{name}", getattr(s, name))
    _require(len(s.sweep_deg) == 2 and s.sweep_deg[0] < s.sweep_deg[1], "scene.sweep_deg", "need lo < hi")
    _require(-180 <= s.sweep_deg[0] and s.sweep_deg[1] <= 180, "scene.sweep_deg", "must lie in [-180, 180]")
    _require(len(s.range_m) == 2 and 0 <= s.range_m[0] < s.range_m[1], "scene.range_m", "need 0 <= lo < hi")
    _require(isinstance(s.n_beam, int) and s.n_beam >= 2, "scene.n_beam", "must be >= 2")
    _require(s.scatterer_rcs > 0, "scene.scatterer_rcs", "must be positive")
    if (s.blocker_lo is None) != (s.blocker_hi is None):
        raise ConfigError("scene.blocker_lo", "blocker_lo and blocker_hi go together")
    if s.blocker_lo is not None:
        _vec("scene.blocker_lo", s.blocker_lo)
        _vec("scene.blocker_hi", s.blocker_hi)
        _require(all(lo < hi for lo, hi in zip(s.blocker_lo, s.blocker_hi)), "scene.blocker_hi",
                 "must exceed blocker_lo on every axis")
    for i, t in enumerate(s.targets):
        _vec(f"scene.targets[{i}].start", t.start)
        _require(t.speed >= 0, f"scene.targets[{i}].speed", "must be >= 0")
        _require(t.rcs > 0, f"scene.targets[{i}].rcs", "must be positive")
        _require(t.kind in ("linear", "quadratic", "linear-with-direction-change"),
                 f"scene.targets[{i}].kind", f"unknown trajectory kind {t.kind!r}")
        if t.kind == "linear-with-direction-change":
            _require(0 <= t.kink_time <= s.duration, f"scene.targets[{i}].kink_time", "must lie in [0, T_S]")

    _require(c.temperature_k > 0, "channel.temperature_k", "must be positive")
    _require(c.nu_d >= 0, "channel.nu_d", "must be >= 0")
    _require(d.n_del >= 1, "detector.n_del", "must be >= 1")
    _require(d.n_dop >= 1, "detector.n_dop", "must be >= 1")

    _require(p.p_min_dbm < p.p_max_dbm, "protocol.p_min_dbm", "must be below p_max_dbm")
    _require(p.max_backoff_db >= 0, "protocol.max_backoff_db", "must be >= 0")
    _require(p.delta_down >= 0, "protocol.delta_down", "must be >= 0")
    _require(p.delta_up >= 0, "protocol.delta_up", "must be >= 0")
    _require(p.neighbor_memory >= 0, "protocol.neighbor_memory", "must be >= 0")
    try:
        ThresholdVector(*p.ssf_thresholds)
    except (TypeError, ValueError) as exc:
        raise ConfigError("protocol.ssf_thresholds", str(exc)) from exc
    try:
        EArqThresholds(*p.earq_thresholds)
    except (TypeError, ValueError) as exc:
        raise ConfigError("protocol.earq_thresholds", str(exc)) from exc

    _require(o.mu0 > 0, "optimizer.mu0", "must be positive")
    _require(0 < o.tau_decay < 1, "optimizer.tau_decay", "must lie in (0, 1)")
    _require(o.fd_step > 0, "optimizer.fd_step", "must be positive")
    _require(0 < o.t_min_scale < o.t_max_scale, "optimizer.t_min_scale", "need 0 < t_min_scale < t_max_scale")
    _require(o.max_iter >= 1, "optimizer.max_iter", "must be >= 1")
    _require(o.n_eval_seeds >= 1, "optimizer.n_eval_seeds", "must be >= 1")

    _require(len(e.seeds) >= 1, "experiment.seeds", "need at least one seed")
    _require(e.n_budgets >= 1, "experiment.n_budgets", "must be >= 1")
    _require(e.realloc_reference in ("budget", "total"), "experiment.realloc_reference",
             "must be 'budget' or 'total'")
