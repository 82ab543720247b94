"""Steering vectors, path loss and the per-subcarrier BS->target and target->UE channels."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .scene import ScattererSpec, distance

SPEED_OF_LIGHT = 299_792_458.0


@dataclass(frozen=True)
class ArrayGeometry:
    """Uniform planar array.

    ``rows`` stack along elevation, ``cols`` along azimuth.  ``spacing`` is in
    wavelengths.  ``boresight`` is the global azimuth of the array normal;
    angles handed to :func:`steering_vector` are global and rotated into the
    array frame here.
    """

    rows: int
    cols: int
    spacing: float = 0.5
    boresight: float = 0.0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("array needs rows, cols >= 1")
        if not self.spacing > 0:
            raise ValueError("element spacing must be positive")

    @property
    def size(self) -> int:
        return self.rows * self.cols


class Angle2D(NamedTuple):
    azimuth: float
    elevation: float


@dataclass(frozen=True)
class PathLoss:
    value: float
    wavelength: float

    def __post_init__(self):
        if not self.value > 0:
            raise ValueError("path loss must be positive")

    @property
    def amplitude(self) -> float:
        return math.sqrt(self.value)


@dataclass(frozen=True)
class ChannelVector:
    coeffs: np.ndarray
    q: int
    delay: float


def wrap_angle(a):
    return (np.asarray(a) + np.pi) % (2 * np.pi) - np.pi


def angle_between(src, dst) -> Angle2D:
    d = np.asarray(dst, float) - np.asarray(src, float)
    return Angle2D(math.atan2(d[1], d[0]), math.atan2(d[2], math.hypot(d[0], d[1])))


def steering_vector(geom: ArrayGeometry, angle) -> np.ndarray:
    """Far-field response, element (m, n) flattened row-major.

    Phase is ``2*pi*spacing*(m*sin(el) + n*cos(el)*sin(az))`` with az taken
    relative to the boresight, i.e. ``pi*(...)`` at half-wavelength spacing.
    """
    az = float(wrap_angle(angle[0] - geom.boresight))
    el = float(angle[1])
    m = np.arange(geom.rows)[:, None]
    n = np.arange(geom.cols)[None, :]
    phase = 2 * np.pi * geom.spacing * (m * math.sin(el) + n * math.cos(el) * math.sin(az))
    return np.exp(1j * phase).ravel()


def _positive(**kwargs) -> None:
    for name, value in kwargs.items():
        if not value > 0:
            raise ValueError(f"{name} must be positive, got {value}")


def friis_gain(wavelength: float, d: float) -> PathLoss:
    _positive(wavelength=wavelength, d=d)
    return PathLoss(wavelength ** 2 / (16 * math.pi ** 2 * d ** 2), wavelength)


def bistatic_gain_los(wavelength: float, rcs: float, d_tg_ue: float) -> PathLoss:
    _positive(wavelength=wavelength, rcs=rcs, d_tg_ue=d_tg_ue)
    return PathLoss(rcs * wavelength ** 2 / (16 * math.pi ** 2 * d_tg_ue ** 2), wavelength)


def bistatic_gain_nlos(wavelength: float, rcs: float, rcs_mp: float, d_tg_mp: float,
                       d_ue_mp: float) -> PathLoss:
    _positive(wavelength=wavelength, rcs=rcs, rcs_mp=rcs_mp, d_tg_mp=d_tg_mp, d_ue_mp=d_ue_mp)
    value = (rcs * rcs_mp * wavelength ** 4
             / (16 ** 2 * math.pi ** 4 * d_tg_mp ** 2 * d_ue_mp ** 2))
    return PathLoss(value, wavelength)


def _subcarrier_phase(q: int, w_sub: float, tau: float) -> complex:
    if q < 1:
        raise ValueError("subcarrier index q starts at 1")
    return complex(np.exp(-2j * np.pi * (q - 1) * w_sub * tau))


def bs_target_channel(q: int, geom_bs: ArrayGeometry, bs_pos, target_pos, wavelength: float,
                      w_sub: float) -> ChannelVector:
    d = distance(bs_pos, target_pos)
    tau = d / SPEED_OF_LIGHT
    beta = friis_gain(wavelength, d)
    alpha = steering_vector(geom_bs, angle_between(bs_pos, target_pos))
    return ChannelVector(beta.amplitude * _subcarrier_phase(q, w_sub, tau) * alpha, q, tau)


def target_ue_channel(q: int, geom_ue: ArrayGeometry, target_pos, rcs: float, ue_pos,
                      scatterer: ScattererSpec, blocked: bool, wavelength: float,
                      w_sub: float) -> tuple:
    """LOS and NLOS (via the scatterer) components of the target->UE channel.

    The LOS component is the zero vector when ``blocked``; its delay field
    still carries the geometric LOS delay.
    """
    d_los = distance(target_pos, ue_pos)
    tau_los = d_los / SPEED_OF_LIGHT
    if blocked:
        los = np.zeros(geom_ue.size, complex)
    else:
        beta = bistatic_gain_los(wavelength, rcs, d_los)
        los = (beta.amplitude * _subcarrier_phase(q, w_sub, tau_los)
               * steering_vector(geom_ue, angle_between(ue_pos, target_pos)))

    mp = scatterer.position
    d_tg_mp, d_ue_mp = distance(target_pos, mp), distance(ue_pos, mp)
    tau_nlos = (d_tg_mp + d_ue_mp) / SPEED_OF_LIGHT
    beta_nlos = bistatic_gain_nlos(wavelength, rcs, scatterer.rcs, d_tg_mp, d_ue_mp)
    nlos = (beta_nlos.amplitude * _subcarrier_phase(q, w_sub, tau_nlos)
            * steering_vector(geom_ue, angle_between(ue_pos, mp)))
    return ChannelVector(los, q, tau_los), ChannelVector(nlos, q, tau_nlos)
