"""Delay-Doppler filter bank, peak search and RESI."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .channel import SPEED_OF_LIGHT
from .phy import OfdmConfig, ReceivedFrame
from .scene import SensingRegion, distance


@dataclass(frozen=True)
class DelayDopplerGrid:
    delays: np.ndarray
    dopplers: np.ndarray

    def __post_init__(self):
        for name in ("delays", "dopplers"):
            bins = np.asarray(getattr(self, name), float)
            if bins.ndim != 1 or bins.size < 1:
                raise ValueError(f"{name} needs at least one bin")
            if np.any(np.diff(bins) <= 0):
                raise ValueError(f"{name} must be strictly increasing")
            object.__setattr__(self, name, bins)

    @property
    def shape(self) -> tuple:
        return self.delays.size, self.dopplers.size

    def bin(self, flat_index: int) -> tuple:
        i, j = divmod(int(flat_index), self.dopplers.size)
        return float(self.delays[i]), float(self.dopplers[j])


@dataclass(frozen=True)
class ResiMeasurement:
    resi: float
    tau_star: float
    nu_star: float
    beam: int = 0
    scan: int = 0


def _linspace_bins(lo: float, hi: float, n: int) -> np.ndarray:
    if n == 1 or hi == lo:
        return np.array([0.5 * (lo + hi)])
    return np.linspace(lo, hi, n)


def region_path_lengths(region: SensingRegion, bs, ue, scatterer_pos, height: float,
                        n_r: int = 64, n_az: int = 64) -> np.ndarray:
    """Total BS->p->UE and BS->p->scatterer->UE path lengths sampled over the region."""
    az = np.linspace(region.az_lo, region.az_hi, n_az)
    rr = np.linspace(region.r_lo, region.r_hi, n_r)
    A, R = np.meshgrid(az, rr)
    pts = np.stack([bs[0] + R * np.cos(A), bs[1] + R * np.sin(A), np.full_like(A, height)], -1)
    pts = pts.reshape(-1, 3)
    d_bs = np.linalg.norm(pts - np.asarray(bs, float), axis=1)
    d_ue = np.linalg.norm(pts - np.asarray(ue, float), axis=1)
    lengths = [d_bs + d_ue]
    if scatterer_pos is not None:
        d_mp = np.linalg.norm(pts - np.asarray(scatterer_pos, float), axis=1)
        lengths.append(d_bs + d_mp + distance(scatterer_pos, ue))
    return np.concatenate(lengths)


def build_grid(region: SensingRegion, bs, ue, v_max: float, nu_d: float, cfg: OfdmConfig,
               n_del: int = 10, n_dop: int = 10, scatterer_pos=None,
               height: float = 0.0) -> DelayDopplerGrid:
    """Uniform delay bins over the region's total path delays, Doppler over +-(2 v/lambda + nu_d)."""
    if v_max < 0 or nu_d < 0:
        raise ValueError("velocity bound and nu_d must be nonnegative")
    lengths = region_path_lengths(region, bs, ue, scatterer_pos, height)
    lo, hi = lengths.min() / SPEED_OF_LIGHT, lengths.max() / SPEED_OF_LIGHT
    if not hi > lo:
        raise ValueError("degenerate delay span")
    span = 2 * v_max / cfg.wavelength + nu_d
    dopplers = np.array([0.0]) if span == 0 else _linspace_bins(-span, span, n_dop)
    return DelayDopplerGrid(_linspace_bins(lo, hi, n_del), dopplers)


def filter_vector(tau: float, nu: float, cfg: OfdmConfig) -> np.ndarray:
    q = np.arange(cfg.n_sub)[:, None]
    n = np.arange(1, cfg.n_sym + 1)[None, :]
    g = np.exp(-2j * np.pi * q * cfg.w_sub * tau) * np.exp(-2j * np.pi * nu * n * cfg.t_sym)
    return g.ravel()


def filter_bank(grid: DelayDopplerGrid, cfg: OfdmConfig) -> np.ndarray:
    """Rows are g(tau, nu), delay-major so row ``i * N_dop + j`` is bin (i, j)."""
    q = np.arange(cfg.n_sub)
    n = np.arange(1, cfg.n_sym + 1)
    delay = np.exp(-2j * np.pi * np.outer(grid.delays, q) * cfg.w_sub)
    dopp = np.exp(-2j * np.pi * np.outer(grid.dopplers, n) * cfg.t_sym)
    bank = delay[:, None, :, None] * dopp[None, :, None, :]
    return bank.reshape(grid.delays.size * grid.dopplers.size, cfg.n_samples)


def correlate(r: np.ndarray, bank: np.ndarray) -> np.ndarray:
    """``r^H g`` for every row of the bank."""
    return bank @ np.conj(r)


def matched_filter_peak(frame, grid: DelayDopplerGrid, cfg: OfdmConfig, bank=None) -> tuple:
    """Return ``(tau*, nu*, peak)``; ties go to the lowest delay then Doppler index."""
    r = frame.r if isinstance(frame, ReceivedFrame) else np.asarray(frame)
    if bank is None:
        bank = filter_bank(grid, cfg)
    mags = np.abs(correlate(r, bank))
    k = int(np.argmax(mags))
    tau, nu = grid.bin(k)
    return tau, nu, float(mags[k])


def compute_resi(r, g_star: np.ndarray, sigma_z: float) -> float:
    if not sigma_z > 0:
        raise ValueError("sigma_z must be positive")
    r = r.r if isinstance(r, ReceivedFrame) else np.asarray(r)
    return float(abs(np.vdot(r, g_star)) / math.sqrt(r.size * sigma_z ** 2))


def measure(frame: ReceivedFrame, grid: DelayDopplerGrid, cfg: OfdmConfig, bank=None) -> ResiMeasurement:
    tau, nu, _ = matched_filter_peak(frame, grid, cfg, bank)
    resi = compute_resi(frame, filter_vector(tau, nu, cfg), frame.sigma_z)
    return ResiMeasurement(resi, tau, nu, beam=frame.beam, scan=frame.scan)

