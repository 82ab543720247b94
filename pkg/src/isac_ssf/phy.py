"""Per-subcarrier transmit frame, Doppler, receive combining and noise."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .channel import SPEED_OF_LIGHT

BOLTZMANN = 1.380649e-23


@dataclass(frozen=True)
class OfdmConfig:
    f_c: float = 24e9
    w_c: float = 15e3
    n_sub: int = 4
    w_sub: float = 150e3
    n_sym: int = 100
    t_sym: float = 100e-6

    def __post_init__(self):
        for name in ("f_c", "w_c", "n_sub", "w_sub", "n_sym", "t_sym"):
            if not getattr(self, name) > 0:
                raise ValueError(f"OfdmConfig.{name} must be positive")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.f_c

    @property
    def scan_duration(self) -> float:
        return self.n_sym * self.t_sym

    @property
    def n_samples(self) -> int:
        return self.n_sym * self.n_sub


@dataclass(frozen=True)
class ReceivedFrame:
    r: np.ndarray
    scan: int = 0
    beam: int = 0
    sigma_z: float = 0.0

    def __post_init__(self):
        if self.r.ndim != 1:
            raise ValueError("received frame must be a flat vector")


@dataclass(frozen=True)
class DopplerVector:
    values: np.ndarray
    nu: float


@dataclass(frozen=True)
class TargetEcho:
    """Channels of one target for every subcarrier (row q-1) plus both Doppler vectors."""

    h_bs: np.ndarray
    h_los: np.ndarray
    h_nlos: np.ndarray
    psi_los: np.ndarray
    psi_nlos: np.ndarray


def dbm_to_watt(p_dbm):
    return 10.0 ** ((np.asarray(p_dbm, float) - 30.0) / 10.0)


def watt_to_dbm(p_w):
    return 10.0 * np.log10(np.asarray(p_w, float)) + 30.0


def build_beamforming(steering: Sequence[np.ndarray], gammas: Sequence[float]) -> np.ndarray:
    """Stack ``gamma_i * f_i`` into F and rescale so that ``tr(F F^H) = 1``.

    ``steering`` lists the L communication beams followed by the sensing
    beam.  ``f_i = conj(a_i) / sqrt(N)`` so that ``h^T f_i`` is the coherent
    array gain toward the steering direction.
    """
    gammas = np.asarray(gammas, float)
    if len(steering) != len(gammas):
        raise ValueError("need one gamma per beam")
    if np.any(gammas < 0):
        raise ValueError("gamma coefficients must be nonnegative")
    if not np.any(gammas > 0):
        raise ValueError("at least one gamma must be positive")
    cols = [g * np.conj(a) / math.sqrt(a.size) for g, a in zip(gammas, steering)]
    F = np.stack(cols, axis=1)
    return F / math.sqrt(np.real(np.trace(F @ F.conj().T)))


def transmit_frame(p_q: float, F: np.ndarray, X_q: np.ndarray) -> np.ndarray:
    return math.sqrt(p_q) * F @ X_q


def qpsk_symbols(rng: np.random.Generator, shape) -> np.ndarray:
    k = rng.integers(0, 4, size=shape)
    return np.exp(1j * (np.pi / 4 + np.pi / 2 * k))


def doppler_vector(nu: float, n_sym: int, t_sym: float) -> DopplerVector:
    n = np.arange(1, n_sym + 1)
    return DopplerVector(np.exp(-2j * np.pi * nu * n * t_sym), nu)


def noise_sigma(noise_figure_db: float, bandwidth_hz: float, temperature_k: float = 290.0) -> float:
    if not bandwidth_hz > 0:
        raise ValueError("bandwidth must be positive")
    return math.sqrt(BOLTZMANN * temperature_k * bandwidth_hz * 10 ** (noise_figure_db / 10))


def draw_noise(rng: np.random.Generator, sigma_z: float, shape) -> np.ndarray:
    """Circular complex Gaussian with E|z|^2 = sigma_z^2."""
    scale = sigma_z / math.sqrt(2)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def received_frame(echoes: Sequence[TargetEcho], S: np.ndarray, w_ue: np.ndarray,
                   noise: Optional[np.ndarray] = None, sigma_z: float = 0.0, scan: int = 0,
                   beam: int = 0, echo_gain: float = 1.0) -> ReceivedFrame:
    """Aggregate target echoes over LOS and NLOS links, add noise, concatenate over q.

    ``S`` has shape (N_sub, N_BS, N_sym).  Per subcarrier and link the echo
    is ``psi * (w^H h_ue) * (h_bs^T S_q)``.  ``echo_gain`` is a lumped power
    gain on every echo path.
    """
    n_sub, n_bs, n_sym = S.shape
    if w_ue.ndim != 1:
        raise ValueError("w_ue must be a vector")
    r = np.zeros((n_sub, n_sym), complex)
    amp = math.sqrt(echo_gain)
    for echo in echoes:
        if echo.h_bs.shape != (n_sub, n_bs):
            raise ValueError(f"h_bs shape {echo.h_bs.shape} does not match S {S.shape}")
        for h_ue, psi in ((echo.h_los, echo.psi_los), (echo.h_nlos, echo.psi_nlos)):
            if h_ue.shape != (n_sub, w_ue.size) or psi.shape != (n_sym,):
                raise ValueError("echo channel or Doppler vector has the wrong shape")
            for q in range(n_sub):
                rx = np.vdot(w_ue, h_ue[q])
                tx = echo.h_bs[q] @ S[q]
                r[q] += amp * psi * rx * tx
    if noise is not None:
        if noise.shape != r.shape:
            raise ValueError(f"noise shape {noise.shape} != {r.shape}")
        r = r + noise
    return ReceivedFrame(r.ravel(), scan=scan, beam=beam, sigma_z=sigma_z)


def strip_reference(frame: ReceivedFrame, symbols: np.ndarray) -> ReceivedFrame:
    """Remove the known unit-modulus sensing symbols (shape N_sub x N_sym)."""
    r = frame.r * np.conj(symbols).ravel()
    return ReceivedFrame(r, scan=frame.scan, beam=frame.beam, sigma_z=frame.sigma_z)
