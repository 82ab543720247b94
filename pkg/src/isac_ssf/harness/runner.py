"""Scan-by-scan closed-loop scenario execution.

Everything that does not depend on protocol decisions (target motion,
blockage, channels, the reference symbols and noise of every scan) is
computed once per ``(physics config, seed)`` and cached.  Because the
received frame is linear in the transmit amplitude, the filter-bank output
for any (beam, power) choice is then a small linear combination of cached
correlations; :func:`direct_measurement` rebuilds the same value from the
full frame and is what the tests compare against.
"""

from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .. import __version__
from ..channel import (
    SPEED_OF_LIGHT,
    angle_between,
    bistatic_gain_los,
    bistatic_gain_nlos,
    bs_target_channel,
    friis_gain,
    steering_vector,
    target_ue_channel,
)
from ..detector import build_grid, compute_resi, filter_bank, filter_vector, matched_filter_peak
from ..feedback import ProtocolParams, make_protocol
from ..metrics import ScanRecord, ScenarioTrace
from ..phy import (
    ReceivedFrame,
    TargetEcho,
    build_beamforming,
    dbm_to_watt,
    doppler_vector,
    draw_noise,
    noise_sigma,
    qpsk_symbols,
    received_frame,
    strip_reference,
    transmit_frame,
)
from ..scene import beam_containing, distance, in_region, los_blocked, target_position, target_velocity
from .config import ConfigError, SimConfig, validate


@dataclass
class TargetTrack:
    positions: np.ndarray     # (n_scans, 3)
    velocities: np.ndarray    # (n_scans, 3)
    blocked: np.ndarray       # (n_scans,) bool
    in_region: np.ndarray     # (n_scans,) bool
    beam: np.ndarray          # (n_scans,) int, -1 outside the region
    tau: np.ndarray           # (n_scans, 2) total path delay of LOS / NLOS echo
    nu: np.ndarray            # (n_scans, 2) Doppler of LOS / NLOS echo


class ScenarioCache:
    """Protocol-independent part of one seeded scenario."""

    def __init__(self, cfg: SimConfig, seed: int):
        self.cfg = cfg
        self.seed = int(seed)
        ofdm = cfg.ofdm
        self.scene = cfg.build_scene()
        self.beam_grid = self.scene.grid
        self.geom_bs = cfg.bs_array()
        self.geom_ue = cfg.ue_array(self.scene)
        self.n_scans = cfg.n_scans
        self.times = np.arange(self.n_scans) * ofdm.scan_duration
        self.sigma_z = noise_sigma(cfg.channel.noise_figure_db, ofdm.w_c, cfg.channel.temperature_k)
        self.echo_gain = 10 ** (cfg.channel.link_gain_db / 10)

        v_max = max(t.speed for t in cfg.scene.targets)
        height = float(np.mean([t.start[2] for t in cfg.scene.targets]))
        self.dd_grid = build_grid(self.scene.region, self.scene.bs, self.scene.ue, v_max, cfg.channel.nu_d,
                                  ofdm, cfg.detector.n_del, cfg.detector.n_dop,
                                  scatterer_pos=self.scene.scatterer.position, height=height)
        self.bank = filter_bank(self.dd_grid, ofdm)

        centroid = self.scene.region_centroid(height)
        w = steering_vector(self.geom_ue, angle_between(self.scene.ue, centroid))
        self.w_ue = w / np.linalg.norm(w)
        self.beam_steering = np.stack([
            steering_vector(self.geom_bs, self.beam_grid.angles(b)) for b in range(self.beam_grid.n_beam)
        ])

        self.tracks = [self._track(t) for t in self.scene.targets]
        self._build_correlations()

    # -- geometry -------------------------------------------------------------------------------
    def _track(self, target) -> TargetTrack:
        scene, lam, nu_d = self.scene, self.cfg.ofdm.wavelength, self.cfg.channel.nu_d
        mp = np.asarray(scene.scatterer.position)
        n = self.n_scans
        pos, vel = np.zeros((n, 3)), np.zeros((n, 3))
        blocked, inside = np.zeros(n, bool), np.zeros(n, bool)
        beam = np.full(n, -1)
        tau, nu = np.zeros((n, 2)), np.zeros((n, 2))
        for i, t in enumerate(self.times):
            p = np.asarray(target_position(target.trajectory, float(t)))
            v = target_velocity(target.trajectory, float(t))
            pos[i], vel[i] = p, v
            blocked[i] = los_blocked(p, scene.ue, scene.blocker)
            inside[i] = in_region(scene.region, scene.bs, p)
            b = beam_containing(self.beam_grid, scene.bs, p)
            beam[i] = -1 if b is None else b
            d_bs, d_ue, d_mp = distance(scene.bs, p), distance(p, scene.ue), distance(p, mp)
            tau_bs = d_bs / SPEED_OF_LIGHT
            tau[i] = (tau_bs + d_ue / SPEED_OF_LIGHT, tau_bs + (d_mp + distance(mp, scene.ue)) / SPEED_OF_LIGHT)
            rate_bs = v @ (p - np.asarray(scene.bs)) / d_bs
            rate_mp = v @ (p - mp) / d_mp
            nu_nlos = (rate_bs + rate_mp) / lam
            nu[i] = (nu_nlos + nu_d, nu_nlos)
        return TargetTrack(pos, vel, blocked, inside, beam, tau, nu)

    def _link_amplitudes(self, target, p: np.ndarray, blocked: bool) -> np.ndarray:
        """Per-beam complex echo amplitude (unit P_q) of the LOS and NLOS links, shape (2, n_beam)."""
        scene, lam = self.scene, self.cfg.ofdm.wavelength
        mp = np.asarray(scene.scatterer.position)
        a_bs = steering_vector(self.geom_bs, angle_between(scene.bs, p))
        tx = (self.beam_steering.conj() @ a_bs) / math.sqrt(self.geom_bs.size)
        beta_bs = friis_gain(lam, distance(scene.bs, p)).value
        out = np.zeros((2, self.beam_grid.n_beam), complex)
        if not blocked:
            beta = bistatic_gain_los(lam, target.rcs, distance(p, scene.ue)).value
            rx = np.vdot(self.w_ue, steering_vector(self.geom_ue, angle_between(scene.ue, p)))
            out[0] = math.sqrt(beta_bs * beta * self.echo_gain) * rx * tx
        beta = bistatic_gain_nlos(lam, target.rcs, scene.scatterer.rcs, distance(p, mp),
                                  distance(scene.ue, mp)).value
        rx = np.vdot(self.w_ue, steering_vector(self.geom_ue, angle_between(scene.ue, mp)))
        out[1] = math.sqrt(beta_bs * beta * self.echo_gain) * rx * tx
        return out

    def _build_correlations(self) -> None:
        ofdm = self.cfg.ofdm
        n, m = self.n_scans, len(self.tracks)
        self.amplitudes = np.zeros((n, m, 2, self.beam_grid.n_beam), complex)
        self.echo_corr = np.zeros((n, m, 2, self.bank.shape[0]), complex)
        for k, (target, track) in enumerate(zip(self.scene.targets, self.tracks)):
            for i in range(n):
                self.amplitudes[i, k] = self._link_amplitudes(target, track.positions[i], track.blocked[i])
                for link in range(2):
                    u = filter_vector(track.tau[i, link], track.nu[i, link], ofdm)
                    self.echo_corr[i, k, link] = self.bank @ np.conj(u)
        symbols, noise = self.random_draws()
        derotated = (noise * np.conj(symbols)).reshape(n, -1)
        self.noise_corr = np.conj(derotated) @ self.bank.T

    def random_draws(self) -> tuple:
        """Reference symbols and noise for every scan, (n_scans, N_sub, N_sym) each."""
        rng = np.random.default_rng(self.seed)
        shape = (self.n_scans, self.cfg.ofdm.n_sub, self.cfg.ofdm.n_sym)
        symbols = qpsk_symbols(rng, shape)
        noise = draw_noise(rng, self.sigma_z, shape)
        return symbols, noise

    # -- per-scan measurement --------------------------------------------------------------------
    def correlations(self, scan: int, beam: int, p_q: float) -> np.ndarray:
        """``r^H g`` over the whole delay-Doppler bank for a given beam and per-subcarrier power."""
        amp = np.conj(self.amplitudes[scan, :, :, beam])
        echo = np.einsum("ml,mlk->k", amp, self.echo_corr[scan])
        return math.sqrt(p_q) * echo + self.noise_corr[scan]

    def measure(self, scan: int, beam: int, p_q: float) -> tuple:
        """Return (resi, flat peak bin index)."""
        mags = np.abs(self.correlations(scan, beam, p_q))
        k = int(np.argmax(mags))
        return float(mags[k] / math.sqrt(self.bank.shape[1] * self.sigma_z ** 2)), k

    def target_beam(self, scan: int) -> Optional[int]:
        b = int(self.tracks[0].beam[scan])
        return None if b < 0 else b

    def in_region(self, scan: int) -> bool:
        return any(bool(t.in_region[scan]) for t in self.tracks)

    def in_beam(self, scan: int, beam: int) -> bool:
        return any(int(t.beam[scan]) == beam for t in self.tracks)


_CACHE: "OrderedDict[tuple, ScenarioCache]" = OrderedDict()
_CACHE_SIZE = 16


def scenario_cache(cfg: SimConfig, seed: int) -> ScenarioCache:
    """Memoized on the physics sections of the config and the seed only."""
    key = (cfg.physics_key(), int(seed))
    cache = _CACHE.get(key)
    if cache is None:
        cache = _CACHE[key] = ScenarioCache(cfg, seed)
        while len(_CACHE) > _CACHE_SIZE:
            _CACHE.popitem(last=False)
    else:
        _CACHE.move_to_end(key)
    return cache


def direct_measurement(cache: ScenarioCache, scan: int, beam: int, p_q: float) -> tuple:
    """Full-frame path: channels -> S_q -> r -> reference removal -> filter bank -> RESI."""
    cfg, scene = cache.cfg, cache.scene
    ofdm = cfg.ofdm
    lam = ofdm.wavelength
    symbols, noise = cache.random_draws()
    X = symbols[scan]
    F = build_beamforming([cache.beam_steering[beam]], [1.0])
    S = np.stack([transmit_frame(p_q, F, X[q][None, :]) for q in range(ofdm.n_sub)])
    echoes = []
    for target, track in zip(scene.targets, cache.tracks):
        p, blocked = track.positions[scan], bool(track.blocked[scan])
        h_bs, h_los, h_nlos = [], [], []
        for q in range(1, ofdm.n_sub + 1):
            h_bs.append(bs_target_channel(q, cache.geom_bs, scene.bs, p, lam, ofdm.w_sub).coeffs)
            los, nlos = target_ue_channel(q, cache.geom_ue, p, target.rcs, scene.ue, scene.scatterer,
                                          blocked, lam, ofdm.w_sub)
            h_los.append(los.coeffs)
            h_nlos.append(nlos.coeffs)
        echoes.append(TargetEcho(
            h_bs=np.array(h_bs), h_los=np.array(h_los), h_nlos=np.array(h_nlos),
            psi_los=doppler_vector(track.nu[scan, 0], ofdm.n_sym, ofdm.t_sym).values,
            psi_nlos=doppler_vector(track.nu[scan, 1], ofdm.n_sym, ofdm.t_sym).values,
        ))
    frame = received_frame(echoes, S, cache.w_ue, noise=noise[scan], sigma_z=cache.sigma_z,
                           scan=scan, beam=beam, echo_gain=cache.echo_gain)
    frame = strip_reference(frame, X)
    tau, nu, _ = matched_filter_peak(frame, cache.dd_grid, ofdm, cache.bank)
    return compute_resi(frame, filter_vector(tau, nu, ofdm), cache.sigma_z), (tau, nu), frame


def protocol_params(cfg: SimConfig, budget_dbm: float) -> ProtocolParams:
    p = cfg.protocol
    floor = p.p_min_dbm if math.isinf(p.max_backoff_db) else max(p.p_min_dbm, budget_dbm - p.max_backoff_db)
    floor = min(floor, budget_dbm)
    return ProtocolParams(n_beam=cfg.scene.n_beam, p_min=floor, p_max=budget_dbm, delta_down=p.delta_down,
                          delta_up=p.delta_up, restart_last_detected=p.restart_last_detected)


def run_scenario(cfg: SimConfig, protocol: str, thresholds=None, seed: int = 1,
                 budget_dbm: Optional[float] = None) -> ScenarioTrace:
    """Run one closed-loop scenario and return its per-scan trace."""
    validate(cfg)
    if protocol not in ("ssf", "earq", "openloop"):
        raise ConfigError("protocol", f"unknown protocol {protocol!r}")
    budget = cfg.protocol.p_max_dbm if budget_dbm is None else float(budget_dbm)
    if thresholds is None:
        thresholds = cfg.thresholds_for(protocol)
    cache = scenario_cache(cfg, seed)
    proto = make_protocol(protocol, protocol_params(cfg, budget), thresholds, cfg.protocol.neighbor_memory)
    scan_duration = cfg.ofdm.scan_duration
    n_sub = cfg.ofdm.n_sub
    records = []
    for s in range(cache.n_scans):
        beam, p_dbm = proto.state.beam, proto.state.power
        resi, _ = cache.measure(s, beam, float(dbm_to_watt(p_dbm)) / n_sub)
        label = proto.label(resi)
        action = proto.step(resi, s)
        records.append(ScanRecord(
            scan=s, time_s=s * scan_duration, beam=beam, hypothesis=label, resi=resi,
            p_used_dbm=p_dbm, p_budget_dbm=budget, tg_in_region=cache.in_region(s),
            tg_in_beam=cache.in_beam(s, beam), report_kind=action.report.value,
            tg_beam=cache.target_beam(s),
        ))
    meta = {"config_hash": cfg.fingerprint(), "version": __version__, "seed": int(seed),
            "thresholds": str(thresholds), "budget_dbm": budget}
    return ScenarioTrace(protocol=protocol, records=records, detection_threshold=proto.detection_threshold,
                         scan_duration=scan_duration, seed=int(seed), meta=meta)
