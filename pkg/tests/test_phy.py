import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from isac_ssf.channel import ArrayGeometry, steering_vector
from isac_ssf.phy import (
    OfdmConfig,
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
    watt_to_dbm,
)


def test_table_defaults():
    c = OfdmConfig()
    assert (c.f_c, c.w_c, c.n_sub, c.w_sub, c.n_sym, c.t_sym) == (24e9, 15e3, 4, 150e3, 100, 100e-6)
    assert math.isclose(c.scan_duration, 0.01)
    assert c.n_samples == 400


@given(st.lists(st.floats(0.01, 10), min_size=1, max_size=5),
       st.lists(st.floats(-math.pi, math.pi), min_size=5, max_size=5))
def test_beamforming_unit_trace(gammas, azimuths):
    geom = ArrayGeometry(1, 32)
    steer = [steering_vector(geom, (az, 0.0)) for az in azimuths[:len(gammas)]]
    F = build_beamforming(steer, gammas)
    assert abs(np.trace(F @ F.conj().T).real - 1.0) < 1e-10


def test_beamforming_rejects_bad_gammas():
    a = np.ones(4, complex)
    with pytest.raises(ValueError):
        build_beamforming([a], [0.0])
    with pytest.raises(ValueError):
        build_beamforming([a, a], [1.0, -1.0])


def test_power_conversions():
    assert math.isclose(float(dbm_to_watt(30.0)), 1.0)
    assert math.isclose(float(dbm_to_watt(-3.0)), 10 ** -3.3)
    assert np.allclose(watt_to_dbm(dbm_to_watt([-20.0, -3.0])), [-20.0, -3.0])


def test_noise_sigma_thermal():
    # -174 dBm/Hz + 10 log10(15 kHz) + 6 dB
    expected_dbm = 10 * math.log10(1.380649e-23 * 290 * 1000) + 10 * math.log10(15e3) + 6
    assert math.isclose(float(watt_to_dbm(noise_sigma(6.0, 15e3) ** 2)), expected_dbm, abs_tol=1e-9)


def test_noise_and_symbols_statistics():
    rng = np.random.default_rng(3)
    z = draw_noise(rng, 2.0, (200_000,))
    assert abs(np.mean(np.abs(z) ** 2) / 4.0 - 1) < 0.02
    x = qpsk_symbols(rng, (1000,))
    assert np.allclose(np.abs(x), 1.0)
    assert set(np.round(np.angle(x, deg=True)).astype(int)) <= {45, 135, -45, -135}


def test_doppler_vector_phase():
    psi = doppler_vector(50.0, 100, 100e-6)
    assert np.allclose(psi.values[0], np.exp(-2j * math.pi * 50.0 * 100e-6))
    assert np.allclose(np.abs(psi.values), 1.0)


def test_received_frame_matches_hand_computation():
    rng = np.random.default_rng(0)
    n_sub, n_bs, n_ue, n_sym = 2, 4, 3, 5
    h_bs = rng.standard_normal((n_sub, n_bs)) + 1j * rng.standard_normal((n_sub, n_bs))
    h_los = rng.standard_normal((n_sub, n_ue)) + 0j
    h_nlos = rng.standard_normal((n_sub, n_ue)) + 0j
    psi_l, psi_n = np.exp(1j * np.arange(n_sym)), np.exp(-1j * np.arange(n_sym))
    S = rng.standard_normal((n_sub, n_bs, n_sym)) + 0j
    w = np.ones(n_ue) / math.sqrt(n_ue)
    frame = received_frame([TargetEcho(h_bs, h_los, h_nlos, psi_l, psi_n)], S, w, echo_gain=4.0)
    r = frame.r.reshape(n_sub, n_sym)
    for q in range(n_sub):
        expect = 2.0 * (psi_l * (w.conj() @ h_los[q]) + psi_n * (w.conj() @ h_nlos[q])) * (h_bs[q] @ S[q])
        assert np.allclose(r[q], expect)


def test_frame_scales_with_sqrt_power_and_reference_strips():
    rng = np.random.default_rng(1)
    F = build_beamforming([np.ones(4, complex)], [1.0])
    X = qpsk_symbols(rng, (1, 6))
    s1, s4 = transmit_frame(1.0, F, X), transmit_frame(4.0, F, X)
    assert np.allclose(s4, 2 * s1)
    from isac_ssf.phy import ReceivedFrame

    symbols = qpsk_symbols(rng, (2, 3))
    data = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    frame = ReceivedFrame(data * symbols.ravel(), sigma_z=1.0)
    assert np.allclose(strip_reference(frame, symbols).r, data)


def test_column_power_ratios_follow_gammas():
    geom = ArrayGeometry(1, 32)
    steer = [steering_vector(geom, (az, 0.0)) for az in (0.2, 1.0, 2.0)]
    gammas = np.array([0.5, 1.0, 2.0])
    F = build_beamforming(steer, gammas)
    col_power = np.sum(np.abs(F) ** 2, axis=0)
    assert np.allclose(col_power, gammas ** 2 / np.sum(gammas ** 2))


def test_kTB_at_zero_noise_figure():
    assert noise_sigma(0.0, 15e3) ** 2 == pytest.approx(1.380649e-23 * 290 * 15e3)
    assert noise_sigma(6.0, 60e3) == pytest.approx(2 * noise_sigma(6.0, 15e3))


def test_noise_only_frame_variance():
    rng = np.random.default_rng(9)
    sigma = noise_sigma(6.0, 15e3)
    S = np.zeros((4, 32, 100), complex)
    frame = received_frame([], S, np.ones(16) / 4, noise=draw_noise(rng, sigma, (4, 100)), sigma_z=sigma)
    assert frame.r.size == 400
    big = draw_noise(rng, sigma, (100_000,))
    assert abs(np.mean(np.abs(big) ** 2) / sigma ** 2 - 1) < 0.05
