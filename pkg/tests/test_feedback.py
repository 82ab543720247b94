import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from isac_ssf.feedback import (
    BeamDirective,
    EArqCategory,
    EArqThresholds,
    Hypothesis,
    ProtocolParams,
    ProtocolState,
    ReportKind,
    ThresholdVector,
    classify,
    earq_category,
    earq_step,
    make_protocol,
    openloop_step,
    ssf_step,
)

P = ProtocolParams(n_beam=20, p_min=-20.0, p_max=-3.0, delta_down=1.0, delta_up=2.0)
T = ThresholdVector(3.0, 5.0, 8.0)

ordered_triples = st.lists(st.floats(0, 100), min_size=3, max_size=3, unique=True).map(sorted)


@given(ordered_triples, st.floats(0, 120), st.floats(0, 120))
def test_classify_monotone(etas, x, y):
    t = ThresholdVector(*etas)
    lo, hi = sorted((x, y))
    assert classify(lo, t) <= classify(hi, t)


def test_classify_boundaries_are_strict():
    assert classify(8.0, T) == Hypothesis.H2
    assert classify(8.0 + 1e-12, T) == Hypothesis.H3
    assert classify(3.0, T) == Hypothesis.H0
    assert classify(4.0, T) == Hypothesis.H1


@given(st.floats(0, 50), st.floats(0, 50), st.floats(0, 100))
def test_earq_category_monotone(a, b, x):
    if a == b:
        return
    t = EArqThresholds(min(a, b), max(a, b))
    assert earq_category(x, t) <= earq_category(x + 1.0, t)


def test_threshold_vectors_validate_and_round_trip():
    with pytest.raises(ValueError):
        ThresholdVector(3.0, 3.0, 8.0)
    with pytest.raises(ValueError):
        EArqThresholds(5.0, 2.0)
    assert T.as_t() == (8.0, 5.0, 3.0)
    assert ThresholdVector.from_t(T.as_t()) == T
    assert EArqThresholds.from_t((8.0, 3.0)) == EArqThresholds(3.0, 8.0)


def test_ssf_h3_locks_and_lowers_power():
    s = ProtocolState(beam=4, power=-3.0)
    action, s2 = ssf_step(s, Hypothesis.H3, P)
    assert action.directive == BeamDirective.STAY and action.report == ReportKind.STATE_PLUS_PEAK
    assert (s2.beam, s2.power, s2.scanning, s2.previously_detected, s2.last_detected_beam) == (4, -4.0, False, True, 4)


def test_ssf_h1_and_h0_advance_with_wrap():
    s = ProtocolState(beam=19, power=-10.0)
    _, s1 = ssf_step(s, Hypothesis.H1, P)
    assert (s1.beam, s1.power) == (0, -11.0)
    _, s0 = ssf_step(s, Hypothesis.H0, P)
    assert s0.beam == 0 and s0.scanning


def test_ssf_loss_after_detection_restarts_with_power_up():
    s = ProtocolState(beam=7, power=-15.0, scanning=False, previously_detected=True, last_detected_beam=7)
    action, s2 = ssf_step(s, Hypothesis.H0, P)
    assert action.directive == BeamDirective.RESTART
    assert (s2.beam, s2.power, s2.previously_detected) == (0, -13.0, False)
    sticky = ProtocolParams(20, -20.0, -3.0, restart_last_detected=True)
    _, s3 = ssf_step(s, Hypothesis.H0, sticky)
    assert s3.beam == 7


def test_ssf_h2_probes_neighbours_then_commits_to_stronger():
    s = ProtocolState(beam=5, power=-10.0)
    _, s = ssf_step(s, Hypothesis.H2, P, resi=6.0)
    assert s.beam == 6 and s.probes == (5, 6, 4)
    _, s = ssf_step(s, Hypothesis.H1, P, resi=4.0)
    assert s.beam == 4
    action, s = ssf_step(s, Hypothesis.H2, P, resi=7.0)
    assert action.directive == BeamDirective.ADJACENT_HIGHER_RESI
    assert (s.beam, s.direction, s.probes) == (4, -1, ())


def test_ssf_h2_with_known_neighbours_commits_immediately():
    s = ProtocolState(beam=5, power=-10.0)
    _, s = ssf_step(s, Hypothesis.H2, P, resi=6.0, resi_neighbors=(2.0, 6.5))
    assert s.beam == 6 and not s.probes


def test_ssf_h3_during_probe_locks():
    s = ProtocolState(beam=6, power=-10.0, probes=(5, 6, 4))
    _, s = ssf_step(s, Hypothesis.H3, P, resi=9.0)
    assert s.beam == 6 and s.previously_detected and not s.probes


def test_earq_transitions():
    t = EArqThresholds(3.0, 8.0)
    s = ProtocolState(beam=2, power=-5.0)
    _, ack = earq_step(s, 9.0, t, P)
    assert (ack.beam, ack.power, ack.previously_detected) == (2, -6.0, True)
    _, nack = earq_step(s, 5.0, t, P)
    assert nack == s
    _, lost = earq_step(s, 1.0, t, P)
    assert (lost.beam, lost.power) == (3, -5.0)


def test_openloop_cycles_at_constant_power():
    s = ProtocolState(beam=0, power=-3.0)
    beams = []
    for _ in range(41):
        _, s = openloop_step(s, P)
        beams.append(s.beam)
    assert beams[:3] == [1, 2, 3] and beams[19] == 0 and s.power == -3.0


@given(st.lists(st.sampled_from(list(Hypothesis)), max_size=300),
       st.floats(-30, 0), st.floats(0, 5), st.floats(0, 5))
def test_ssf_power_stays_clamped(hs, p_max, down, up):
    params = ProtocolParams(20, p_max - 10, p_max, down, up)
    s = ProtocolState(beam=0, power=p_max)
    for h in hs:
        _, s = ssf_step(s, h, params, resi=float(h))
        assert params.p_min <= s.power <= params.p_max
        assert 0 <= s.beam < 20


def test_make_protocol_dispatch():
    assert make_protocol("ssf", P, T).detection_threshold == 8.0
    assert make_protocol("earq", P, EArqThresholds(3.0, 8.0)).detection_threshold == 8.0
    assert make_protocol("openloop", P, 6.0).detection_threshold == 6.0
    with pytest.raises(ValueError):
        make_protocol("tcp", P, T)
