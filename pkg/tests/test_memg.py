import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from echoloc.memg import (FEATURE_DIM, ChannelFit, EmgParams, assemble_features, echo_confidence,
                          echo_power, emg_eval, emg_jacobian, fit_channel, fit_memg, frame_confidence,
                          memg_sum)

from oracles import emg, fd_jacobian

T = 64
t = np.arange(T, dtype=float)


def test_eval_at_mu():
    assert emg_eval(EmgParams(0.7, 12.0, 1.5, 3.0), 12.0) == pytest.approx(0.7)
    np.testing.assert_array_equal(emg_eval(EmgParams(0, 30, 2, 1), t), 0.0)


def test_eval_hand_value():
    # exp(-1/2) (1 + erf(1/sqrt 2)), u = 2, sigma = 2
    expected = np.exp(-0.5) * (1 + 0.6826894921370859)
    assert emg_eval(EmgParams(1, 30, 2, 1), 32.0) == pytest.approx(expected, rel=1e-12)
    assert expected == pytest.approx(1.0206027677574228, rel=1e-12)


def test_eval_against_oracle(rng):
    for _ in range(20):
        a, m, s, e = rng.uniform([0.1, 5, 0.5, -3], [2, 60, 4, 3])
        np.testing.assert_allclose(emg_eval(EmgParams(a, m, s, e), t), emg(a, m, s, e, t), rtol=1e-13, atol=1e-15)


def test_memg_sum():
    assert np.all(memg_sum([], t) == 0)
    p = EmgParams(1, 20, 2, 0.5)
    np.testing.assert_array_equal(memg_sum([p], t), emg_eval(p, t))
    q = EmgParams(0.6, 45, 2, -0.5)
    total = memg_sum([p, q], t)
    np.testing.assert_allclose(total, emg_eval(p, t) + emg_eval(q, t))
    assert total[20] <= 1 * (1 + 1e-6) and total[45] <= 0.6 * (1 + 1e-6)


def test_jacobian_fd(rng):
    n = 0
    while n < 100:
        a, m, s, e = rng.uniform([0.1, 10, 0.8, -3], [2, 50, 4, 3])
        p = np.array([a, m, s, e])
        j = emg_jacobian(EmgParams(*p), t)
        fd = fd_jacobian(lambda x: emg_eval(EmgParams(*x), t), p, 1e-6)
        assert np.linalg.norm(j - fd) / np.linalg.norm(j) < 1e-5
        n += 1


@settings(max_examples=40, deadline=None)
@given(st.floats(0.1, 2), st.floats(10, 50), st.floats(0.5, 4), st.floats(-3, 3))
def test_mirror_identity(a, m, s, e):
    """Reflecting time around mu and flipping eta mirrors the pulse."""
    u = np.linspace(-10, 10, 41)
    np.testing.assert_allclose(emg_eval(EmgParams(a, m, s, e), m + u),
                               emg_eval(EmgParams(a, m, s, -e), m - u), rtol=1e-12, atol=1e-14)


def test_power():
    assert echo_power(EmgParams(0, 30, 2, 1), T) == 0.0
    assert echo_power(EmgParams(1, 32, 2, 0), T) == pytest.approx(2 * np.sqrt(2 * np.pi), abs=1e-6)
    powers = [echo_power(EmgParams(a, 30, 2, 1), T) for a in (0.1, 0.5, 1, 2)]
    assert np.all(np.diff(powers) > 0)
    assert echo_power(EmgParams(10, 20, 2, 0.5), T) / echo_power(EmgParams(1, 40, 2, 0.5), T) == pytest.approx(10, rel=1e-6)


def test_single_recovery():
    y = emg_eval(EmgParams(1, 30, 2, 1), t)
    fit = fit_channel(y, [28])
    p = fit.params[0]
    assert abs(p.mu - 30) < 0.1
    assert abs(p.alpha - 1) < 0.01
    assert fit.energy < 1e-10
    assert fit.initial_energy >= fit.energy


def test_zero_envelope():
    fit = fit_channel(np.zeros(T), [20])
    assert fit.params[0].alpha <= 1e-6
    assert fit.energy <= 1e-12


def test_two_components():
    y = emg_eval(EmgParams(1, 20, 2, 0.5), t) + emg_eval(EmgParams(0.7, 40, 2, -0.5), t)
    fit = fit_channel(y, [17, 37])
    mus = sorted(p.mu for p in fit.params)
    assert abs(mus[0] - 20) < 0.2 and abs(mus[1] - 40) < 0.2


def test_no_init_is_empty():
    fit = fit_channel(np.ones(T), [])
    assert fit.params == [] and fit.energy == T


def test_fit_idempotent():
    y = emg_eval(EmgParams(0.8, 25, 1.7, 0.8), t) + 0.01 * np.sin(t)
    first = fit_channel(y, [22])
    again = fit_channel(y, first.params)
    np.testing.assert_allclose(again.params[0].as_array(), first.params[0].as_array(), atol=1e-6)
    assert again.energy <= first.energy + 1e-12


def test_confidences_perfect_fit():
    p = EmgParams(1, 30, 2, 1)
    y = emg_eval(p, t)
    fit = ChannelFit([p], 0.0, 0.0, 0, [27])
    assert frame_confidence(y, fit) == 1.0
    assert echo_confidence(y, fit, 0) == 1.0


def test_confidence_range(rng):
    y = emg_eval(EmgParams(1, 30, 2, 1), t) + rng.normal(0, 0.1, T)
    fit = fit_channel(y, [27])
    for c in (frame_confidence(y, fit), echo_confidence(y, fit, 0)):
        assert 0.0 <= c <= 1.0


def test_features():
    y = np.vstack([emg_eval(EmgParams(1, 20, 2, 1), t) + emg_eval(EmgParams(0.5, 40, 2, 0), t)] * 3)
    fit = fit_memg(y, [[17, 37]] * 3)
    feats = assemble_features(fit, y)
    assert [len(ch) for ch in feats] == [2, 2, 2]
    for ch in feats:
        for f in ch:
            v = f.as_vector()
            assert v.shape == (FEATURE_DIM,)
            assert np.all(np.isfinite(v))
    assert feats[0][0].toa == 17
