import os
import subprocess
import sys

import numpy as np
import pytest

from echoloc import _backend, _pykernels

ext = pytest.importorskip("echoloc._kernels", reason="compiled kernels not built")


def mlp_args(rng, m=9, dims=(8, 32, 32, 4, 1)):
    x = rng.normal(size=(m, dims[0]))
    layers = []
    for a, b in zip(dims[:-1], dims[1:]):
        layers += [rng.normal(size=(a, b)) * 0.5, rng.normal(size=b) * 0.1]
    return x, layers


def test_emg_kernel_equivalence(rng):
    params = np.column_stack([rng.uniform(0.1, 2, 5), rng.uniform(5, 60, 5),
                              rng.uniform(0.3, 4, 5), rng.uniform(-3, 3, 5)])
    m_py, j_py = _pykernels.emg_model_jacobian(params, 64)
    m_c, j_c = ext.emg_model_jacobian(params, 64)
    np.testing.assert_allclose(m_c, m_py, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(j_c, j_py, rtol=1e-11, atol=1e-13)


def test_mlp_kernel_equivalence(rng):
    x, layers = mlp_args(rng)
    f_py = _pykernels.mlp_forward(x, *layers)
    f_c = ext.mlp_forward(x, *layers)
    for a, b in zip(f_py, f_c):
        np.testing.assert_allclose(b, a, rtol=1e-12, atol=1e-13)
    a1, a2, emb, z4 = f_py
    g_logit = rng.normal(size=z4.shape)
    g_emb = rng.normal(size=emb.shape)
    w2, w3, w4 = layers[2], layers[4], layers[6]
    b_py = _pykernels.mlp_backward(x, a1, a2, emb, g_logit, g_emb, w2, w3, w4)
    b_c = ext.mlp_backward(x, a1, a2, emb, g_logit, g_emb, w2, w3, w4)
    for a, b in zip(b_py, b_c):
        np.testing.assert_allclose(b, a, rtol=1e-11, atol=1e-12)


def test_reduced_input_width(rng):
    x, layers = mlp_args(rng, dims=(2, 32, 32, 4, 1))
    for a, b in zip(_pykernels.mlp_forward(x, *layers), ext.mlp_forward(x, *layers)):
        np.testing.assert_allclose(b, a, rtol=1e-12, atol=1e-13)


def test_default_backend_is_compiled():
    if os.environ.get("ECHOLOC_PURE_PYTHON"):
        pytest.skip("pure Python requested")
    assert _backend.BACKEND == "cython"


def test_fallback_selected_by_env():
    env = dict(os.environ, ECHOLOC_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", "import echoloc; print(echoloc.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "python"


def test_lm_kernel_equivalence(rng):
    # Well-separated, skewed echoes: the optimum is sharp, so both routes must
    # land on it even though their floating-point paths differ in the tail.
    t = np.arange(64)
    for _ in range(20):
        truth = np.array([1.0, rng.uniform(15, 22), rng.uniform(1.5, 2.5), rng.uniform(0.5, 1.5),
                          0.6, rng.uniform(38, 45), rng.uniform(1.2, 2.0), rng.uniform(-1.5, -0.5)])
        y, _ = _pykernels.emg_model_jacobian(truth, 64)
        y = y + rng.normal(0, 1e-3, 64)
        start = truth + np.array([0.1, 0.5, 0.3, -0.2, -0.05, -0.4, 0.2, 0.2])
        th_py, e_py, i_py, _ = _pykernels.lm_fit(y, start, 200, 1e-3, 10.0, 1e-20, 0.25)
        th_c, e_c, i_c, _ = ext.lm_fit(y, start, 200, 1e-3, 10.0, 1e-20, 0.25)
        assert i_c == pytest.approx(i_py, rel=1e-12)
        assert e_c == pytest.approx(e_py, rel=1e-8)
        np.testing.assert_allclose(th_c, th_py, atol=1e-5)
        assert e_c < 1e-4


def test_lm_started_at_truth_stays_there():
    truth = np.array([1.0, 30.0, 2.0, 0.5])
    y, _ = _pykernels.emg_model_jacobian(truth, 64)
    for fit in (_pykernels.lm_fit, ext.lm_fit):
        th, e, _, _ = fit(y, truth, 200, 1e-3, 10.0, 1e-20, 0.25)
        assert e < 1e-25
        np.testing.assert_allclose(th, truth, atol=1e-9)
