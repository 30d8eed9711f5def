"""Pure NumPy kernels. Reference implementation and fallback for ``_kernels``."""

import numpy as np
from scipy.special import erf

_SQRT2 = np.sqrt(2.0)
_TWO_OVER_SQRTPI = 2.0 / np.sqrt(np.pi)


def emg_model_jacobian(params, n_samples):
    """Sum of EMG components on ``t = 0..T-1`` and its Jacobian.

    ``params`` is ``(K, 4)`` with rows ``(alpha, mu, sigma, eta)``. The
    Jacobian has shape ``(T, 4K)`` with the same parameter order.
    """
    p = np.asarray(params, dtype=float).reshape(-1, 4)
    t = np.arange(n_samples, dtype=float)[:, None]
    alpha, mu, sigma, eta = p[:, 0], p[:, 1], p[:, 2], p[:, 3]
    u = t - mu
    g = np.exp(-u * u / (2.0 * sigma * sigma))
    z = eta * u / (sigma * _SQRT2)
    e = 1.0 + erf(z)
    de = _TWO_OVER_SQRTPI * np.exp(-z * z)
    model = (alpha * g * e).sum(axis=1)

    jac = np.empty((n_samples, 4 * len(p)))
    jac[:, 0::4] = g * e
    jac[:, 1::4] = alpha * g * (u / (sigma * sigma) * e - de * eta / (sigma * _SQRT2))
    jac[:, 2::4] = alpha * g * (u * u / sigma ** 3 * e - de * z / sigma)
    jac[:, 3::4] = alpha * g * de * u / (sigma * _SQRT2)
    return model, jac


def mlp_forward(x, w1, b1, w2, b2, w3, b3, w4, b4):
    """Batched forward pass; returns the three ReLU activations and the logit."""
    a1 = np.maximum(x @ w1 + b1, 0.0)
    a2 = np.maximum(a1 @ w2 + b2, 0.0)
    emb = np.maximum(a2 @ w3 + b3, 0.0)
    z4 = emb @ w4[:, 0] + b4[0]
    return a1, a2, emb, z4


def mlp_backward(x, a1, a2, emb, g_logit, g_emb, w2, w3, w4):
    """Parameter gradients given upstream gradients on the logit and embedding."""
    g_e = g_emb + g_logit[:, None] * w4[:, 0]
    dw4 = (emb.T @ g_logit)[:, None]
    db4 = np.array([g_logit.sum()])
    g3 = g_e * (emb > 0)
    dw3 = a2.T @ g3
    db3 = g3.sum(axis=0)
    g2 = (g3 @ w3.T) * (a2 > 0)
    dw2 = a1.T @ g2
    db2 = g2.sum(axis=0)
    g1 = (g2 @ w2.T) * (a1 > 0)
    dw1 = x.T @ g1
    db1 = g1.sum(axis=0)
    return dw1, db1, dw2, db2, dw3, db3, dw4, db4


def _project(theta, n_samples, sigma_floor):
    p = theta.reshape(-1, 4).copy()
    p[:, 0] = np.maximum(p[:, 0], 0.0)
    p[:, 1] = np.clip(p[:, 1], -n_samples, 2 * n_samples)
    p[:, 2] = np.maximum(p[:, 2], sigma_floor)
    return p.reshape(-1)


def lm_fit(y, theta0, max_iterations, initial_damping, damping_factor, energy_tolerance, sigma_floor):
    """Projected Levenberg-Marquardt on ``|y - memg(theta)|^2``.

    Marquardt scaling ``lam * diag(J^T J)`` (with a relative floor), damping
    divided on accepted and multiplied on rejected steps. Returns
    ``(theta, energy, initial_energy, iterations)``; a non-finite initial
    energy is returned as is with zero iterations.
    """
    y = np.asarray(y, dtype=float)
    T = len(y)
    theta = _project(np.asarray(theta0, dtype=float), T, sigma_floor)
    model, jac = emg_model_jacobian(theta.reshape(-1, 4), T)
    r = y - model
    energy = float(r @ r)
    initial = energy
    if not np.isfinite(energy):
        return theta, energy, initial, 0
    lam = initial_damping
    iterations = 0
    for iterations in range(1, max_iterations + 1):
        if energy == 0.0:
            iterations -= 1
            break
        a = jac.T @ jac
        g = jac.T @ r
        d = np.diag(a)
        damp = np.maximum(d, 1e-12 * max(d.max(), 1e-300))
        accepted = False
        try:
            chol = np.linalg.cholesky(a + lam * np.diag(damp))
        except np.linalg.LinAlgError:
            chol = None
        if chol is not None:
            step = np.linalg.solve(chol.T, np.linalg.solve(chol, g))
            if np.all(np.isfinite(step)):
                trial = _project(theta + step, T, sigma_floor)
                t_model, t_jac = emg_model_jacobian(trial.reshape(-1, 4), T)
                t_r = y - t_model
                t_energy = float(t_r @ t_r)
                if np.isfinite(t_energy) and t_energy < energy:
                    change = energy - t_energy
                    theta, energy, r, jac = trial, t_energy, t_r, t_jac
                    accepted = True
        if accepted:
            lam = max(lam / damping_factor, 1e-15)
            if change < energy_tolerance:
                break
        else:
            lam *= damping_factor
            if lam > 1e16:
                break
    return theta, energy, initial, iterations
