"""Independent reference implementations used by the tests."""

import itertools

import numpy as np
from scipy.special import erf


def trilaterate(centers, radii):
    """Closed-form intersection of three spheres; returns the root on the +z side
    of the plane through the centers."""
    c = np.asarray(centers, float)
    r = np.asarray(radii, float)
    a = 2.0 * (c[1:] - c[0])
    b = r[0] ** 2 - r[1:] ** 2 + np.sum(c[1:] ** 2, axis=1) - np.sum(c[0] ** 2)
    p0 = np.linalg.lstsq(a, b, rcond=None)[0]
    n = np.cross(c[1] - c[0], c[2] - c[0])
    n /= np.linalg.norm(n)
    if n[2] < 0:
        n = -n
    w = p0 - c[0]
    # |w + t n|^2 = r0^2
    bq = 2 * w @ n
    cq = w @ w - r[0] ** 2
    disc = max(bq * bq - 4 * cq, 0.0)
    t = (-bq + np.sqrt(disc)) / 2
    return p0 + t * n


def dense_mlp(x, layers):
    """Plain matrix arithmetic forward pass: ReLU, ReLU, ReLU, sigmoid."""
    h = np.atleast_2d(x)
    acts = []
    for i, (w, b) in enumerate(layers):
        z = h @ w + b
        if i < len(layers) - 1:
            h = np.maximum(z, 0.0)
            acts.append(h)
        else:
            return 1.0 / (1.0 + np.exp(-z[:, 0])), acts[-1]


def emg(alpha, mu, sigma, eta, t):
    u = np.asarray(t, float) - mu
    return alpha * np.exp(-u * u / (2 * sigma * sigma)) * (1 + erf(eta * u / (sigma * np.sqrt(2))))


def brute_force_assignment_cost(cost):
    c = np.asarray(cost)
    n = c.shape[0]
    return min(sum(c[i, p[i]] for i in range(n)) for p in itertools.permutations(range(n)))


def dft_envelope(x):
    """Analytic-signal magnitude from an explicit DFT matrix."""
    x = np.asarray(x, float)
    n = len(x)
    k = np.arange(n)
    f = np.exp(-2j * np.pi * np.outer(k, k) / n)
    X = f @ x
    h = np.zeros(n)
    h[0] = 1
    if n % 2 == 0:
        h[n // 2] = 1
        h[1:n // 2] = 2
    else:
        h[1:(n + 1) // 2] = 2
    return np.abs(np.conj(f) @ (X * h) / n)


def fd_jacobian(f, x, h):
    x = np.asarray(x, float)
    cols = []
    for i in range(len(x)):
        d = np.zeros_like(x)
        d[i] = h
        cols.append((f(x + d) - f(x - d)) / (2 * h))
    return np.stack(cols, axis=-1)
