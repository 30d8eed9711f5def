# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels mirroring ``_pykernels`` one to one."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, erf, sqrt, isfinite

cnp.import_array()

cdef double SQRT2 = sqrt(2.0)
cdef double TWO_OVER_SQRTPI = 1.1283791670955126


cdef void _emg_fill(double[::1] theta, double[::1] model, double[:, ::1] jac) noexcept nogil:
    cdef Py_ssize_t T = model.shape[0], K = theta.shape[0] // 4
    cdef Py_ssize_t i, k
    cdef double alpha, mu, sigma, eta, u, g, z, e, de, s2
    for i in range(T):
        model[i] = 0.0
    for k in range(K):
        alpha = theta[4 * k]
        mu = theta[4 * k + 1]
        sigma = theta[4 * k + 2]
        eta = theta[4 * k + 3]
        s2 = sigma * SQRT2
        for i in range(T):
            u = i - mu
            g = exp(-u * u / (2.0 * sigma * sigma))
            z = eta * u / s2
            e = 1.0 + erf(z)
            de = TWO_OVER_SQRTPI * exp(-z * z)
            model[i] += alpha * g * e
            jac[i, 4 * k] = g * e
            jac[i, 4 * k + 1] = alpha * g * (u / (sigma * sigma) * e - de * eta / s2)
            jac[i, 4 * k + 2] = alpha * g * (u * u / (sigma * sigma * sigma) * e - de * z / sigma)
            jac[i, 4 * k + 3] = alpha * g * de * u / s2


def emg_model_jacobian(params, Py_ssize_t n_samples):
    cdef double[::1] p = np.ascontiguousarray(params, dtype=np.float64).reshape(-1)
    model_arr = np.zeros(n_samples)
    jac_arr = np.empty((n_samples, p.shape[0]))
    _emg_fill(p, model_arr, jac_arr)
    return model_arr, jac_arr


cdef void _project(double[::1] theta, Py_ssize_t T, double sigma_floor) noexcept nogil:
    cdef Py_ssize_t k
    for k in range(theta.shape[0] // 4):
        if theta[4 * k] < 0.0:
            theta[4 * k] = 0.0
        if theta[4 * k + 1] < -T:
            theta[4 * k + 1] = -T
        elif theta[4 * k + 1] > 2 * T:
            theta[4 * k + 1] = 2 * T
        if theta[4 * k + 2] < sigma_floor:
            theta[4 * k + 2] = sigma_floor


cdef double _residual(double[::1] y, double[::1] model, double[::1] r) noexcept nogil:
    cdef Py_ssize_t i
    cdef double acc = 0.0
    for i in range(y.shape[0]):
        r[i] = y[i] - model[i]
        acc = acc + r[i] * r[i]
    return acc


cdef bint _cholesky_solve(double[:, ::1] a, double[::1] b, double[::1] x) noexcept nogil:
    """Solve ``a x = b`` in place (``a`` is overwritten by its factor)."""
    cdef Py_ssize_t n = a.shape[0], i, j, k
    cdef double s
    for j in range(n):
        s = a[j, j]
        for k in range(j):
            s = s - a[j, k] * a[j, k]
        if not s > 0.0:
            return False
        a[j, j] = sqrt(s)
        for i in range(j + 1, n):
            s = a[i, j]
            for k in range(j):
                s = s - a[i, k] * a[j, k]
            a[i, j] = s / a[j, j]
    for i in range(n):
        s = b[i]
        for k in range(i):
            s = s - a[i, k] * x[k]
        x[i] = s / a[i, i]
    for i in range(n - 1, -1, -1):
        s = x[i]
        for k in range(i + 1, n):
            s = s - a[k, i] * x[k]
        x[i] = s / a[i, i]
    return True


def lm_fit(y, theta0, int max_iterations, double initial_damping, double damping_factor,
           double energy_tolerance, double sigma_floor):
    cdef double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef Py_ssize_t T = yv.shape[0]
    theta_arr = np.array(theta0, dtype=np.float64).reshape(-1)
    cdef double[::1] theta = theta_arr
    cdef Py_ssize_t P = theta.shape[0]
    cdef double[::1] model = np.empty(T), r = np.empty(T)
    cdef double[::1] t_model = np.empty(T), t_r = np.empty(T)
    cdef double[:, ::1] jac = np.empty((T, P)), t_jac = np.empty((T, P))
    cdef double[:, ::1] a = np.empty((P, P)), m = np.empty((P, P))
    cdef double[::1] g = np.empty(P), step = np.empty(P), trial = np.empty(P)
    cdef double energy, initial, t_energy, change = 0.0, lam, dmax, floor, acc
    cdef Py_ssize_t i, j, k
    cdef int iterations = 0, it
    cdef bint accepted, ok

    with nogil:
        _project(theta, T, sigma_floor)
        _emg_fill(theta, model, jac)
        energy = _residual(yv, model, r)
        initial = energy
    if not isfinite(energy):
        return theta_arr, energy, initial, 0
    lam = initial_damping
    with nogil:
        for it in range(1, max_iterations + 1):
            iterations = it
            if energy == 0.0:
                iterations = it - 1
                break
            dmax = 0.0
            for i in range(P):
                for j in range(i, P):
                    acc = 0.0
                    for k in range(T):
                        acc = acc + jac[k, i] * jac[k, j]
                    a[i, j] = acc
                    a[j, i] = acc
                acc = 0.0
                for k in range(T):
                    acc = acc + jac[k, i] * r[k]
                g[i] = acc
                if a[i, i] > dmax:
                    dmax = a[i, i]
            floor = 1e-12 * (dmax if dmax > 1e-300 else 1e-300)
            for i in range(P):
                for j in range(P):
                    m[i, j] = a[i, j]
                m[i, i] = a[i, i] + lam * (a[i, i] if a[i, i] > floor else floor)
            accepted = False
            ok = _cholesky_solve(m, g, step)
            if ok:
                for i in range(P):
                    if not isfinite(step[i]):
                        ok = False
            if ok:
                for i in range(P):
                    trial[i] = theta[i] + step[i]
                _project(trial, T, sigma_floor)
                _emg_fill(trial, t_model, t_jac)
                t_energy = _residual(yv, t_model, t_r)
                if isfinite(t_energy) and t_energy < energy:
                    change = energy - t_energy
                    energy = t_energy
                    for i in range(P):
                        theta[i] = trial[i]
                    for k in range(T):
                        r[k] = t_r[k]
                        for i in range(P):
                            jac[k, i] = t_jac[k, i]
                    accepted = True
            if accepted:
                lam = lam / damping_factor
                if lam < 1e-15:
                    lam = 1e-15
                if change < energy_tolerance:
                    break
            else:
                lam = lam * damping_factor
                if lam > 1e16:
                    break
    return theta_arr, energy, initial, iterations


cdef void _dense_relu(double[:, ::1] x, double[:, ::1] w, double[::1] b,
                      double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t m, i, j
    cdef double acc
    for m in range(x.shape[0]):
        for j in range(w.shape[1]):
            acc = b[j]
            for i in range(w.shape[0]):
                acc = acc + x[m, i] * w[i, j]
            out[m, j] = acc if acc > 0.0 else 0.0


def mlp_forward(x, w1, b1, w2, b2, w3, b3, w4, b4):
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] w1v = np.ascontiguousarray(w1, dtype=np.float64)
    cdef double[:, ::1] w2v = np.ascontiguousarray(w2, dtype=np.float64)
    cdef double[:, ::1] w3v = np.ascontiguousarray(w3, dtype=np.float64)
    cdef double[:, ::1] w4v = np.ascontiguousarray(w4, dtype=np.float64)
    cdef double[::1] b1v = np.ascontiguousarray(b1, dtype=np.float64)
    cdef double[::1] b2v = np.ascontiguousarray(b2, dtype=np.float64)
    cdef double[::1] b3v = np.ascontiguousarray(b3, dtype=np.float64)
    cdef double[::1] b4v = np.ascontiguousarray(b4, dtype=np.float64)
    cdef Py_ssize_t M = xv.shape[0]
    a1 = np.empty((M, w1v.shape[1]))
    a2 = np.empty((M, w2v.shape[1]))
    emb = np.empty((M, w3v.shape[1]))
    z4 = np.empty(M)
    cdef double[:, ::1] a1v = a1
    cdef double[:, ::1] a2v = a2
    cdef double[:, ::1] ev = emb
    cdef double[::1] zv = z4
    cdef Py_ssize_t m, i
    cdef double acc
    with nogil:
        _dense_relu(xv, w1v, b1v, a1v)
        _dense_relu(a1v, w2v, b2v, a2v)
        _dense_relu(a2v, w3v, b3v, ev)
        for m in range(M):
            acc = b4v[0]
            for i in range(w4v.shape[0]):
                acc = acc + ev[m, i] * w4v[i, 0]
            zv[m] = acc
    return a1, a2, emb, z4


cdef void _dense_backward(double[:, ::1] inp, double[:, ::1] g, double[:, ::1] dw,
                          double[::1] db) noexcept nogil:
    cdef Py_ssize_t m, i, j
    for i in range(dw.shape[0]):
        for j in range(dw.shape[1]):
            dw[i, j] = 0.0
    for j in range(db.shape[0]):
        db[j] = 0.0
    for m in range(inp.shape[0]):
        for j in range(g.shape[1]):
            if g[m, j] != 0.0:
                db[j] += g[m, j]
                for i in range(inp.shape[1]):
                    dw[i, j] += inp[m, i] * g[m, j]


cdef void _propagate(double[:, ::1] g, double[:, ::1] w, double[:, ::1] act,
                     double[:, ::1] out) noexcept nogil:
    # out = (g @ w.T) * (act > 0)
    cdef Py_ssize_t m, i, j
    cdef double acc
    for m in range(g.shape[0]):
        for i in range(w.shape[0]):
            if act[m, i] > 0.0:
                acc = 0.0
                for j in range(w.shape[1]):
                    acc = acc + g[m, j] * w[i, j]
                out[m, i] = acc
            else:
                out[m, i] = 0.0


def mlp_backward(x, a1, a2, emb, g_logit, g_emb, w2, w3, w4):
    cdef double[:, ::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[:, ::1] a1v = np.ascontiguousarray(a1, dtype=np.float64)
    cdef double[:, ::1] a2v = np.ascontiguousarray(a2, dtype=np.float64)
    cdef double[:, ::1] ev = np.ascontiguousarray(emb, dtype=np.float64)
    cdef double[::1] gl = np.ascontiguousarray(g_logit, dtype=np.float64)
    cdef double[:, ::1] gev = np.ascontiguousarray(g_emb, dtype=np.float64)
    cdef double[:, ::1] w2v = np.ascontiguousarray(w2, dtype=np.float64)
    cdef double[:, ::1] w3v = np.ascontiguousarray(w3, dtype=np.float64)
    cdef double[:, ::1] w4v = np.ascontiguousarray(w4, dtype=np.float64)
    cdef Py_ssize_t M = xv.shape[0]
    cdef Py_ssize_t d0 = xv.shape[1], h1 = a1v.shape[1], h2 = a2v.shape[1], h3 = ev.shape[1]

    dw1 = np.empty((d0, h1)); db1 = np.empty(h1)
    dw2 = np.empty((h1, h2)); db2 = np.empty(h2)
    dw3 = np.empty((h2, h3)); db3 = np.empty(h3)
    dw4 = np.zeros((h3, 1)); db4 = np.zeros(1)
    g3 = np.empty((M, h3)); g2 = np.empty((M, h2)); g1 = np.empty((M, h1))
    cdef double[:, ::1] dw1v = dw1, dw2v = dw2, dw3v = dw3, dw4v = dw4
    cdef double[::1] db1v = db1, db2v = db2, db3v = db3, db4v = db4
    cdef double[:, ::1] g3v = g3, g2v = g2, g1v = g1
    cdef Py_ssize_t m, i
    cdef double ge
    with nogil:
        for m in range(M):
            db4v[0] += gl[m]
            for i in range(h3):
                dw4v[i, 0] += ev[m, i] * gl[m]
                if ev[m, i] > 0.0:
                    g3v[m, i] = gev[m, i] + gl[m] * w4v[i, 0]
                else:
                    g3v[m, i] = 0.0
        _dense_backward(a2v, g3v, dw3v, db3v)
        _propagate(g3v, w3v, a2v, g2v)
        _dense_backward(a1v, g2v, dw2v, db2v)
        _propagate(g2v, w2v, a1v, g1v)
        _dense_backward(xv, g1v, dw1v, db1v)
    return dw1, db1, dw2, db2, dw3, db3, dw4, db4
