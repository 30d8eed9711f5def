"""Multimodal exponentially modified Gaussian (MEMG) echo fitting.

Each echo on a channel envelope is modelled as

    m(t) = alpha * exp(-(t - mu)**2 / (2 sigma**2)) * (1 + erf(eta (t - mu) / (sigma sqrt 2)))

and a channel holds the sum of ``K`` such components, one per detected ToA.
The parameters are estimated by Levenberg-Marquardt on the squared residual
with analytic Jacobians. Times are in sample units (``t_i = i``).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import erf

from . import _backend
from .errors import DataError, FitDivergenceError
from .signal import ToaDetection

SIGMA_FLOOR = 0.25
INIT_SIGMA = 2.0
FEATURE_DIM = 8
FEATURE_NAMES = ("alpha", "mu", "sigma", "eta", "echo_conf", "power", "toa", "frame_conf")


@dataclass(frozen=True)
class EmgParams:
    alpha: float
    mu: float
    sigma: float
    eta: float

    def as_array(self) -> np.ndarray:
        return np.array([self.alpha, self.mu, self.sigma, self.eta], dtype=float)


@dataclass(frozen=True)
class LMConfig:
    # 1e-12 / 100 stops on the flat plateau around eta = 0, where the eta and
    # mu Jacobian columns coincide; a tighter stop lets the fit leave it.
    max_iterations: int = 200
    initial_damping: float = 1e-3
    damping_factor: float = 10.0
    energy_tolerance: float = 1e-20
    sigma_floor: float = SIGMA_FLOOR
    init_sigma: float = INIT_SIGMA
    # Gauss-Newton cannot see its way off eta = 0 (zero curvature in the
    # mu/eta trade-off direction), so cold starts also try skewed shapes.
    eta_starts: tuple[float, ...] = (0.0, 1.0, -1.0)


@dataclass
class ChannelFit:
    params: list[EmgParams]
    energy: float
    initial_energy: float
    iterations: int
    init_toas: list[float] = field(default_factory=list)


@dataclass
class MemgFrameFit:
    channels: list[ChannelFit]

    @property
    def params(self) -> list[list[EmgParams]]:
        return [c.params for c in self.channels]

    @property
    def energies(self) -> list[float]:
        return [c.energy for c in self.channels]

    @property
    def iterations(self) -> list[int]:
        return [c.iterations for c in self.channels]


@dataclass(frozen=True)
class EchoFeature:
    params: EmgParams
    echo_confidence: float
    echo_power: float
    toa: float  # sample units
    frame_confidence: float

    def as_vector(self) -> np.ndarray:
        p = self.params
        return np.array([p.alpha, p.mu, p.sigma, p.eta, self.echo_confidence,
                         self.echo_power, self.toa, self.frame_confidence])


def emg_eval(p: EmgParams, t):
    t = np.asarray(t, dtype=float)
    u = t - p.mu
    return p.alpha * np.exp(-u * u / (2.0 * p.sigma ** 2)) * (
        1.0 + erf(p.eta * u / (p.sigma * np.sqrt(2.0))))


def memg_sum(params: Sequence[EmgParams], t):
    t = np.asarray(t, dtype=float)
    total = np.zeros_like(t)
    for p in params:
        total = total + emg_eval(p, t)
    return total


def emg_jacobian(p: EmgParams, t) -> np.ndarray:
    """Partial derivatives of :func:`emg_eval`, shape ``(len(t), 4)``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    u = t - p.mu
    g = np.exp(-u * u / (2.0 * p.sigma ** 2))
    z = p.eta * u / (p.sigma * np.sqrt(2.0))
    e = 1.0 + erf(z)
    de = 2.0 / np.sqrt(np.pi) * np.exp(-z * z)
    s2 = p.sigma * np.sqrt(2.0)
    return np.stack([
        g * e,
        p.alpha * g * (u / p.sigma ** 2 * e - de * p.eta / s2),
        p.alpha * g * (u * u / p.sigma ** 3 * e - de * z / p.sigma),
        p.alpha * g * de * u / s2,
    ], axis=1)


def echo_power(p: EmgParams, n_samples: int) -> float:
    return float(np.sum(emg_eval(p, np.arange(n_samples))))


def climb_to_peak(envelope: np.ndarray, start: int, max_steps: int) -> int:
    """Follow the rising edge from ``start`` to the next local maximum."""
    i = start
    while i + 1 < len(envelope) and i - start < max_steps and envelope[i + 1] > envelope[i]:
        i += 1
    return i


def _init_params(envelope: np.ndarray, toas: Sequence[float], cfg: LMConfig) -> np.ndarray:
    # A rising-edge ToA sits about 2 sigma ahead of the echo maximum; LM
    # started there tends to diverge, so start from the peak it leads to.
    T = len(envelope)
    rows = []
    for t in toas:
        i = int(np.clip(round(t), 0, T - 1))
        i = climb_to_peak(envelope, i, int(np.ceil(3 * cfg.init_sigma)))
        rows.append([max(float(envelope[i]), 0.0), float(i), cfg.init_sigma, 0.0])
    return np.array(rows, dtype=float).reshape(-1)


def _levenberg_marquardt(y: np.ndarray, theta: np.ndarray, cfg: LMConfig):
    theta, energy, initial, iterations = _backend.lm_fit(
        y, theta, cfg.max_iterations, cfg.initial_damping, cfg.damping_factor,
        cfg.energy_tolerance, cfg.sigma_floor)
    if not np.isfinite(initial):
        raise FitDivergenceError("non-finite energy at initialization")
    if not np.isfinite(energy):
        raise FitDivergenceError("non-finite energy")
    return np.asarray(theta, dtype=float), float(energy), float(initial), int(iterations)


def _leave_eta_plateau(y, best, cfg: LMConfig, flat: float = 0.05, kick: float = 0.5):
    # eta = 0 is a degenerate stationary point (zero slope and curvature of
    # the profile energy), so nearly symmetric fits get one push along the
    # mu/eta valley in each direction.
    comps = best[0].reshape(-1, 4)
    for k in np.flatnonzero(np.abs(comps[:, 3]) < flat):
        for eta in (kick, -kick):
            th = best[0].reshape(-1, 4).copy()
            th[k, 1] -= np.sqrt(2.0 / np.pi) * (eta - th[k, 3]) * th[k, 2]
            th[k, 3] = eta
            out = _levenberg_marquardt(y, th.reshape(-1), cfg)
            if out[1] < best[1]:
                best = (out[0], out[1], best[2], best[3] + out[3])
    return best


def fit_channel(envelope, init, cfg: LMConfig | None = None) -> ChannelFit:
    """Fit one channel. ``init`` holds detections or raw sample positions,
    or a list of :class:`EmgParams` to warm-start from.

    Cold starts run once per entry of ``cfg.eta_starts`` and keep the lowest
    energy; a warm start runs once.
    """
    cfg = cfg or LMConfig()
    y = np.asarray(envelope, dtype=float)
    if y.ndim != 1:
        raise DataError("envelope must be 1-D")
    init = list(init)
    if init and isinstance(init[0], EmgParams):
        starts = [np.concatenate([p.as_array() for p in init])]
        toas = [p.mu for p in init]
    else:
        toas = [float(d.sample_index) if isinstance(d, ToaDetection) else float(d) for d in init]
        base = _init_params(y, toas, cfg).reshape(-1, 4)
        starts = []
        for eta in cfg.eta_starts or (0.0,):
            th = base.copy()
            th[:, 3] = eta
            # to first order a skewed pulse peaks sqrt(2/pi) eta sigma after mu
            th[:, 1] -= np.sqrt(2.0 / np.pi) * eta * th[:, 2]
            starts.append(th.reshape(-1))
    if not toas:
        e0 = float(y @ y)
        return ChannelFit([], e0, e0, 0, [])

    best = None
    for theta in starts:
        out = _levenberg_marquardt(y, theta, cfg)
        if best is None or out[1] < best[1]:
            best = out
    if len(starts) > 1:
        best = _leave_eta_plateau(y, best, cfg)
    theta, energy, initial, iterations = best
    params = [EmgParams(*map(float, row)) for row in theta.reshape(-1, 4)]
    return ChannelFit(params, energy, initial, iterations, toas)


def fit_memg(envelopes, detections, cfg: LMConfig | None = None) -> MemgFrameFit:
    """Fit every channel of a frame.

    ``envelopes`` is ``(N, T)`` with one detection list per channel; a single
    1-D envelope with one flat list is accepted too.
    """
    env = np.asarray(envelopes, dtype=float)
    if env.ndim == 1:
        return MemgFrameFit([fit_channel(env, detections, cfg)])
    if len(detections) != env.shape[0]:
        raise DataError(f"{env.shape[0]} channels but {len(detections)} detection lists")
    return MemgFrameFit([fit_channel(e, d, cfg) for e, d in zip(env, detections)])


def _ratio_confidence(residual: float, energy: float) -> float:
    if energy <= 0.0:
        return 1.0 if residual <= 0.0 else 0.0
    return float(min(1.0, max(0.0, 1.0 - residual / energy)))


def frame_confidence(envelope, fit: ChannelFit) -> float:
    """Fraction of channel energy explained by the fit."""
    y = np.asarray(envelope, dtype=float)
    return _ratio_confidence(fit.energy, float(y @ y))


def echo_confidence(envelope, fit: ChannelFit, k: int) -> float:
    """Explained-energy fraction inside ``mu_k +/- 3 sigma_k``."""
    y = np.asarray(envelope, dtype=float)
    p = fit.params[k]
    lo = max(int(np.ceil(p.mu - 3 * p.sigma)), 0)
    hi = min(int(np.floor(p.mu + 3 * p.sigma)), len(y) - 1)
    if hi < lo:
        return 0.0
    t = np.arange(lo, hi + 1)
    r = y[lo:hi + 1] - memg_sum(fit.params, t)
    return _ratio_confidence(float(r @ r), float(y[lo:hi + 1] @ y[lo:hi + 1]))


def assemble_features(fit: MemgFrameFit, envelopes) -> list[list[EchoFeature]]:
    env = np.atleast_2d(np.asarray(envelopes, dtype=float))
    out = []
    for ch, y in zip(fit.channels, env):
        cn = frame_confidence(y, ch)
        feats = []
        for k, p in enumerate(ch.params):
            toa = ch.init_toas[k] if k < len(ch.init_toas) else p.mu
            feats.append(EchoFeature(p, echo_confidence(y, ch, k), echo_power(p, len(y)), float(toa), cn))
        out.append(feats)
    return out
