"""Common root of several spheroid surface functions.

The target is the point where every quadric vanishes. The solver runs a
damped Gauss-Newton iteration ``s <- s - gamma * pinv(J) @ f`` and returns
the iterate with the smallest total absolute residual.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataError, DegenerateConfigurationError, DivergenceError
from .geometry import Ellipsoid, as_vec3, quadric_eval, quadric_grad

_RANK_RTOL = 1e-12


@dataclass(frozen=True)
class SolverConfig:
    step_size: float = 0.5
    max_iterations: int = 100
    residual_tolerance: float = 1e-9
    init_point: object = "auto"  # "auto" or a 3-vector

    def __post_init__(self):
        if not 0 < self.step_size <= 1:
            raise DataError("step_size must lie in (0, 1]")
        if self.max_iterations < 1:
            raise DataError("max_iterations must be >= 1")
        if not self.residual_tolerance > 0:
            raise DataError("residual_tolerance must be positive")


@dataclass
class SolveResult:
    position: np.ndarray
    residual_sum: float
    iterations_used: int
    per_iteration_residuals: list[float] = field(default_factory=list)
    converged: bool = False


def residual_vector(point, ellipsoids: Sequence[Ellipsoid]) -> np.ndarray:
    return np.array([quadric_eval(point, e) for e in ellipsoids])


def jacobian(point, ellipsoids: Sequence[Ellipsoid]) -> np.ndarray:
    return np.array([quadric_grad(point, e) for e in ellipsoids]).reshape(-1, 3)


def _shared_focus(ellipsoids: Sequence[Ellipsoid], atol: float = 1e-9):
    candidates = ellipsoids[0].foci()
    for cand in candidates:
        if all(min(np.linalg.norm(f - cand) for f in e.foci()) <= atol for e in ellipsoids[1:]):
            return cand
    return None


def auto_init(ellipsoids: Sequence[Ellipsoid], origin=None, direction=(0.0, 0.0, 1.0)) -> np.ndarray:
    """Start point in front of the array.

    ``origin`` defaults to the focus shared by all spheroids (the emitter),
    falling back to the mean center. The start point sits one mean major
    radius away from it along ``direction``.
    """
    if len(ellipsoids) < 1:
        raise DataError("auto_init needs at least one ellipsoid")
    if origin is None:
        origin = _shared_focus(ellipsoids)
        if origin is None:
            origin = np.mean([e.center for e in ellipsoids], axis=0)
    origin = as_vec3(origin)
    d = as_vec3(direction)
    d = d / np.linalg.norm(d)
    reach = float(np.mean([e.radii[1] for e in ellipsoids]))
    return origin + reach * d


def solve(ellipsoids: Sequence[Ellipsoid], cfg: SolverConfig | None = None,
          origin=None, direction=(0.0, 0.0, 1.0)) -> SolveResult:
    """Locate the intersection of ``N >= 3`` spheroids.

    ``origin`` and ``direction`` only matter when ``cfg.init_point`` is
    ``"auto"``. Non-intersecting inputs yield the least-residual iterate with
    ``converged=False``.
    """
    cfg = cfg or SolverConfig()
    ellipsoids = list(ellipsoids)
    if len(ellipsoids) < 3:
        raise DataError(f"need at least 3 ellipsoids, got {len(ellipsoids)}")

    if isinstance(cfg.init_point, str):
        if cfg.init_point != "auto":
            raise DataError(f"unknown init_point {cfg.init_point!r}")
        s = auto_init(ellipsoids, origin=origin, direction=direction)
    else:
        s = as_vec3(cfg.init_point)

    history: list[float] = []
    iterates: list[np.ndarray] = []
    rank_deficient = []
    iterations = 0
    for j in range(cfg.max_iterations + 1):
        f = residual_vector(s, ellipsoids)
        score = float(np.sum(np.abs(f)))
        if not np.isfinite(score):
            raise DivergenceError(f"non-finite residual at iteration {j}")
        history.append(score)
        iterates.append(s)
        if score <= cfg.residual_tolerance or j == cfg.max_iterations:
            break
        J = jacobian(s, ellipsoids)
        sv = np.linalg.svd(J, compute_uv=False)
        rank_deficient.append(sv[-1] <= _RANK_RTOL * max(sv[0], np.finfo(float).tiny))
        step, *_ = np.linalg.lstsq(J, f, rcond=_RANK_RTOL)
        s = s - cfg.step_size * step
        iterations = j + 1
        if not np.all(np.isfinite(s)):
            raise DivergenceError(f"non-finite iterate at iteration {j + 1}")

    best = int(np.argmin(history))
    if rank_deficient and all(rank_deficient) and history[best] >= history[0]:
        raise DegenerateConfigurationError(
            "Jacobian rank-deficient at every iterate without residual progress"
        )
    return SolveResult(
        position=iterates[best].copy(),
        residual_sum=history[best],
        iterations_used=iterations,
        per_iteration_residuals=history,
        converged=history[best] <= cfg.residual_tolerance,
    )
