"""Spheroids spanned by an emitter, a receiver and a round-trip path length.

A target seen by emitter ``u`` and receiver ``v`` with round-trip path ``s``
lies on the prolate spheroid with foci ``u`` and ``v`` whose major semi-axis
is ``s / 2``. The spheroid is described in a local frame whose y-axis is the
major axis; world points map to it through ``R.T @ (p - c)``.

All lengths are in meters. Times of arrival are converted to path lengths
(``s = c_s * t``) before they reach this module.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, InfeasibleGeometryError

_Y_AXIS = np.array([0.0, 1.0, 0.0])


def as_vec3(p) -> np.ndarray:
    v = np.asarray(p, dtype=float).reshape(-1)
    if v.shape != (3,):
        raise DataError(f"expected a 3-vector, got shape {np.shape(p)}")
    if not np.all(np.isfinite(v)):
        raise DataError(f"non-finite coordinates {v}")
    return v


@dataclass(frozen=True)
class SensorLayout:
    """One emitter and ``N >= 3`` receivers in the world frame.

    ``boresight`` is the unit send direction of the emitter; it selects the
    half-space in front of the array.
    """

    emitter: np.ndarray
    receivers: np.ndarray
    speed_of_sound: float = 343.0
    boresight: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 1.0]))

    def __post_init__(self):
        object.__setattr__(self, "emitter", as_vec3(self.emitter))
        rx = np.asarray(self.receivers, dtype=float)
        if rx.ndim != 2 or rx.shape[1] != 3 or rx.shape[0] < 3:
            raise DataError(f"need at least 3 receivers as an (N, 3) array, got {rx.shape}")
        if not np.all(np.isfinite(rx)):
            raise DataError("non-finite receiver coordinates")
        for i in range(len(rx)):
            for j in range(i + 1, len(rx)):
                if np.allclose(rx[i], rx[j], rtol=0.0, atol=1e-12):
                    raise DataError(f"receivers {i} and {j} coincide")
        object.__setattr__(self, "receivers", rx)
        if not self.speed_of_sound > 0:
            raise DataError("speed of sound must be positive")
        b = as_vec3(self.boresight)
        nb = np.linalg.norm(b)
        if nb == 0:
            raise DataError("boresight must be nonzero")
        object.__setattr__(self, "boresight", b / nb)

    @property
    def n_receivers(self) -> int:
        return len(self.receivers)

    def baselines(self) -> np.ndarray:
        return np.linalg.norm(self.receivers - self.emitter, axis=1)


@dataclass(frozen=True)
class Ellipsoid:
    center: np.ndarray
    rotation: np.ndarray
    radii: np.ndarray

    @property
    def focal_half_distance(self) -> float:
        r_a, r_b, _ = self.radii
        return float(np.sqrt(max(r_b * r_b - r_a * r_a, 0.0)))

    def foci(self) -> tuple[np.ndarray, np.ndarray]:
        axis = self.rotation @ _Y_AXIS
        f = self.focal_half_distance
        return self.center - f * axis, self.center + f * axis

    def surface_point(self, theta: float, phi: float) -> np.ndarray:
        """Parametric surface point; ``theta`` is measured from the major axis."""
        r_a, r_b, r_c = self.radii
        local = np.array([
            r_a * np.sin(theta) * np.cos(phi),
            r_b * np.cos(theta),
            r_c * np.sin(theta) * np.sin(phi),
        ])
        return self.center + self.rotation @ local


def radii_from_toa(s: float, b: float) -> tuple[float, float, float]:
    """Radii ``(r_a, r_b, r_c)`` for round-trip length ``s`` and baseline ``b``."""
    if not b >= 0:
        raise DataError(f"baseline must be nonnegative, got {b}")
    if not s > b:
        raise InfeasibleGeometryError(
            f"round-trip path {s:.6g} m does not exceed baseline {b:.6g} m"
        )
    r_b = 0.5 * s
    # (s - b)(s + b) keeps the focal identity tight when s is close to b
    r_a = 0.5 * np.sqrt((s - b) * (s + b))
    return float(r_a), float(r_b), float(r_a)


def _skew(w) -> np.ndarray:
    return np.array([
        [0.0, -w[2], w[1]],
        [w[2], 0.0, -w[0]],
        [-w[1], w[0], 0.0],
    ])


def rotation_y_to(direction) -> np.ndarray:
    """Proper rotation taking the local y-axis onto ``direction``.

    For directions in the upper half (``d_y >= 0``) this is the minimal
    rotation. Below that, the minimal formula divides by ``1 + d_y`` and
    loses precision near -y, so a half turn about x is applied first and the
    remaining rotation starts from -y. The spheroid is symmetric about its
    major axis, so either choice gives the same surface.
    """
    d = as_vec3(direction)
    d = d / np.linalg.norm(d)
    if d[1] >= 0.0:
        wx = _skew(np.cross(_Y_AXIS, d))
        return np.eye(3) + wx + wx @ wx / (1.0 + d[1])
    wx = _skew(np.cross(-_Y_AXIS, d))
    r = np.eye(3) + wx + wx @ wx / (1.0 - d[1])
    return r @ np.diag([1.0, -1.0, -1.0])


def ellipsoid_from_pair(u, v, s: float) -> Ellipsoid:
    """Spheroid with foci ``u``, ``v`` containing all paths of length ``s``."""
    u = as_vec3(u)
    v = as_vec3(v)
    baseline = v - u
    b = float(np.linalg.norm(baseline))
    radii = np.array(radii_from_toa(s, b))
    if b == 0.0:
        rot = np.eye(3)
    else:
        rot = rotation_y_to(baseline / b)
    return Ellipsoid(center=0.5 * (u + v), rotation=rot, radii=radii)


def to_local(point, e: Ellipsoid) -> np.ndarray:
    return e.rotation.T @ (np.asarray(point, dtype=float) - e.center)


def quadric_eval(point, e: Ellipsoid) -> float:
    """Implicit surface value; zero on the surface, -1 at the center."""
    q = to_local(point, e) / e.radii
    return float(q @ q - 1.0)


def quadric_grad(point, e: Ellipsoid) -> np.ndarray:
    """World-frame gradient of :func:`quadric_eval`."""
    local = to_local(point, e)
    return e.rotation @ (2.0 * local / (e.radii * e.radii))
