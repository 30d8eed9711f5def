"""A-scan frames, envelope extraction and rising-edge ToA detection."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.signal import hilbert

from .errors import DataError, DimensionError

DEFAULT_RELATIVE_TAU = 0.1


@dataclass(frozen=True)
class Frame:
    """``N`` receiver channels of ``T`` amplitude samples each."""

    channels: np.ndarray
    sample_rate: float
    gt_position: np.ndarray | None = None

    def __post_init__(self):
        ch = np.asarray(self.channels, dtype=float)
        if ch.ndim != 2:
            raise DimensionError(f"channels must be 2-D (N, T), got shape {ch.shape}")
        if ch.shape[0] < 3:
            raise DimensionError(f"need at least 3 channels, got {ch.shape[0]}")
        if ch.shape[1] < 2:
            raise DimensionError("need at least 2 samples per channel")
        if not self.sample_rate > 0:
            raise DataError("sample_rate must be positive")
        object.__setattr__(self, "channels", ch)
        if self.gt_position is not None:
            gt = np.asarray(self.gt_position, dtype=float).reshape(3)
            object.__setattr__(self, "gt_position", gt)

    @property
    def n_receivers(self) -> int:
        return self.channels.shape[0]

    @property
    def n_samples(self) -> int:
        return self.channels.shape[1]


@dataclass(frozen=True)
class ToaDetection:
    channel: int
    sample_index: int
    toa: float  # seconds
    envelope_value: float


def hilbert_envelope(samples) -> np.ndarray:
    """Magnitude of the discrete analytic signal (FFT method)."""
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise DimensionError("hilbert_envelope expects a 1-D signal of length >= 2")
    return np.abs(hilbert(x))


def channel_envelope(samples, domain: str = "rf") -> np.ndarray:
    """Envelope of one channel.

    ``"rf"`` data carries the oscillation and goes through the analytic
    signal; ``"envelope"`` data is already a demodulated magnitude and is
    returned as is.
    """
    if domain == "rf":
        return hilbert_envelope(samples)
    if domain == "envelope":
        return np.asarray(samples, dtype=float).copy()
    raise DataError(f"unknown signal domain {domain!r}")


def rising_edges(envelope: np.ndarray, tau: float) -> np.ndarray:
    """First sample index of every run where the forward difference exceeds ``tau``."""
    above = np.diff(envelope) > tau
    starts = above & ~np.concatenate(([False], above[:-1]))
    return np.flatnonzero(starts)


def detect_toas(frame: Frame, tau: float | None = None, domain: str = "rf",
                relative_tau: float = DEFAULT_RELATIVE_TAU) -> list[list[ToaDetection]]:
    """Per-channel ToA detections, one per rising envelope edge.

    With ``tau=None`` each channel uses ``relative_tau`` times its own largest
    envelope gradient.
    """
    if tau is not None and not tau > 0:
        raise DataError("tau must be positive")
    out = []
    for n, samples in enumerate(frame.channels):
        env = channel_envelope(samples, domain)
        grad = np.diff(env)
        t = tau if tau is not None else relative_tau * float(grad.max(initial=0.0))
        dets = []
        if t > 0:
            for i in rising_edges(env, t):
                dets.append(ToaDetection(n, int(i), i / frame.sample_rate, float(env[i])))
        out.append(dets)
    return out


def background_subtract(frame: Frame, background: Frame) -> Frame:
    if frame.channels.shape != background.channels.shape:
        raise DimensionError(
            f"frame {frame.channels.shape} and background {background.channels.shape} differ"
        )
    if frame.sample_rate != background.sample_rate:
        raise DimensionError("frame and background sample rates differ")
    return replace(frame, channels=frame.channels - background.channels)


def range_from_toa(toa: float, speed_of_sound: float) -> float:
    """One-way range for a collocated emitter and receiver."""
    if toa < 0 or not speed_of_sound > 0:
        raise DataError("need toa >= 0 and speed_of_sound > 0")
    return speed_of_sound * toa / 2.0


def round_trip_distance(toa: float, speed_of_sound: float) -> float:
    """Full emitter-target-receiver path length."""
    if toa < 0 or not speed_of_sound > 0:
        raise DataError("need toa >= 0 and speed_of_sound > 0")
    return speed_of_sound * toa
