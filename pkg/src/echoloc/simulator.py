"""Synthetic A-scan scenes with known ground truth.

Frames hold demodulated envelopes: every target contributes one EMG echo per
channel at its round-trip ToA, with amplitude ``reflectivity / path**2``.
Clutter echoes and white noise are added on top. The generator records
which component on which channel belongs to a target so labels derived from
detections can be checked against it.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DataError, OutOfRangeError
from .geometry import SensorLayout, as_vec3
from .memg import EmgParams, emg_eval
from .signal import Frame

SAMPLE_RATE = 22_000.0
N_SAMPLES = 64
SPEED_OF_SOUND = 343.0
TRIANGLE_RADIUS = 0.075
TARGET_SIGMA = 2.0
TARGET_ETA = 1.0
LABEL_GATE = 2.0  # samples

REFERENCE_GRID_XY = (-0.08, 0.0, 0.08)
REFERENCE_GRID_Z = (0.10, 0.18)


def forward_toa(u, v, s, speed_of_sound: float) -> float:
    """Emitter ``u`` -> target ``s`` -> receiver ``v`` travel time in seconds."""
    if not speed_of_sound > 0:
        raise DataError("speed_of_sound must be positive")
    u, v, s = as_vec3(u), as_vec3(v), as_vec3(s)
    return float((np.linalg.norm(u - s) + np.linalg.norm(s - v)) / speed_of_sound)


def default_layout() -> SensorLayout:
    """Emitter at the origin, three receivers on an equilateral triangle of
    radius 75 mm in the z=0 plane (first vertex on +x), and a fourth
    receiver collocated with the emitter.

    Where the fourth receiver sits on the real device is unknown; placing it
    on the emitter makes that channel monostatic.
    """
    angles = np.deg2rad([0.0, 120.0, 240.0])
    tri = np.column_stack([TRIANGLE_RADIUS * np.cos(angles), TRIANGLE_RADIUS * np.sin(angles), np.zeros(3)])
    receivers = np.vstack([tri, np.zeros(3)])
    return SensorLayout(emitter=np.zeros(3), receivers=receivers, speed_of_sound=SPEED_OF_SOUND)


def reference_grid() -> list[np.ndarray]:
    """The 18 ground-truth positions (3 x 3 x 2 lattice, meters)."""
    return [np.array([x, y, z]) for x, y, z in itertools.product(REFERENCE_GRID_XY, REFERENCE_GRID_XY, REFERENCE_GRID_Z)]


@dataclass
class Scene:
    layout: SensorLayout
    targets: list = field(default_factory=list)
    reflectivity: list = field(default_factory=list)
    clutter: list = field(default_factory=list)  # (channel, EmgParams)
    noise_std: float = 0.0
    rng_seed: int = 0
    sample_rate: float = SAMPLE_RATE
    n_samples: int = N_SAMPLES

    def __post_init__(self):
        self.targets = [as_vec3(t) for t in self.targets]
        if not self.reflectivity:
            self.reflectivity = [1.0] * len(self.targets)
        if len(self.reflectivity) != len(self.targets):
            raise DataError("one reflectivity per target required")
        for i, (t, r) in enumerate(zip(self.targets, self.reflectivity)):
            if not 0 < r <= 1:
                raise DataError(f"target {i}: reflectivity must lie in (0, 1]")
            if float((t - self.layout.emitter) @ self.layout.boresight) <= 0:
                raise DataError(f"target {i} at {t} is not in front of the sensor plane")
        if self.noise_std < 0:
            raise DataError("noise_std must be nonnegative")
        for c, _ in self.clutter:
            if not 0 <= c < self.layout.n_receivers:
                raise DataError(f"clutter channel {c} out of range")


@dataclass
class FrameTruth:
    """Generator bookkeeping for one frame.

    ``components[n]`` lists every EMG placed on channel ``n`` and
    ``target_of[n][j]`` names the target index of component ``j`` (or
    ``None`` for clutter).
    """

    components: list[list[EmgParams]]
    target_of: list[list[int | None]]
    gt_mu: np.ndarray  # (targets, channels) in samples

    def echo_labels(self, target: int = 0) -> list[list[int]]:
        return [[int(t == target) for t in row] for row in self.target_of]


def target_echo(layout: SensorLayout, target, n: int, reflectivity: float = 1.0,
                sample_rate: float = SAMPLE_RATE) -> EmgParams:
    tof = forward_toa(layout.emitter, layout.receivers[n], target, layout.speed_of_sound)
    path = tof * layout.speed_of_sound
    return EmgParams(reflectivity / path ** 2, tof * sample_rate, TARGET_SIGMA, TARGET_ETA)


def synthesize_frame(scene: Scene) -> tuple[Frame, FrameTruth]:
    layout = scene.layout
    N, T = layout.n_receivers, scene.n_samples
    t = np.arange(T, dtype=float)
    components: list[list[EmgParams]] = [[] for _ in range(N)]
    target_of: list[list[int | None]] = [[] for _ in range(N)]
    gt_mu = np.zeros((len(scene.targets), N))
    for i, (s, r) in enumerate(zip(scene.targets, scene.reflectivity)):
        for n in range(N):
            p = target_echo(layout, s, n, r, scene.sample_rate)
            if not 0 <= p.mu < T:
                raise OutOfRangeError(
                    f"target {i} at {np.round(s, 4).tolist()} m arrives at sample {p.mu:.2f} "
                    f"on channel {n}, outside the {T}-sample window"
                )
            gt_mu[i, n] = p.mu
            components[n].append(p)
            target_of[n].append(i)
    for c, p in scene.clutter:
        components[c].append(p)
        target_of[c].append(None)

    channels = np.zeros((N, T))
    for n in range(N):
        for p in components[n]:
            channels[n] += emg_eval(p, t)
    if scene.noise_std > 0:
        rng = np.random.default_rng(scene.rng_seed)
        channels += rng.normal(0.0, scene.noise_std, size=channels.shape)
    gt = scene.targets[0] if len(scene.targets) == 1 else None
    frame = Frame(channels, scene.sample_rate, gt)
    return frame, FrameTruth(components, target_of, gt_mu)


def label_from_gt(gt, detections: Sequence[Sequence], layout: SensorLayout,
                  sample_rate: float = SAMPLE_RATE, gate: float = LABEL_GATE) -> list[list[int]]:
    """Mark, per channel, the detection nearest the projected GT ToA.

    ``detections[n]`` holds ToA positions in samples (floats, or objects with
    a ``sample_index`` attribute). Nothing is marked when the nearest one is
    more than ``gate`` samples off.
    """
    gt = as_vec3(gt)
    labels = []
    for n, dets in enumerate(detections):
        pos = np.array([getattr(d, "sample_index", d) for d in dets], dtype=float)
        row = [0] * len(pos)
        if len(pos):
            mu_gt = forward_toa(layout.emitter, layout.receivers[n], gt, layout.speed_of_sound) * sample_rate
            off = np.abs(pos - mu_gt)
            k = int(np.argmin(off))
            if off[k] <= gate:
                row[k] = 1
        labels.append(row)
    return labels


@dataclass(frozen=True)
class ClutterConfig:
    """Random clutter injected per channel.

    ``n_decoys`` echoes are placed ``decoy_offset`` samples from the target
    echo on each channel, with amplitude comparable to (often above) the
    target's and a different pulse shape. ``n_random`` further echoes land
    anywhere in the window away from the others.
    """

    n_decoys: int = 1
    n_random: int = 1
    decoy_offset: tuple[float, float] = (6.0, 9.0)
    amplitude_ratio: tuple[float, float] = (0.6, 1.6)
    sigma: tuple[float, float] = (0.9, 1.3)
    eta: tuple[float, float] = (-1.0, 0.0)
    min_separation: float = 6.0
    margin: float = 4.0


NO_CLUTTER = ClutterConfig(n_decoys=0, n_random=0)


def draw_clutter(rng: np.random.Generator, target_mu: np.ndarray, target_alpha: np.ndarray,
                 cfg: ClutterConfig, n_samples: int = N_SAMPLES) -> list[tuple[int, EmgParams]]:
    out = []
    for n, (mu_t, a_t) in enumerate(zip(target_mu, target_alpha)):
        taken = [mu_t]
        wanted = [("decoy", i) for i in range(cfg.n_decoys)] + [("random", i) for i in range(cfg.n_random)]
        for kind, _ in wanted:
            for _attempt in range(200):
                if kind == "decoy":
                    mu = mu_t + rng.choice([-1.0, 1.0]) * rng.uniform(*cfg.decoy_offset)
                else:
                    mu = rng.uniform(cfg.margin, n_samples - 2 * cfg.margin)
                ok = cfg.margin <= mu <= n_samples - 2 * cfg.margin
                if ok and all(abs(mu - m) >= cfg.min_separation for m in taken):
                    break
            else:
                continue
            taken.append(mu)
            p = EmgParams(a_t * rng.uniform(*cfg.amplitude_ratio), float(mu),
                          rng.uniform(*cfg.sigma), rng.uniform(*cfg.eta))
            out.append((n, p))
    return out


@dataclass
class LabeledDataset:
    frames: list[Frame]
    truths: list[FrameTruth]
    gt_mu: list[np.ndarray]
    manifest: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.frames)

    def n_components(self) -> int:
        return sum(len(c) for tr in self.truths for c in tr.components)


def generate_dataset(grid: Sequence | None = None, repetitions: int = 17, noise_std: float = 0.05,
                     clutter: ClutterConfig | None = None, seed: int = 0, layout: SensorLayout | None = None,
                     n_frames: int | None = None, jitter: float = 0.0,
                     reflectivity: tuple[float, float] = (0.5, 1.0)) -> LabeledDataset:
    """Frames for every grid position, ``repetitions`` times each.

    Each frame gets its own seed drawn from ``seed``, so the whole set is
    reproducible. ``jitter`` (meters) perturbs each target uniformly per
    axis; ``n_frames`` truncates the set. Target reflectivity is drawn
    uniformly from ``reflectivity`` per frame.
    """
    layout = layout or default_layout()
    grid = reference_grid() if grid is None else [as_vec3(g) for g in grid]
    if not grid:
        raise DataError("grid must not be empty")
    clutter = ClutterConfig() if clutter is None else clutter
    root = np.random.default_rng(seed)
    frames, truths, mus = [], [], []
    for rep in range(repetitions):
        for gi, g in enumerate(grid):
            if n_frames is not None and len(frames) >= n_frames:
                break
            frame_seed = int(root.integers(2**63 - 1))
            rng = np.random.default_rng(frame_seed)
            target = g + (rng.uniform(-jitter, jitter, 3) if jitter > 0 else 0.0)
            refl = float(rng.uniform(*reflectivity))
            echoes = [target_echo(layout, target, n, refl) for n in range(layout.n_receivers)]
            mu = np.array([e.mu for e in echoes])
            alpha = np.array([e.alpha for e in echoes])
            scene = Scene(layout, [target], [refl], draw_clutter(rng, mu, alpha, clutter),
                          noise_std, frame_seed)
            frame, truth = synthesize_frame(scene)
            frames.append(frame)
            truths.append(truth)
            mus.append(truth.gt_mu[0])
    manifest = {
        "schema_version": 1,
        "seed": seed,
        "grid": [np.round(g, 12).tolist() for g in grid],
        "repetitions": repetitions,
        "noise_std": noise_std,
        "jitter": jitter,
        "reflectivity": list(reflectivity),
        "clutter": {k: (list(v) if isinstance(v, tuple) else v) for k, v in clutter.__dict__.items()},
        "counts": {
            "frames": len(frames),
            "components": sum(len(c) for tr in truths for c in tr.components),
        },
    }
    return LabeledDataset(frames, truths, mus, manifest)
