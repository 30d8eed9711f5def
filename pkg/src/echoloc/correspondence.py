"""Siamese MLP echo correspondence.

One small MLP (8-32-32-4-1) is shared by every echo. Its sigmoid output
scores how suitable an echo is as the reference, and its 4-D post-ReLU
embedding measures similarity between echoes. Per channel, the echo closest
to the reference embedding is taken as the match.

Labels follow the ground-truth convention ``Y = 1`` for the true target echo
of a channel. The contrastive loss, as written, pulls together pairs
labelled 0 and pushes apart pairs labelled 1, and the reference is picked by
arg min of the score. Training therefore feeds the losses with the targets
produced by :func:`training_targets`, which depend on ``arg_convention``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import _backend
from .errors import DataError, DegenerateDatasetError, NoEchoError

DEFAULT_DIMS = (8, 32, 32, 4, 1)
BCE_CLAMP = 1e-7
ARG_CONVENTIONS = ("min", "max")


@dataclass
class MlpWeights:
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray
    w3: np.ndarray
    b3: np.ndarray
    w4: np.ndarray
    b4: np.ndarray
    feature_mean: np.ndarray | None = None
    feature_std: np.ndarray | None = None
    arg_convention: str = "min"
    margin_q: float = 1.0
    feature_indices: tuple[int, ...] | None = None

    def __post_init__(self):
        for name in ("w1", "w2", "w3", "w4"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        for name in ("b1", "b2", "b3", "b4"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))
        dims = self.dims
        for i, (w, b) in enumerate(zip(self.matrices, self.biases)):
            if w.shape != (dims[i], dims[i + 1]) or b.shape != (dims[i + 1],):
                raise DataError(f"layer {i + 1} shape mismatch: W{w.shape}, b{b.shape}")
        if dims[-1] != 1:
            raise DataError("output layer must have a single unit")
        d0 = dims[0]
        self.feature_mean = np.zeros(d0) if self.feature_mean is None else np.asarray(self.feature_mean, float)
        self.feature_std = np.ones(d0) if self.feature_std is None else np.asarray(self.feature_std, float)
        if self.feature_mean.shape != (d0,) or self.feature_std.shape != (d0,):
            raise DataError("feature statistics must match the input width")
        if self.arg_convention not in ARG_CONVENTIONS:
            raise DataError(f"arg_convention must be one of {ARG_CONVENTIONS}")
        if not self.margin_q > 0:
            raise DataError("margin_q must be positive")
        if self.feature_indices is not None:
            self.feature_indices = tuple(int(i) for i in self.feature_indices)
            if len(self.feature_indices) != d0:
                raise DataError("feature_indices length must equal the input width")

    @property
    def matrices(self):
        return (self.w1, self.w2, self.w3, self.w4)

    @property
    def biases(self):
        return (self.b1, self.b2, self.b3, self.b4)

    @property
    def dims(self) -> tuple[int, ...]:
        return (self.w1.shape[0], self.w1.shape[1], self.w2.shape[1], self.w3.shape[1], self.w4.shape[1])

    def params(self) -> list[np.ndarray]:
        return [self.w1, self.b1, self.w2, self.b2, self.w3, self.b3, self.w4, self.b4]

    def with_params(self, params: Sequence[np.ndarray]) -> "MlpWeights":
        w1, b1, w2, b2, w3, b3, w4, b4 = (np.array(p, dtype=float) for p in params)
        return replace(self, w1=w1, b1=b1, w2=w2, b2=b2, w3=w3, b3=b3, w4=w4, b4=b4)

    def prepare(self, features) -> np.ndarray:
        """Select and standardize raw feature rows."""
        x = np.atleast_2d(np.asarray(features, dtype=float))
        if self.feature_indices is not None and x.shape[1] != len(self.feature_indices):
            x = x[:, list(self.feature_indices)]
        if x.shape[1] != self.dims[0]:
            raise DataError(f"expected {self.dims[0]} features, got {x.shape[1]}")
        return (x - self.feature_mean) / self.feature_std


def init_weights(rng: np.random.Generator, dims: Sequence[int] = DEFAULT_DIMS, **kwargs) -> MlpWeights:
    """Glorot-uniform weights, zero biases."""
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        layers += [rng.uniform(-limit, limit, size=(fan_in, fan_out)), np.zeros(fan_out)]
    return MlpWeights(*layers, **kwargs)


def zero_weights(dims: Sequence[int] = DEFAULT_DIMS, **kwargs) -> MlpWeights:
    layers = []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        layers += [np.zeros((fan_in, fan_out)), np.zeros(fan_out)]
    return MlpWeights(*layers, **kwargs)


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def _forward_std(x: np.ndarray, w: MlpWeights):
    a1, a2, emb, z4 = _backend.mlp_forward(x, w.w1, w.b1, w.w2, w.b2, w.w3, w.b3, w.w4, w.b4)
    return a1, a2, emb, z4


def mlp_forward(features, w: MlpWeights):
    """Scores in (0, 1) and 4-D embeddings.

    A single feature vector returns ``(float, (4,) array)``; a 2-D batch
    returns ``((M,), (M, 4))``.
    """
    single = np.ndim(features) == 1
    _, _, emb, z4 = _forward_std(w.prepare(features), w)
    b = sigmoid(z4)
    if single:
        return float(b[0]), emb[0]
    return b, emb


def bce_loss(labels, scores) -> float:
    y = np.asarray(labels, dtype=float)
    b = np.clip(np.asarray(scores, dtype=float), BCE_CLAMP, 1.0 - BCE_CLAMP)
    return float(np.sum(-(y * np.log(b) + (1.0 - y) * np.log(1.0 - b))))


def dissimilarity(a, b) -> float:
    return float(np.linalg.norm(np.asarray(a, dtype=float) - np.asarray(b, dtype=float)))


def contrastive_loss(labels, distances, margin: float) -> float:
    """``sum (1-Y) d^2 / 2 + Y max(0, q - d^2) / 2``."""
    if not margin > 0:
        raise DataError("margin must be positive")
    y = np.asarray(labels, dtype=float)
    d2 = np.asarray(distances, dtype=float) ** 2
    return float(np.sum((1.0 - y) * d2 / 2.0 + y * np.maximum(0.0, margin - d2) / 2.0))


def total_loss(labels, scores, distances, lambda_c: float, lambda_b: float,
               margin: float = 1.0, pair_labels=None) -> float:
    pair = labels if pair_labels is None else pair_labels
    return lambda_c * contrastive_loss(pair, distances, margin) + lambda_b * bce_loss(labels, scores)


def training_targets(labels, arg_convention: str = "min"):
    """BCE targets and contrastive pair labels for ground-truth labels ``Y``.

    Pair label 1 marks a dissimilar pair (non-target echo against the
    reference). Under ``"min"`` the score is trained low on the target echo
    so that arg min finds it; under ``"max"`` it is trained high.
    """
    y = np.asarray(labels, dtype=float)
    pair = 1.0 - y
    if arg_convention == "min":
        return 1.0 - y, pair
    if arg_convention == "max":
        return y, pair
    raise DataError(f"unknown arg_convention {arg_convention!r}")


# --- selection and matching -------------------------------------------------

@dataclass
class Correspondence:
    reference: tuple[int, int]
    matches: list[int | None]
    distances: list[float | None]
    scores: list[np.ndarray] = field(default_factory=list)


def _stack(features: Sequence[Sequence]) -> tuple[np.ndarray, list[tuple[int, int]]]:
    rows, index = [], []
    for n, chan in enumerate(features):
        for k, f in enumerate(chan):
            rows.append(f.as_vector() if hasattr(f, "as_vector") else np.asarray(f, dtype=float))
            index.append((n, k))
    if not rows:
        raise NoEchoError("no echoes in any channel")
    return np.vstack(rows), index


def _pick(values: np.ndarray, convention: str) -> int:
    # np.argmin / argmax return the first occurrence -> lexicographic tie-break
    return int(np.argmin(values) if convention == "min" else np.argmax(values))


def echo_scores(features, w: MlpWeights):
    x, index = _stack(features)
    b, emb = mlp_forward(x, w)
    return b, emb, index


def select_reference(features, w: MlpWeights, convention: str | None = None) -> tuple[int, int]:
    b, _, index = echo_scores(features, w)
    return index[_pick(b, convention or w.arg_convention)]


def match_echoes(features, w: MlpWeights, reference: tuple[int, int] | None = None) -> Correspondence:
    """Per channel, the echo whose embedding is closest to the reference's."""
    b, emb, index = echo_scores(features, w)
    if reference is None:
        reference = index[_pick(b, w.arg_convention)]
    ref_emb = emb[index.index(tuple(reference))]
    n_channels = len(features)
    matches: list[int | None] = [None] * n_channels
    dists: list[float | None] = [None] * n_channels
    scores = [np.array([b[i] for i, (n, _) in enumerate(index) if n == c]) for c in range(n_channels)]
    for c in range(n_channels):
        if c == reference[0]:
            matches[c], dists[c] = reference[1], 0.0
            continue
        rows = [i for i, (n, _) in enumerate(index) if n == c]
        if not rows:
            continue
        d = np.linalg.norm(emb[rows] - ref_emb, axis=1)
        best = int(np.argmin(d))
        matches[c], dists[c] = index[rows[best]][1], float(d[best])
    return Correspondence(tuple(reference), matches, dists, scores)


# --- ablation baselines -----------------------------------------------------

def munkres_assign(cost) -> tuple[np.ndarray, np.ndarray]:
    """Minimum-cost one-to-one assignment of a rectangular cost matrix."""
    c = np.asarray(cost, dtype=float)
    if c.ndim != 2:
        raise DataError("cost matrix must be 2-D")
    return linear_sum_assignment(c)


def argmax_amplitude_reference(features) -> tuple[int, int]:
    x, index = _stack(features)
    return index[int(np.argmax(x[:, 0]))]


def munkres_match(features, reference: tuple[int, int], toa_index: int = 6) -> Correspondence:
    """Associate echoes channel by channel with the reference channel.

    The cost between reference-channel echo ``i`` and channel-``n`` echo
    ``j`` is ``|t_i - t_j|``; the match is whatever the reference echo is
    assigned to.
    """
    def toas(chan):
        return np.array([(f.as_vector() if hasattr(f, "as_vector") else np.asarray(f))[toa_index] for f in chan])

    rc, rk = reference
    ref_t = toas(features[rc])
    matches: list[int | None] = [None] * len(features)
    dists: list[float | None] = [None] * len(features)
    for c, chan in enumerate(features):
        if c == rc:
            matches[c], dists[c] = rk, 0.0
            continue
        if len(chan) == 0:
            continue
        t = toas(chan)
        cost = np.abs(ref_t[:, None] - t[None, :])
        rows, cols = munkres_assign(cost)
        hit = np.flatnonzero(rows == rk)
        if hit.size:
            j = int(cols[hit[0]])
            matches[c], dists[c] = j, float(cost[rk, j])
    return Correspondence(tuple(reference), matches, dists, [])


# --- training ---------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 5e-4
    batch_size_frames: int = 1
    lambda_c: float = 1.0
    lambda_b: float = 10.0
    margin_q: float = 1.0
    early_stop_tolerance: int = 5
    early_stop_min_delta: float = 0.0
    max_epochs: int = 300
    validation_fraction: float = 0.3
    rng_seed: int = 0
    arg_convention: str = "min"
    hidden_dims: tuple[int, ...] = (32, 32, 4)
    feature_indices: tuple[int, ...] | None = None
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise DataError("learning_rate must be positive")
        if not self.margin_q > 0:
            raise DataError("margin_q must be positive")
        if self.batch_size_frames != 1:
            raise DataError("only frame batch size 1 is supported")
        if self.arg_convention not in ARG_CONVENTIONS:
            raise DataError(f"arg_convention must be one of {ARG_CONVENTIONS}")
        if not 0 <= self.validation_fraction < 1:
            raise DataError("validation_fraction must lie in [0, 1)")


@dataclass
class EchoSet:
    """All echoes of one frame as rows, with their labels and positions."""

    features: np.ndarray  # (M, 8) raw
    labels: np.ndarray  # (M,) ground truth, 1 = target echo
    channel: np.ndarray  # (M,)
    echo: np.ndarray  # (M,) index within channel

    def __post_init__(self):
        self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
        self.labels = np.asarray(self.labels, dtype=float).reshape(-1)
        self.channel = np.asarray(self.channel, dtype=int).reshape(-1)
        self.echo = np.asarray(self.echo, dtype=int).reshape(-1)
        m = self.features.shape[0]
        if not (len(self.labels) == len(self.channel) == len(self.echo) == m):
            raise DataError("EchoSet arrays must have equal length")

    @classmethod
    def from_features(cls, features, labels) -> "EchoSet":
        x, index = _stack(features)
        y = [labels[n][k] for n, k in index]
        return cls(x, np.array(y), [n for n, _ in index], [k for _, k in index])


@dataclass
class FrameLoss:
    total: float
    bce: float
    contrastive: float
    reference: int | None


def frame_loss_and_grad(w: MlpWeights, x: np.ndarray, labels: np.ndarray, lambda_c: float,
                        lambda_b: float, need_grad: bool = True):
    """Total loss of one frame and its gradient w.r.t. all weights.

    ``x`` holds standardized feature rows. The training reference is the
    target echo (``Y = 1``) the current model prefers; without any target echo
    only the BCE term contributes.
    """
    y = np.asarray(labels, dtype=float)
    t_bce, pair = training_targets(y, w.arg_convention)
    a1, a2, emb, z4 = _forward_std(x, w)
    b = sigmoid(z4)
    bc = np.clip(b, BCE_CLAMP, 1.0 - BCE_CLAMP)
    l_b = bce_loss(t_bce, b)

    g_logit = np.zeros_like(z4)
    g_emb = np.zeros_like(emb)
    inside = (b > BCE_CLAMP) & (b < 1.0 - BCE_CLAMP)
    g_logit += lambda_b * (bc - t_bce) * inside

    positives = np.flatnonzero(y == 1)
    l_c = 0.0
    ref = None
    if positives.size:
        ref = int(positives[_pick(b[positives], w.arg_convention)])
        diff = emb[ref] - emb
        d2 = np.sum(diff * diff, axis=1)
        q = w.margin_q
        l_c = float(np.sum((1 - pair) * d2 / 2 + pair * np.maximum(0.0, q - d2) / 2))
        dl_dd2 = lambda_c * ((1 - pair) / 2 - pair * (q - d2 > 0) / 2)
        # d(d2)/d emb_k = -2 diff_k ; d(d2)/d emb_ref = +2 diff_k
        g_emb += -2.0 * dl_dd2[:, None] * diff
        g_emb[ref] += np.sum(2.0 * dl_dd2[:, None] * diff, axis=0)

    loss = FrameLoss(lambda_c * l_c + lambda_b * l_b, l_b, l_c, ref)
    if not need_grad:
        return loss, None
    grads = _backend.mlp_backward(x, a1, a2, emb, g_logit, g_emb, w.w2, w.w3, w.w4)
    return loss, list(grads)


def fit_standardizer(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    mean = x.mean(axis=0)
    std = x.std(axis=0)
    std = np.where(std > 1e-12, std, 1.0)
    return mean, std


def split_indices(n: int, fraction: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(seed)
    order = rng.permutation(n)
    n_val = int(round(fraction * n))
    if fraction > 0 and n > 1:
        n_val = min(max(n_val, 1), n - 1)
    return np.sort(order[n_val:]), np.sort(order[:n_val])


class Adam:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        out = []
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            out.append(p - self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps))
        return out


@dataclass
class TrainHistory:
    train_loss: list[float] = field(default_factory=list)  # index 0 = before training
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = 0
    epochs_run: int = 0
    train_index: np.ndarray | None = None
    val_index: np.ndarray | None = None


def _mean_loss(w: MlpWeights, xs, ys, cfg: TrainConfig) -> float:
    if not xs:
        return float("nan")
    total = 0.0
    for x, y in zip(xs, ys):
        loss, _ = frame_loss_and_grad(w, x, y, cfg.lambda_c, cfg.lambda_b, need_grad=False)
        total += loss.total
    return total / len(xs)


def train(dataset: Sequence[EchoSet], cfg: TrainConfig | None = None) -> tuple[MlpWeights, TrainHistory]:
    """Adam on the shared MLP, one frame per step, with early stopping.

    Returns the weights with the lowest validation loss (training loss when
    no validation split is requested).
    """
    cfg = cfg or TrainConfig()
    frames = [f for f in dataset if len(f.labels)]
    if not frames:
        raise DegenerateDatasetError("dataset holds no echoes")
    if not any(np.any(f.labels == 1) for f in frames):
        raise DegenerateDatasetError("dataset holds no positive labels")

    tr_idx, va_idx = split_indices(len(frames), cfg.validation_fraction, cfg.rng_seed)
    rng = np.random.default_rng(cfg.rng_seed)
    dims = (frames[0].features.shape[1] if cfg.feature_indices is None else len(cfg.feature_indices),
            *cfg.hidden_dims, 1)
    w = init_weights(rng, dims, arg_convention=cfg.arg_convention, margin_q=cfg.margin_q,
                     feature_indices=cfg.feature_indices)
    raw_train = np.vstack([frames[i].features for i in tr_idx])
    if cfg.feature_indices is not None:
        raw_train = raw_train[:, list(cfg.feature_indices)]
    mean, std = fit_standardizer(raw_train)
    w = replace(w, feature_mean=mean, feature_std=std)

    xs = [w.prepare(f.features) for f in frames]
    ys = [f.labels for f in frames]
    xs_tr, ys_tr = [xs[i] for i in tr_idx], [ys[i] for i in tr_idx]
    xs_va, ys_va = [xs[i] for i in va_idx], [ys[i] for i in va_idx]
    monitor = (xs_va, ys_va) if len(va_idx) else (xs_tr, ys_tr)

    hist = TrainHistory(train_index=tr_idx, val_index=va_idx)
    hist.train_loss.append(_mean_loss(w, xs_tr, ys_tr, cfg))
    best_val = _mean_loss(w, *monitor, cfg)
    hist.val_loss.append(best_val)
    best_w, wait = w, 0

    opt = Adam(w.params(), cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.eps)
    for epoch in range(1, cfg.max_epochs + 1):
        for i in rng.permutation(len(xs_tr)):
            _, grads = frame_loss_and_grad(w, xs_tr[i], ys_tr[i], cfg.lambda_c, cfg.lambda_b)
            w = w.with_params(opt.step(w.params(), grads))
        hist.train_loss.append(_mean_loss(w, xs_tr, ys_tr, cfg))
        val = _mean_loss(w, *monitor, cfg)
        hist.val_loss.append(val)
        hist.epochs_run = epoch
        if val < best_val - cfg.early_stop_min_delta:
            best_val, best_w, wait, hist.best_epoch = val, w, 0, epoch
        else:
            wait += 1
            if wait >= cfg.early_stop_tolerance:
                break
    return best_w, hist
