"""End-to-end processing: detection, MEMG features, correspondence, intersection.

Also hosts the evaluation helpers: localization error reports, association
metrics and the four-variant ablation of the echo association stage.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import correspondence as corr
from .correspondence import Correspondence, EchoSet, MlpWeights, TrainConfig
from .errors import (DataError, DimensionError, EmptyInputError, InfeasibleGeometryError,
                     InsufficientCorrespondenceError, UnlabeledDatasetError)
from .geometry import SensorLayout, ellipsoid_from_pair
from .intersection import SolveResult, SolverConfig, solve
from .io import report_csv
from .memg import EchoFeature, LMConfig, MemgFrameFit, assemble_features, fit_memg
from .signal import Frame, ToaDetection, channel_envelope, detect_toas
from .simulator import LABEL_GATE, default_layout, label_from_gt

TA_FEATURES = (6, 0)  # [toa, alpha]


@dataclass(frozen=True)
class RunConfig:
    """Everything a run needs besides the data itself."""

    layout: SensorLayout = field(default_factory=default_layout)
    domain: str = "envelope"
    tau: float | None = None
    relative_tau: float = 0.1
    lm: LMConfig = field(default_factory=LMConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    label_gate: float = LABEL_GATE
    rng_seed: int = 0


@dataclass
class FrameFeatures:
    detections: list[list[ToaDetection]]
    fit: MemgFrameFit
    features: list[list[EchoFeature]]
    envelopes: np.ndarray

    def mu(self) -> list[list[float]]:
        return [[p.mu for p in ch] for ch in self.fit.params]


@dataclass
class LocalizationRecord:
    gt: np.ndarray | None
    estimate: np.ndarray
    rmse_mm: float
    rmse_percent: float
    converged: bool
    correspondence: Correspondence | None = None
    solve: SolveResult | None = None


def extract_features(frame: Frame, cfg: RunConfig | None = None) -> FrameFeatures:
    cfg = cfg or RunConfig()
    envs = np.vstack([channel_envelope(ch, cfg.domain) for ch in frame.channels])
    dets = detect_toas(frame, cfg.tau, domain=cfg.domain, relative_tau=cfg.relative_tau)
    fit = fit_memg(envs, dets, cfg.lm)
    return FrameFeatures(dets, fit, assemble_features(fit, envs), envs)


def frame_labels(frame: Frame, ff: FrameFeatures, cfg: RunConfig | None = None) -> list[list[int]]:
    cfg = cfg or RunConfig()
    if frame.gt_position is None:
        raise UnlabeledDatasetError("frame has no ground-truth position")
    return label_from_gt(frame.gt_position, ff.mu(), cfg.layout, frame.sample_rate, cfg.label_gate)


@dataclass
class PreparedFrame:
    frame: Frame
    features: FrameFeatures
    labels: list[list[int]] | None

    @property
    def echo_set(self) -> EchoSet:
        if self.labels is None:
            raise UnlabeledDatasetError("frame is unlabeled")
        return EchoSet.from_features(self.features.features, self.labels)


def prepare_frames(frames: Sequence[Frame], cfg: RunConfig | None = None,
                   require_labels: bool = False) -> list[PreparedFrame]:
    cfg = cfg or RunConfig()
    out = []
    for i, fr in enumerate(frames):
        ff = extract_features(fr, cfg)
        if fr.gt_position is None:
            if require_labels:
                raise UnlabeledDatasetError(f"frame {i} has no ground-truth position")
            labels = None
        else:
            labels = frame_labels(fr, ff, cfg)
        out.append(PreparedFrame(fr, ff, labels))
    return out


def train_weights(prepared: Sequence[PreparedFrame], cfg: RunConfig | None = None,
                  train_cfg: TrainConfig | None = None):
    cfg = cfg or RunConfig()
    sets = []
    for p in prepared:
        if p.labels is None:
            raise UnlabeledDatasetError("training requires labeled frames")
        if any(len(ch) for ch in p.features.features):
            sets.append(p.echo_set)
    return corr.train(sets, train_cfg or cfg.train)


def localize_matched(ff: FrameFeatures, matches: Sequence[int | None], frame: Frame,
                     cfg: RunConfig | None = None) -> SolveResult:
    """Intersect the spheroids of one matched echo per channel."""
    cfg = cfg or RunConfig()
    lay = cfg.layout
    if len(matches) != lay.n_receivers:
        raise DimensionError(f"{len(matches)} channels but layout has {lay.n_receivers} receivers")
    ellipsoids = []
    for n, k in enumerate(matches):
        if k is None:
            continue
        mu = ff.fit.params[n][k].mu
        path = lay.speed_of_sound * mu / frame.sample_rate
        try:
            ellipsoids.append(ellipsoid_from_pair(lay.emitter, lay.receivers[n], path))
        except InfeasibleGeometryError:
            continue
    if len(ellipsoids) < 3:
        raise InsufficientCorrespondenceError(
            f"only {len(ellipsoids)} channels with a usable matched echo; need 3"
        )
    return solve(ellipsoids, cfg.solver, origin=lay.emitter, direction=lay.boresight)


def _record(gt, result: SolveResult, c: Correspondence | None) -> LocalizationRecord:
    est = result.position
    if gt is None:
        mm = pct = float("nan")
    else:
        err = float(np.linalg.norm(est - gt))
        mm = 1000.0 * err
        ngt = float(np.linalg.norm(gt))
        pct = 100.0 * err / ngt if ngt > 0 else float("nan")
    return LocalizationRecord(None if gt is None else np.asarray(gt, float), est, mm, pct,
                              result.converged, c, result)


def localize_frame(frame: Frame, weights: MlpWeights, cfg: RunConfig | None = None,
                   features: FrameFeatures | None = None) -> LocalizationRecord:
    cfg = cfg or RunConfig()
    ff = features or extract_features(frame, cfg)
    if not any(len(ch) for ch in ff.features):
        raise InsufficientCorrespondenceError("no echoes detected in any channel")
    c = corr.match_echoes(ff.features, weights)
    result = localize_matched(ff, c.matches, frame, cfg)
    return _record(frame.gt_position, result, c)


def localize_with_labels(frame: Frame, cfg: RunConfig | None = None,
                         features: FrameFeatures | None = None) -> LocalizationRecord:
    """Localize using the ground-truth association (no learned model)."""
    cfg = cfg or RunConfig()
    ff = features or extract_features(frame, cfg)
    labels = frame_labels(frame, ff, cfg)
    matches = [row.index(1) if 1 in row else None for row in labels]
    return _record(frame.gt_position, localize_matched(ff, matches, frame, cfg), None)


# --- reports ------------------------------------------------------------------

@dataclass
class RmseReport:
    gt_mm: np.ndarray  # (R, 3)
    est_mm: np.ndarray  # (R, 3), NaN rows for failed frames
    rmse_mm: np.ndarray
    rmse_pct: np.ndarray
    converged: list[bool]

    @property
    def valid(self) -> np.ndarray:
        return np.isfinite(self.rmse_mm)

    @property
    def mean(self) -> tuple[float, float]:
        v = self.valid
        return float(np.mean(self.rmse_mm[v])), float(np.mean(self.rmse_pct[v]))

    @property
    def std(self) -> tuple[float, float]:
        # population standard deviation
        v = self.valid
        return float(np.std(self.rmse_mm[v])), float(np.std(self.rmse_pct[v]))

    def to_csv(self) -> str:
        rows = [(*g, *e, m, p, c) for g, e, m, p, c in
                zip(self.gt_mm, self.est_mm, self.rmse_mm, self.rmse_pct, self.converged)]
        if not self.valid.any():
            return report_csv(rows, None, None)
        return report_csv(rows, self.mean, self.std)

    def to_text(self) -> str:
        lines = [f"{'x':>8} {'y':>8} {'z':>8} | {'x*':>8} {'y*':>8} {'z*':>8} | {'[mm]':>6} {'[%]':>6}"]
        for g, e, m, p in zip(self.gt_mm, self.est_mm, self.rmse_mm, self.rmse_pct):
            lines.append(f"{g[0]:8.1f} {g[1]:8.1f} {g[2]:8.1f} | {e[0]:8.1f} {e[1]:8.1f} {e[2]:8.1f} | {m:6.1f} {p:6.1f}")
        if self.valid.any():
            (mm, mp), (sm, sp) = self.mean, self.std
            lines.append(f"{'Mean':>57} | {mm:6.1f} {mp:6.1f}")
            lines.append(f"{'Std.':>57} | {sm:6.1f} {sp:6.1f}")
        return "\n".join(lines) + "\n"


def rmse_from_pairs(gt_mm, est_mm, converged=None) -> RmseReport:
    gt = np.atleast_2d(np.asarray(gt_mm, dtype=float))
    est = np.atleast_2d(np.asarray(est_mm, dtype=float))
    if gt.size == 0:
        raise EmptyInputError("no records to report")
    if gt.shape != est.shape or gt.shape[1] != 3:
        raise DimensionError("ground truth and estimates must both be (R, 3)")
    err = np.linalg.norm(est - gt, axis=1)
    norm = np.linalg.norm(gt, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        pct = np.where(norm > 0, 100.0 * err / norm, np.nan)
    conv = [True] * len(gt) if converged is None else [bool(c) for c in converged]
    return RmseReport(gt, est, err, pct, conv)


def rmse_report(records: Sequence[LocalizationRecord | None]) -> RmseReport:
    """Per-record errors in mm and percent plus mean and (population) std."""
    if not records:
        raise EmptyInputError("no records to report")
    gts, ests, conv = [], [], []
    for r in records:
        if r is None:
            raise DataError("missing record")
        if r.gt is None:
            raise DataError("every record must carry a ground-truth position")
        gts.append(1000.0 * r.gt)
        ests.append(1000.0 * r.estimate if r.estimate is not None else np.full(3, np.nan))
        conv.append(r.converged)
    return rmse_from_pairs(gts, ests, conv)


# --- association metrics and ablation -------------------------------------------

def metrics(predictions: Sequence[Sequence[int | None]], labels: Sequence[Sequence[Sequence[int]]]):
    """Accuracy over frames and F1 over per-echo selection decisions.

    ``predictions[f][n]`` is the echo chosen on channel ``n`` of frame ``f``
    (``None`` for none); ``labels[f][n]`` are that channel's 0/1 labels.
    """
    if len(predictions) != len(labels):
        raise DimensionError(f"{len(predictions)} predictions for {len(labels)} labeled frames")
    exact = tp = fp = fn = 0
    for pred, lab in zip(predictions, labels):
        if len(pred) != len(lab):
            raise DimensionError("prediction and label channel counts differ")
        frame_ok = True
        for k, row in zip(pred, lab):
            truth = row.index(1) if 1 in row else None
            frame_ok &= k == truth
            for j, y in enumerate(row):
                sel = k == j
                tp += sel and y == 1
                fp += sel and y != 1
                fn += (not sel) and y == 1
        exact += frame_ok
    accuracy = exact / len(predictions) if predictions else float("nan")
    denom = 2 * tp + fp + fn
    f1 = 2 * tp / denom if denom else 1.0
    return accuracy, f1


ABLATION_VARIANTS = (
    ("MEMG", "argmax(alpha)", "Munkres"),
    ("MEMG", "MLP", "Munkres"),
    ("[t*, alpha*]", "MLP", "Contrastive"),
    ("MEMG", "MLP", "Contrastive"),
)


@dataclass
class AblationResult:
    variants: list[tuple[str, str, str]]
    accuracy: list[float]
    f1: list[float]

    def to_csv(self) -> str:
        lines = ["features,reference,association,accuracy,f1"]
        for (f, r, a), acc, f1 in zip(self.variants, self.accuracy, self.f1):
            lines.append(f"\"{f}\",\"{r}\",{a},{acc:.4f},{f1:.4f}")
        return "\n".join(lines) + "\n"

    def to_text(self) -> str:
        w = 16
        rows = [("Features", *[v[0] for v in self.variants]),
                ("Reference", *[v[1] for v in self.variants]),
                ("Association", *[v[2] for v in self.variants]),
                ("Accuracy", *[f"{a:.4f}" for a in self.accuracy]),
                ("F1-score", *[f"{f:.4f}" for f in self.f1])]
        return "\n".join(" | ".join(str(c).ljust(w) for c in r) for r in rows) + "\n"


def _require_labels(prepared):
    for i, p in enumerate(prepared):
        if p.labels is None:
            raise UnlabeledDatasetError(f"frame {i} is unlabeled")


def run_ablation(train: Sequence[PreparedFrame], test: Sequence[PreparedFrame],
                 cfg: RunConfig | None = None, weights: MlpWeights | None = None,
                 ta_weights: MlpWeights | None = None) -> AblationResult:
    """Score the four association variants on ``test``.

    MLP variants are trained on ``train`` unless weights are passed in. The
    Munkres variants associate by absolute ToA differences to the reference
    channel's echoes.
    """
    cfg = cfg or RunConfig()
    _require_labels(train)
    _require_labels(test)
    if weights is None:
        weights, _ = train_weights(train, cfg)
    if ta_weights is None:
        ta_weights, _ = train_weights(train, cfg, replace(cfg.train, feature_indices=TA_FEATURES))

    preds = [[] for _ in ABLATION_VARIANTS]
    labels = []
    for p in test:
        feats = p.features.features
        labels.append(p.labels)
        if not any(len(ch) for ch in feats):
            for lst in preds:
                lst.append([None] * len(feats))
            continue
        preds[0].append(corr.munkres_match(feats, corr.argmax_amplitude_reference(feats)).matches)
        preds[1].append(corr.munkres_match(feats, corr.select_reference(feats, weights)).matches)
        preds[2].append(corr.match_echoes(feats, ta_weights).matches)
        preds[3].append(corr.match_echoes(feats, weights).matches)
    scores = [metrics(pr, labels) for pr in preds]
    return AblationResult(list(ABLATION_VARIANTS), [s[0] for s in scores], [s[1] for s in scores])


def association_metrics(prepared: Sequence[PreparedFrame], weights: MlpWeights):
    _require_labels(prepared)
    preds = [corr.match_echoes(p.features.features, weights).matches
             if any(len(ch) for ch in p.features.features) else [None] * len(p.labels)
             for p in prepared]
    return metrics(preds, [p.labels for p in prepared])
