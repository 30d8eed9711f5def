"""File formats: frame JSON Lines, dataset manifests, weight files, report CSV."""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Iterable

import numpy as np

from .correspondence import MlpWeights
from .errors import DataError
from .signal import Frame

FRAME_SCHEMA = 1
WEIGHTS_SCHEMA = 1
REPORT_HEADER = ["x", "y", "z", "x_star", "y_star", "z_star", "rmse_mm", "rmse_pct", "converged"]


def frame_to_dict(frame: Frame) -> dict:
    return {
        "schema_version": FRAME_SCHEMA,
        "sample_rate_hz": frame.sample_rate,
        "n_receivers": frame.n_receivers,
        "n_samples": frame.n_samples,
        "channels": frame.channels.tolist(),
        "gt_position_m": None if frame.gt_position is None else frame.gt_position.tolist(),
    }


def frame_from_dict(d: dict) -> Frame:
    try:
        if d.get("schema_version", FRAME_SCHEMA) != FRAME_SCHEMA:
            raise DataError(f"unsupported frame schema {d['schema_version']}")
        ch = np.asarray(d["channels"], dtype=float)
        n, t = int(d["n_receivers"]), int(d["n_samples"])
        if ch.shape != (n, t):
            raise DataError(f"channels shape {ch.shape} disagrees with header ({n}, {t})")
        gt = d.get("gt_position_m")
        return Frame(ch, float(d["sample_rate_hz"]), None if gt is None else np.asarray(gt, dtype=float))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"malformed frame record: {exc}") from exc


def write_frames(path, frames: Iterable[Frame]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for f in frames:
            fh.write(json.dumps(frame_to_dict(f)) + "\n")


def read_frames(path) -> list[Frame]:
    frames = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            frames.append(frame_from_dict(rec))
    return frames


def manifest_path(dataset_path) -> Path:
    p = Path(dataset_path)
    return p.with_name(p.stem + ".manifest.json")


def write_manifest(dataset_path, manifest: dict) -> Path:
    out = manifest_path(dataset_path)
    out.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return out


def read_manifest(dataset_path) -> dict | None:
    p = manifest_path(dataset_path)
    if not p.exists():
        return None
    return json.loads(p.read_text(encoding="utf-8"))


def weights_to_dict(w: MlpWeights) -> dict:
    d = {
        "schema_version": WEIGHTS_SCHEMA,
        "dims": list(w.dims),
        "weights": [m.reshape(-1).tolist() for m in w.matrices],
        "biases": [b.tolist() for b in w.biases],
        "feature_mean": w.feature_mean.tolist(),
        "feature_std": w.feature_std.tolist(),
        "arg_convention": w.arg_convention,
        "margin_q": w.margin_q,
    }
    if w.feature_indices is not None:
        d["feature_indices"] = list(w.feature_indices)
    return d


def weights_from_dict(d: dict) -> MlpWeights:
    try:
        if d.get("schema_version") != WEIGHTS_SCHEMA:
            raise DataError(f"unsupported weights schema {d.get('schema_version')}")
        dims = [int(x) for x in d["dims"]]
        mats = [np.asarray(m, dtype=float).reshape(dims[i], dims[i + 1]) for i, m in enumerate(d["weights"])]
        biases = [np.asarray(b, dtype=float) for b in d["biases"]]
        if len(mats) != 4 or len(biases) != 4:
            raise DataError("weights file must hold 4 layers")
        layers = [x for pair in zip(mats, biases) for x in pair]
        return MlpWeights(*layers, feature_mean=d["feature_mean"], feature_std=d["feature_std"],
                          arg_convention=d.get("arg_convention", "min"), margin_q=float(d.get("margin_q", 1.0)),
                          feature_indices=d.get("feature_indices"))
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DataError):
            raise
        raise DataError(f"malformed weights file: {exc}") from exc


def save_weights(path, w: MlpWeights) -> None:
    Path(path).write_text(json.dumps(weights_to_dict(w)) + "\n", encoding="utf-8")


def load_weights(path) -> MlpWeights:
    try:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc
    return weights_from_dict(d)


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and not np.isfinite(v)):
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    return f"{float(v):.6f}"


def report_csv(rows, mean_row, std_row) -> str:
    """``rows`` are 9-tuples matching :data:`REPORT_HEADER` (coordinates in mm)."""
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(REPORT_HEADER)
    for r in rows:
        wr.writerow([_fmt(v) for v in r])
    if mean_row is not None:
        wr.writerow(["MEAN", "", "", "", "", "", _fmt(mean_row[0]), _fmt(mean_row[1]), ""])
        wr.writerow(["STD", "", "", "", "", "", _fmt(std_row[0]), _fmt(std_row[1]), ""])
    return buf.getvalue()


def read_report_rows(path) -> list[dict]:
    """Data rows of a report CSV (summary lines skipped), coordinates in mm."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"x", "y", "z", "x_star", "y_star", "z_star"} - set(reader.fieldnames or [])
        if missing:
            raise DataError(f"{path}: missing columns {sorted(missing)}")
        rows = []
        for rec in reader:
            if rec["x"] in ("MEAN", "STD"):
                continue
            try:
                gt = [float(rec[k]) for k in ("x", "y", "z")]
                est = [float(rec[k]) if rec[k] not in ("", None) else np.nan for k in ("x_star", "y_star", "z_star")]
            except ValueError as exc:
                raise DataError(f"{path}: non-numeric value ({exc})") from exc
            conv = (rec.get("converged") or "").strip().lower()
            rows.append({"gt": gt, "est": est, "converged": conv in ("", "true", "1")})
        return rows
