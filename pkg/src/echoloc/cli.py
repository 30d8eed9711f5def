"""Command line interface.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
All randomness comes from ``--seed`` (fallback: ``ECHOLOC_SEED``, then 0).
Options can also come from a JSON ``--config`` file; explicit flags win.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import io as eio
from .correspondence import TrainConfig
from .errors import DataError, EcholocError, NumericalError
from .geometry import SensorLayout
from .intersection import SolverConfig
from .pipeline import (RunConfig, association_metrics, extract_features, localize_frame,
                       localize_with_labels, prepare_frames, rmse_from_pairs, rmse_report,
                       run_ablation, train_weights)
from .simulator import NO_CLUTTER, ClutterConfig, default_layout, generate_dataset


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n\n{self.format_help()}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=None, help="master random seed")
    p.add_argument("--config", type=Path, default=None, help="JSON run configuration")
    p.add_argument("--layout", type=Path, default=None,
                   help="JSON layout {emitter, receivers, speed_of_sound}; default triangle geometry")


def _signal_opts(p):
    p.add_argument("--domain", choices=["envelope", "rf"], default=None)
    p.add_argument("--tau", type=float, default=None, help="absolute detection threshold")
    p.add_argument("--relative-tau", type=float, default=None)


def _train_opts(p):
    p.add_argument("--lr", type=float, default=None)
    p.add_argument("--lambda-c", type=float, default=None)
    p.add_argument("--lambda-b", type=float, default=None)
    p.add_argument("--margin", type=float, default=None)
    p.add_argument("--max-epochs", type=int, default=None)
    p.add_argument("--patience", type=int, default=None)
    p.add_argument("--arg-convention", choices=["min", "max"], default=None)


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="echoloc", description="Acoustic echo 3-D localization toolkit.")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate a synthetic dataset (JSON Lines + manifest)")
    _common(p)
    p.add_argument("--grid", default="reference", help="'reference' or a JSON file with a list of [x, y, z] in m")
    p.add_argument("--reps", type=int, default=None)
    p.add_argument("--n-frames", type=int, default=None)
    p.add_argument("--noise-std", type=float, default=None)
    p.add_argument("--decoys", type=int, default=None, help="decoy echoes per channel")
    p.add_argument("--clutter", type=int, default=None, help="random clutter echoes per channel")
    p.add_argument("--jitter", type=float, default=None, help="uniform position jitter in m")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("detect", help="ToA detections per frame")
    _common(p)
    _signal_opts(p)
    p.add_argument("--frames", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("fit", help="MEMG parameters and echo features per frame")
    _common(p)
    _signal_opts(p)
    p.add_argument("--frames", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("train", help="train correspondence weights")
    _common(p)
    _signal_opts(p)
    _train_opts(p)
    p.add_argument("--frames", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--history", type=Path, default=None, help="optional JSON training history")

    p = sub.add_parser("localize", help="localize frames and write the error report CSV")
    _common(p)
    _signal_opts(p)
    p.add_argument("--frames", type=Path, required=True)
    p.add_argument("--weights", type=Path, default=None)
    p.add_argument("--gt-association", action="store_true",
                   help="associate echoes from ground truth instead of the learned model")
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("ablate", help="association ablation table")
    _common(p)
    _signal_opts(p)
    _train_opts(p)
    p.add_argument("--frames", type=Path, required=True, help="training frames")
    p.add_argument("--test-frames", type=Path, required=True)
    p.add_argument("--out", type=Path, required=True)

    p = sub.add_parser("report", help="re-render a report CSV")
    _common(p)
    p.add_argument("--in", dest="inp", type=Path, required=True)
    p.add_argument("--out", type=Path, default=None, help="write CSV here (text goes to stdout)")
    return ap


def _pick(flag, cfg: dict, key: str, default):
    if flag is not None:
        return flag
    return cfg.get(key, default)


def _seed(args, cfg: dict) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("ECHOLOC_SEED")
    if env not in (None, ""):
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"ECHOLOC_SEED must be an integer, got {env!r}")
    return int(cfg.get("seed", 0))


def _load_config(path) -> dict:
    if path is None:
        return {}
    try:
        cfg = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc})") from exc
    if not isinstance(cfg, dict):
        raise DataError(f"{path}: config must be a JSON object")
    return cfg


def _layout(args, cfg: dict) -> SensorLayout:
    src = args.layout if args.layout is not None else cfg.get("layout")
    if src in (None, "default"):
        return default_layout()
    d = src if isinstance(src, dict) else json.loads(Path(src).read_text(encoding="utf-8"))
    try:
        opts = {k: d[k] for k in ("speed_of_sound", "boresight") if k in d}
        return SensorLayout(np.asarray(d["emitter"], float), np.asarray(d["receivers"], float), **opts)
    except KeyError as exc:
        raise DataError(f"layout lacks {exc}") from exc


def _run_config(args, cfg: dict, seed: int) -> RunConfig:
    tc = dict(cfg.get("train", {}))
    flags = {
        "learning_rate": getattr(args, "lr", None),
        "lambda_c": getattr(args, "lambda_c", None),
        "lambda_b": getattr(args, "lambda_b", None),
        "margin_q": getattr(args, "margin", None),
        "max_epochs": getattr(args, "max_epochs", None),
        "early_stop_tolerance": getattr(args, "patience", None),
        "arg_convention": getattr(args, "arg_convention", None),
    }
    tc.update({k: v for k, v in flags.items() if v is not None})
    tc["rng_seed"] = seed
    sc = cfg.get("solver", {})
    return RunConfig(
        layout=_layout(args, cfg),
        domain=_pick(getattr(args, "domain", None), cfg, "domain", "envelope"),
        tau=_pick(getattr(args, "tau", None), cfg, "tau", None),
        relative_tau=_pick(getattr(args, "relative_tau", None), cfg, "relative_tau", 0.1),
        solver=SolverConfig(**sc),
        train=TrainConfig(**tc),
        rng_seed=seed,
    )


def _read_frames(path):
    frames = eio.read_frames(path)
    manifest = eio.read_manifest(path)
    return frames, manifest


def _check_single_target(manifest):
    if manifest and manifest.get("multi_target"):
        raise DataError("dataset is flagged multi-target; only single-target frames can be localized")


def _write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r) + "\n")


def cmd_simulate(args, cfg, seed):
    grid = None
    if args.grid != "reference":
        grid = json.loads(Path(args.grid).read_text(encoding="utf-8"))
    sim = cfg.get("simulate", {})
    n_dec = _pick(args.decoys, sim, "decoys", 1)
    n_rand = _pick(args.clutter, sim, "clutter", 1)
    clutter = replace(ClutterConfig(), n_decoys=n_dec, n_random=n_rand) if (n_dec or n_rand) else NO_CLUTTER
    ds = generate_dataset(
        grid=grid,
        repetitions=_pick(args.reps, sim, "reps", 1),
        noise_std=_pick(args.noise_std, sim, "noise_std", 0.0),
        clutter=clutter,
        seed=seed,
        layout=_layout(args, cfg),
        n_frames=_pick(args.n_frames, sim, "n_frames", None),
        jitter=_pick(args.jitter, sim, "jitter", 0.0),
    )
    eio.write_frames(args.out, ds.frames)
    manifest = dict(ds.manifest, multi_target=False)
    eio.write_manifest(args.out, manifest)
    print(f"wrote {len(ds)} frames to {args.out}")


def cmd_detect(args, cfg, seed):
    rc = _run_config(args, cfg, seed)
    frames, _ = _read_frames(args.frames)
    out = []
    for i, fr in enumerate(frames):
        ff = extract_features(fr, rc)
        out.append({"frame": i, "detections": [
            [{"sample_index": d.sample_index, "toa_s": d.toa, "envelope": d.envelope_value} for d in ch]
            for ch in ff.detections]})
    _write_jsonl(args.out, out)
    print(f"wrote detections for {len(out)} frames to {args.out}")


def cmd_fit(args, cfg, seed):
    rc = _run_config(args, cfg, seed)
    frames, _ = _read_frames(args.frames)
    out = []
    for i, fr in enumerate(frames):
        ff = extract_features(fr, rc)
        out.append({
            "frame": i,
            "energy": ff.fit.energies,
            "iterations": ff.fit.iterations,
            "features": [[f.as_vector().tolist() for f in ch] for ch in ff.features],
        })
    _write_jsonl(args.out, out)
    print(f"wrote MEMG fits for {len(out)} frames to {args.out}")


def cmd_train(args, cfg, seed):
    rc = _run_config(args, cfg, seed)
    frames, _ = _read_frames(args.frames)
    prepared = prepare_frames(frames, rc, require_labels=True)
    w, hist = train_weights(prepared, rc)
    eio.save_weights(args.out, w)
    val = [prepared[i] for i in hist.val_index]
    acc, f1 = association_metrics(val, w) if val else (float("nan"), float("nan"))
    if args.history:
        Path(args.history).write_text(json.dumps({
            "train_loss": hist.train_loss, "val_loss": hist.val_loss,
            "best_epoch": hist.best_epoch, "epochs_run": hist.epochs_run,
            "val_accuracy": acc, "val_f1": f1}) + "\n", encoding="utf-8")
    print(f"trained {hist.epochs_run} epochs (best {hist.best_epoch}); validation accuracy {acc:.4f}, F1 {f1:.4f}")


def cmd_localize(args, cfg, seed):
    rc = _run_config(args, cfg, seed)
    frames, manifest = _read_frames(args.frames)
    _check_single_target(manifest)
    weights_path = args.weights or cfg.get("weights")
    if weights_path is None and not args.gt_association:
        raise UsageError("localize needs --weights or --gt-association")
    w = eio.load_weights(weights_path) if weights_path else None
    records, failures = [], []
    for i, fr in enumerate(frames):
        try:
            rec = localize_with_labels(fr, rc) if args.gt_association else localize_frame(fr, w, rc)
        except (DataError, NumericalError) as exc:
            print(f"frame {i}: {exc}", file=sys.stderr)
            failures.append(exc)
            rec = None
        records.append((fr, rec))
    if frames and len(failures) == len(frames):
        # nothing to report; surface the most severe cause
        numerical = [e for e in failures if isinstance(e, NumericalError)]
        raise (numerical or failures)[0]
    if all(fr.gt_position is not None for fr, _ in records):
        gts = [1000.0 * fr.gt_position for fr, _ in records]
        ests = [1000.0 * r.estimate if r else np.full(3, np.nan) for _, r in records]
        rep = rmse_from_pairs(gts, ests, [bool(r and r.converged) for _, r in records])
        text = rep.to_csv()
        summary = rep.to_text()
    else:
        rows = [(None, None, None, *(1000.0 * r.estimate if r else [None] * 3), None, None,
                 bool(r and r.converged)) for _, r in records]
        text = eio.report_csv(rows, None, None)
        summary = ""
    Path(args.out).write_text(text, encoding="utf-8")
    sys.stdout.write(summary)
    if failures:
        print(f"{len(failures)} of {len(frames)} frames could not be localized", file=sys.stderr)


def cmd_ablate(args, cfg, seed):
    rc = _run_config(args, cfg, seed)
    train_frames, _ = _read_frames(args.frames)
    test_frames, _ = _read_frames(args.test_frames)
    tr = prepare_frames(train_frames, rc, require_labels=True)
    te = prepare_frames(test_frames, rc, require_labels=True)
    res = run_ablation(tr, te, rc)
    Path(args.out).write_text(res.to_csv(), encoding="utf-8")
    sys.stdout.write(res.to_text())


def cmd_report(args, cfg, seed):
    rows = eio.read_report_rows(args.inp)
    if not rows:
        raise DataError(f"{args.inp}: no data rows")
    rep = rmse_from_pairs([r["gt"] for r in rows], [r["est"] for r in rows], [r["converged"] for r in rows])
    if args.out:
        Path(args.out).write_text(rep.to_csv(), encoding="utf-8")
    sys.stdout.write(rep.to_text())


COMMANDS = {
    "simulate": cmd_simulate,
    "detect": cmd_detect,
    "fit": cmd_fit,
    "train": cmd_train,
    "localize": cmd_localize,
    "ablate": cmd_ablate,
    "report": cmd_report,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_help())
        cfg = _load_config(args.config)
        seed = _seed(args, cfg)
        COMMANDS[args.command](args, cfg, seed)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (DataError, OSError, json.JSONDecodeError, TypeError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except EcholocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
