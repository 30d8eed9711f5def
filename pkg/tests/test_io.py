import json

import numpy as np
import pytest

from echoloc import io as eio
from echoloc.correspondence import init_weights, mlp_forward
from echoloc.errors import DataError
from echoloc.signal import Frame
from echoloc.simulator import generate_dataset


def test_frames_roundtrip(tmp_path):
    ds = generate_dataset(repetitions=1, seed=3)
    p = tmp_path / "d.jsonl"
    eio.write_frames(p, ds.frames)
    back = eio.read_frames(p)
    assert len(back) == 18
    for a, b in zip(ds.frames, back):
        np.testing.assert_array_equal(a.channels, b.channels)
        np.testing.assert_array_equal(a.gt_position, b.gt_position)
        assert a.sample_rate == b.sample_rate


def test_frame_without_gt():
    f = Frame(np.ones((3, 4)), 1000.0)
    assert eio.frame_from_dict(eio.frame_to_dict(f)).gt_position is None


def test_malformed_frames(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text("{not json}\n")
    with pytest.raises(DataError, match=":1:"):
        eio.read_frames(p)
    d = eio.frame_to_dict(Frame(np.ones((3, 4)), 1000.0))
    d["n_samples"] = 5
    with pytest.raises(DataError):
        eio.frame_from_dict(d)
    with pytest.raises(DataError):
        eio.frame_from_dict({"channels": [[1]]})


def test_manifest(tmp_path):
    p = tmp_path / "set.jsonl"
    assert eio.read_manifest(p) is None
    eio.write_manifest(p, {"seed": 1})
    assert eio.manifest_path(p).name == "set.manifest.json"
    assert eio.read_manifest(p) == {"seed": 1}


def test_weights_roundtrip(tmp_path, rng):
    w = init_weights(rng, feature_mean=rng.normal(size=8), feature_std=rng.uniform(1, 2, 8),
                     arg_convention="max", margin_q=2.0)
    p = tmp_path / "w.json"
    eio.save_weights(p, w)
    w2 = eio.load_weights(p)
    x = rng.normal(size=(5, 8))
    np.testing.assert_array_equal(mlp_forward(x, w)[0], mlp_forward(x, w2)[0])
    assert w2.arg_convention == "max" and w2.margin_q == 2.0
    d = json.loads(p.read_text())
    d["schema_version"] = 99
    with pytest.raises(DataError):
        eio.weights_from_dict(d)


def test_ta_weights_roundtrip(tmp_path, rng):
    w = init_weights(rng, (2, 32, 32, 4, 1), feature_indices=(6, 0))
    p = tmp_path / "w.json"
    eio.save_weights(p, w)
    assert tuple(eio.load_weights(p).feature_indices) == (6, 0)


def test_report_csv_roundtrip(tmp_path):
    rows = [(0, 0, 100, 3.9, 4.2, 105.0, 7.6, 7.6, True), (0, 0, 180, None, None, None, None, None, False)]
    text = eio.report_csv(rows, (7.6, 7.6), (0.0, 0.0))
    p = tmp_path / "r.csv"
    p.write_text(text)
    back = eio.read_report_rows(p)
    assert back[0]["gt"] == [0, 0, 100] and back[0]["est"] == [3.9, 4.2, 105.0] and back[0]["converged"]
    assert np.all(np.isnan(back[1]["est"])) and not back[1]["converged"]
    assert len(back) == 2


def test_report_missing_columns(tmp_path):
    p = tmp_path / "r.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(DataError):
        eio.read_report_rows(p)
