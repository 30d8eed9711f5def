import numpy as np
import pytest

from echoloc.pipeline import RunConfig, prepare_frames, train_weights
from echoloc.simulator import generate_dataset

TRAIN_SEED = 1
TEST_SEED = 2


@pytest.fixture(scope="session")
def run_cfg():
    return RunConfig()


@pytest.fixture(scope="session")
def train_data():
    # 18 positions x 17 repetitions, truncated to 302 frames
    return generate_dataset(repetitions=17, n_frames=302, seed=TRAIN_SEED)


@pytest.fixture(scope="session")
def test_data():
    return generate_dataset(repetitions=4, seed=TEST_SEED)


@pytest.fixture(scope="session")
def prepared_train(train_data, run_cfg):
    return prepare_frames(train_data.frames, run_cfg, require_labels=True)


@pytest.fixture(scope="session")
def prepared_test(test_data, run_cfg):
    return prepare_frames(test_data.frames, run_cfg, require_labels=True)


@pytest.fixture(scope="session")
def trained(prepared_train, run_cfg):
    return train_weights(prepared_train, run_cfg)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(results):
        ok, detail = results[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {key}: {detail}")
