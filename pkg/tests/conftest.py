import sys

import numpy as np
import pytest

from gridseer.catalog import QuestionId, resolve_question
from gridseer.pipeline import default_config, train_question
from gridseer.registry import RegistryServer, RegistryStore
from gridseer.synth import SynthConfig, gen_node
from gridseer.telemetry import build_series

SMALL_DAYS = 2


def small_config(**kw) -> SynthConfig:
    base = dict(duration=SMALL_DAYS * 86400, interval=300, seed=11)
    base.update(kw)
    return SynthConfig(**base)


@pytest.fixture(scope="session")
def small_records():
    records, _ = gen_node(small_config())
    return records


@pytest.fixture(scope="session")
def small_series(small_records):
    return build_series(small_records, "n0", 300)


@pytest.fixture(scope="session")
def power_outcome(small_series):
    spec = resolve_question(QuestionId.NODE_POWER)
    return train_question(spec, small_series, default_config(spec.model_family, epochs=15), created_at="2019-01-03T00:00:00Z")


@pytest.fixture(scope="session")
def power_bundle(power_outcome):
    return power_outcome.bundle


@pytest.fixture(scope="session")
def forecast_bundle(small_series):
    spec = resolve_question(QuestionId.CPU_FORECAST)
    from gridseer.models import init_lstm

    # an untrained tiny LSTM is enough for format and contract tests
    from gridseer.bundle import ModelBundle, make_manifest
    from gridseer.pipeline import training_stats

    params = init_lstm(1, 4, 12, seed=3)
    stats = training_stats(spec, small_series)
    manifest = make_manifest(
        spec, params, created_at="2019-01-03T00:00:00Z", publisher="lab", train_fingerprint="rows=576", interval=300
    )
    return ModelBundle(manifest, stats, params)


@pytest.fixture
def registry(tmp_path):
    server = RegistryServer(RegistryStore(tmp_path / "store"))
    server.start_background()
    yield server
    server.shutdown()
    server.server_close()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
