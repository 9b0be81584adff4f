import pathlib

import pytest

from causalops import simulator

ASSETS = pathlib.Path(__file__).resolve().parents[1] / "src" / "causalops" / "assets"


@pytest.fixture(scope="session")
def sample_trace() -> bytes:
    return (ASSETS / "trace_model_serving_s.json").read_bytes()


@pytest.fixture(scope="session")
def sample_metrics() -> bytes:
    return (ASSETS / "metrics_model_serving.json").read_bytes()


@pytest.fixture(scope="session")
def sample_corpus() -> bytes:
    return (ASSETS / "common_metrics.json").read_bytes()


@pytest.fixture(scope="session")
def topology_s(sample_trace, sample_metrics, sample_corpus):
    from causalops.ingest import load_topology

    return load_topology(sample_trace, sample_metrics, sample_corpus)


@pytest.fixture(scope="session")
def sim_s():
    """One scenario-S simulation shared across tests (it is deterministic)."""
    return simulator.run(simulator.ScenarioConfig.for_scenario("S"))
