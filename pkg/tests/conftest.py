import sys

import pytest

from rtbcost.ingest import record_from_mapping
from rtbcost.nurl import load_rules
from rtbcost.sim import SimConfig, references, simulate


@pytest.fixture(scope="session")
def rules():
    return load_rules()


@pytest.fixture(scope="session")
def small_sim():
    return simulate(SimConfig(seed=11, n_users=30, days=3))


@pytest.fixture(scope="session")
def small_records(small_sim):
    return [record_from_mapping(r) for r in small_sim.records]


@pytest.fixture(scope="session")
def small_refs(small_sim):
    return references(small_sim.config)


@pytest.fixture(scope="session")
def small_model_bytes(small_sim):
    from rtbcost.model.forest import ForestParams
    from rtbcost.model.io import export_model
    from rtbcost.model.train import train_price_model
    from rtbcost.costs import from_micros

    rows = [(t.features, from_micros(t.charge_micros)) for t in small_sim.impressions]
    return export_model(train_price_model(rows, params=ForestParams(n_trees=10), seed=1))


def pytest_terminal_summary(terminalreporter):
    mod = next((m for name, m in sys.modules.items() if name.endswith("test_acceptance")), None)
    results = sorted(getattr(mod, "RESULTS", []), key=lambda line: int(line.split()[2].rstrip(":")))
    if results:
        terminalreporter.section("acceptance criteria")
        for line in results:
            terminalreporter.write_line(line)
