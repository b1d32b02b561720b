import sys
from pathlib import Path

import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from wsexplore.fixture import LAYER_BUDGET_PP, make_fixture  # noqa: E402
from wsexplore.layer_explorer import SweepConfig, select_layer_candidates, sweep_model  # noqa: E402
from wsexplore.network_explorer import exhaustive_explore  # noqa: E402

settings.register_profile("default", deadline=None, derandomize=True, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ROOT = Path(__file__).resolve().parents[1]
FIXTURE_DIR = ROOT / "data" / "fixture"
NETWORK_BUDGET_PP = 2.0
K_RANGE = (1, 32)

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


class Sweep:
    """Fixture model plus everything the sweep stage produces, built once."""

    def __init__(self):
        self.model, self.dataset = make_fixture()
        self.cfg = SweepConfig(K_RANGE[0], K_RANGE[1], LAYER_BUDGET_PP)
        self.codebooks = {}
        self.curves = sweep_model(self.model, self.cfg, self.dataset, 1.0, codebooks=self.codebooks)
        self.candidates = [select_layer_candidates(c, self.cfg) for c in self.curves]
        self._records = None

    @property
    def records(self):
        if self._records is None:
            self._records = exhaustive_explore(self.model, self.candidates, self.dataset, 1.0,
                                               codebooks=self.codebooks)
        return self._records


@pytest.fixture(scope="session")
def fixture_run():
    return Sweep()
