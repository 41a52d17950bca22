import sys
import time
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_REPORT: dict[int, str] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    """Keep one PASS/FAIL line per acceptance criterion for the run summary."""
    _REPORT[criterion] = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"


@pytest.fixture
def report():
    return record


def pytest_terminal_summary(terminalreporter):
    if not _REPORT:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_REPORT):
        terminalreporter.write_line(_REPORT[k])


@pytest.fixture(scope="session")
def acceptance_cfg():
    from retail_abm.config import ScenarioConfig
    return ScenarioConfig(seed=1, town_seed=1)


@pytest.fixture(scope="session")
def acceptance_town(acceptance_cfg):
    from retail_abm.engine import load_town
    return load_town(acceptance_cfg)


@pytest.fixture(scope="session")
def discount_sweep(acceptance_cfg, acceptance_town):
    from retail_abm import doe
    t0 = time.perf_counter()
    res = doe.sweep(acceptance_cfg, doe.full_factorial("discount"), sites=acceptance_town)
    return res, time.perf_counter() - t0


@pytest.fixture(scope="session")
def sensitivity(acceptance_cfg, acceptance_town):
    from retail_abm.engine import sensitivity_suite
    return sensitivity_suite(acceptance_cfg, acceptance_town)
