import math

import pytest

from ionjunction import doublewell as dw
from ionjunction import scales
from ionjunction.cache import BasisCache, BasisSpec, default_cache_dir

A = scales.default_scales().mass_ratio

# one line per acceptance criterion, printed after the run
ACCEPTANCE: dict[str, str] = {}


def record(criterion: str, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = f"{criterion}: {'PASS' if ok else 'FAIL'}  {detail}"


# tests marked ``property`` in this session and their outcomes, keyed by node id
PROPERTY_COLLECTED: list[str] = []
PROPERTY_OUTCOMES: dict[str, str] = {}


def pytest_collection_modifyitems(items):
    PROPERTY_COLLECTED[:] = [it.nodeid for it in items if it.get_closest_marker("property")]
    # the A9 summary reads the property outcomes, so it runs last
    last = [it for it in items if it.get_closest_marker("order_last")]
    items[:] = [it for it in items if it not in last] + last


def pytest_runtest_logreport(report):
    if "property" in report.keywords and (report.when == "call" or report.outcome != "passed"):
        if PROPERTY_OUTCOMES.get(report.nodeid) != "failed":
            PROPERTY_OUTCOMES[report.nodeid] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (len(k.split()[0]), k)):
        terminalreporter.write_line(ACCEPTANCE[key])


@pytest.fixture(scope="session")
def cache():
    return BasisCache(default_cache_dir())


@pytest.fixture(scope="session")
def provider(cache):
    """(alpha, phi, **basis options) -> (basis, moments), built once per session."""
    memo = {}

    def get(alpha, phi, K=1250, l_max=48, E_min=-2000.0):
        spec = BasisSpec(alpha, phi, A, l_max, K, E_min)
        if spec.key not in memo:
            basis = cache.get(spec)
            memo[spec.key] = (basis, dw.moment_matrices(basis))
        return memo[spec.key]

    return get


@pytest.fixture(scope="session")
def small(provider):
    """Modest strong-trap basis for unit tests."""
    return provider(10.0, -math.pi / 4, K=400, l_max=20)


@pytest.fixture(scope="session")
def small_free(provider):
    """Same size without the ion."""
    return provider(10.0, None, K=400, l_max=20)
