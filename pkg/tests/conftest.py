import time

import numpy as np
import pytest

from fnnstar import inflation, qsim, witness

OPT = (-1.865, -0.415)

# Lines recorded by the acceptance suite, printed in the terminal summary.
ACCEPTANCE_LINES: list[str] = []
SESSION = {"start": time.time()}


def pytest_sessionstart(session):
    SESSION["start"] = time.time()


def pytest_collection_modifyitems(items):
    # acceptance criteria run last so the suite-runtime check sees the whole run
    items.sort(key=lambda item: item.nodeid.split("::")[0].endswith("test_acceptance.py"))


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def ideal_star():
    return qsim.simulate_star(qsim.StarStrategy(*OPT))


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def certification(ideal_star):
    """Ideal-star inflation LPs at denominator bound 1e4, with per-placement wall times."""
    results, times = {}, {}
    for k in (1, 2, 3):
        t0 = time.perf_counter()
        problem = inflation.inflation_problem(ideal_star, k, denominator_bound=10 ** 4)
        results[k] = inflation.solve_placement(problem)
        times[k] = time.perf_counter() - t0
    return results, times


@pytest.fixture(scope="session")
def extracted(certification):
    results, _ = certification
    return {k: witness.from_certificate(r.certificate, r.problem) for k, r in results.items() if not r.feasible}
