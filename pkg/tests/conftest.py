"""Session fixtures: kernel warm-up and the acceptance summary lines."""

import numpy as np
import pytest

import diskloc as dl
from helpers import ACCEPTANCE_RESULTS, tangent_line_problem


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile every jitted kernel once so timed tests measure steady state."""
    problem = tangent_line_problem()
    for cls in (dl.ParallelLocalizer, dl.AsyncExactLocalizer, dl.AsyncInexactLocalizer):
        cls(max_iterations=3, stop_rule="fixed-iterations").fit(problem)
    dl.solve_single_source([4.0], np.zeros((0, 1)), [], [[0.0]], [1.0], lipschitz=1.0)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for num, name, verdict in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(f"acceptance {num:02d} {name}: {verdict}")
