"""Shared test plumbing.

Acceptance tests register one line per criterion through `record_criterion`;
the lines are replayed in the terminal summary so they are visible even when
pytest captures stdout.
"""

import numpy as np
import pytest

CRITERION_LINES = []


def record_criterion(num: int, ok: bool, detail: str) -> None:
    line = f"CRITERION {num:2d}: {'PASS' if ok else 'FAIL'} - {detail}"
    CRITERION_LINES.append((num, line))
    print(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not CRITERION_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(CRITERION_LINES):
        terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def rr3_64():
    """The 3-regular n=64 instance shared by the clock/phase criteria."""
    from popmaj import build_graph

    return build_graph("random_regular", 64, seed=0, d=3)


@pytest.fixture(scope="session")
def warm_kernels():
    """Touch every compiled kernel once so timing-sensitive tests do not pay
    JIT cost."""
    from popmaj import (
        annihilation_protocol,
        build_graph,
        majority_params_for_graph,
        run_discrete,
        run_majority,
        StoppingRule,
    )

    g = build_graph("complete", 8)
    proto = annihilation_protocol()
    run_discrete(proto, g, inputs=np.array([0, 1] * 4), stop=StoppingRule(horizon=64), seed=1)
    params = majority_params_for_graph(g)
    run_majority(g, params, horizon=2000, gamma=0.25, seed=1)
    return True
