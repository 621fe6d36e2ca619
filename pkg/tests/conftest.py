import numpy as np
import pytest

from slgbsde.catalogue import get_scenario, unit_diffusion
from slgbsde.forward import TimeGrid, simulate
from slgbsde.model import GeneratorSpec, ProblemSpec, TerminalSpec


@pytest.fixture(scope="session")
def linear_problem():
    return get_scenario("linear-1d").problem


@pytest.fixture(scope="session")
def small_linear_ensemble(linear_problem):
    p = linear_problem
    return simulate(p.diffusion, TimeGrid.uniform(1.0, 20), 0.0, p.start_x, 20_000, 11)


def make_problem(evaluate, n=1, C2=0.0, Ch=1.0, gamma=1.0, terminal=None, depends_on=None,
                 T=1.0):
    gen = GeneratorSpec(evaluate, n, C2, Ch, gamma, depends_on, "test")
    term = TerminalSpec(terminal or (lambda x, i: x[:, 0]), 1.0, 1.0, "test")
    return ProblemSpec(unit_diffusion(1), gen, term, T, np.zeros(1))


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(mod.RESULTS):
        ok, detail = mod.RESULTS[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
