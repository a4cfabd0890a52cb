import numpy as np
import pytest

from sppdm._backend import available_backends, get_kernels
from sppdm.graph import circle
from sppdm.oracles import generate_regression


def desk_problem(seed=0, **kw):
    return generate_regression(np.random.default_rng(seed), **kw)


@pytest.fixture
def desk():
    pb, data = desk_problem(0)
    return pb, data, circle(5)


@pytest.fixture(params=available_backends())
def backend(request):
    return get_kernels(request.param)


@pytest.fixture
def use_backend(monkeypatch):
    """Return a function that routes every module to the named kernel backend."""
    import sppdm.metrics
    import sppdm.netsim
    import sppdm.oracles
    import sppdm.solver

    def use(name):
        k = get_kernels(name)
        for mod in (sppdm.oracles, sppdm.solver, sppdm.metrics, sppdm.netsim):
            monkeypatch.setattr(mod, "kernels", k)
        return k

    return use


ACCEPTANCE_LINES = []


def acceptance_report(criterion, passed, detail):
    line = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
