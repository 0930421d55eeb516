import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from robsim.grid import DomainSpec, VelocityField

settings.register_profile("robsim", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture])
settings.load_profile("robsim")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def dom8():
    return DomainSpec(1.0, 1.0, 8, 8, 8)


@pytest.fixture
def dom_rect():
    return DomainSpec(2.0, 1.5, 12, 8, 6)


def random_velocity(dom, rng, walls=True):
    v = VelocityField(rng.standard_normal((dom.nx + 1, dom.ny)), rng.standard_normal((dom.nx, dom.ny + 1)))
    return v.enforce_walls() if walls else v


def random_divfree(dom, rng, amp=1.0):
    psi = amp * rng.standard_normal((dom.nx + 1, dom.ny + 1))
    return VelocityField.from_streamfunction(dom, lambda X, Y: psi)


# -- acceptance summary ----------------------------------------------------------------------

_ACCEPTANCE: list[str] = []


@pytest.fixture
def verdict():
    """``verdict(n, ok, detail)`` prints and records one pass/fail line for criterion ``n``."""

    def record(n, ok, detail=""):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        print(line)
        _ACCEPTANCE.append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
