"""Shared fixtures: cached boundary-point computations and the acceptance summary."""
from __future__ import annotations

import functools

import pytest

from cr_infinity.boundary import compute_boundary_point
from cr_infinity.scenarios import (
    PerturbedSinh,
    WarpSpec,
    model_profile,
    model_sphere_shape,
    random_profile,
    warped_profile,
)

# filled by tests/test_acceptance.py, printed at the end of the session
ACCEPTANCE_LINES: dict[int, str] = {}


@functools.lru_cache(maxsize=None)
def boundary_point(kind: str, a: float = 2.0, n: int = 1, r_max: float = 30.0,
                   seed: int = 7, C0: float = 0.5):
    """One fully extracted boundary point, cached across the test session."""
    if kind == "model":
        prof = model_profile(n)
    elif kind == "random":
        prof = random_profile(n, a, C0, a, C0, seed)
    elif kind == "warped":
        spec = WarpSpec(A=PerturbedSinh(1.0, 0.3, a), B=PerturbedSinh(0.5, 0.2, a),
                        analytic=True)
        prof = warped_profile(n, spec, r_max=r_max + 1.0, a=a, C0=2.5)
    else:
        raise ValueError(kind)
    return compute_boundary_point(prof, model_sphere_shape(n), r_max=r_max)


@pytest.fixture(scope="session")
def point():
    return boundary_point


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
