from __future__ import annotations

from functools import lru_cache

import numpy as np
import pytest

from inverse_ibm.dg.assembly import assemble_system
from inverse_ibm.dg.spaces import DGControlSpace, DGStateSpace
from inverse_ibm.geometry import Circle, Ellipse, LShape, Star
from inverse_ibm.mesh import background_for, extract_active


@lru_cache(maxsize=None)
def active_mesh(kind: str = "circle", H: float = 0.3, level: int = 0):
    geom = {"circle": Circle(radius=1.0), "star": Star(), "lshape": LShape(), "ellipse": Ellipse(a=0.9, b=0.5)}[kind]
    return geom, extract_active(background_for(geom, H).refine(level), geom)


@lru_cache(maxsize=None)
def spaces(kind: str = "circle", H: float = 0.3, p: int = 1):
    _, mesh = active_mesh(kind, H)
    return DGStateSpace(mesh, p), DGControlSpace(mesh, p)


@lru_cache(maxsize=None)
def system(kind="circle", H=0.3, p=1, lam=(0.0, 0.0), mu=1.0):
    state, control = spaces(kind, H, p)
    return assemble_system(state, control, lam, mu)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def disk():
    return active_mesh("circle", 0.3)


# one (criterion, passed, detail) entry per acceptance criterion, printed at the end
ACCEPTANCE: list = []


def record_acceptance(number: int, passed: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} - {detail}"
    print(line)
    ACCEPTANCE.append((number, passed, line))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, _, line in sorted(ACCEPTANCE):
        terminalreporter.write_line(line)
