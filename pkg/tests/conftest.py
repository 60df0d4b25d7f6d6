import math

import numpy as np
import pytest

from jte.kinematics import HalfPlaneConstraint, PlanarRobot, load_gp50

XR2 = np.array([math.pi / 3, math.pi / 6])
XR6 = np.array([1, -10, 1, 1, 1, 1]) * math.pi / 20


@pytest.fixture
def planar():
    return PlanarRobot((1.0, 1.0))


@pytest.fixture(scope="session")
def gp50():
    return load_gp50()


def xwall():
    return HalfPlaneConstraint([1.0, 0.0], 1.456, "x")


def ywall():
    return HalfPlaneConstraint([0.0, 1.0], 1.416, "y")


def general_plane():
    return HalfPlaneConstraint([1.0, 1.0], 2.8, "general")


def gp50_constraints():
    return [
        HalfPlaneConstraint([1.0, 0.0, 0.0], 1.8, "x"),
        HalfPlaneConstraint([0.0, 1.0, 0.0], 0.45, "y"),
        HalfPlaneConstraint([0.0, 0.0, 1.0], 1.35, "z"),
        HalfPlaneConstraint([0.4758, 0.0135, 1.0], 1.7601, "general"),
    ]


# acceptance summary ---------------------------------------------------------------

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def record(criterion: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[criterion] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] criterion {k:2d}: {detail}")
