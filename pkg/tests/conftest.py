from collections import defaultdict

import numpy as np
import pytest

from formcy.torus import TorusGeometry

# criterion number -> list of (passed, detail) for the acceptance summary
ACCEPTANCE: dict[int, list[tuple[bool, str]]] = defaultdict(list)


@pytest.fixture
def record():
    def add(criterion: int, passed: bool, detail: str) -> None:
        ACCEPTANCE[criterion].append((bool(passed), detail))
        print(f"criterion {criterion}: {'PASS' if passed else 'FAIL'} {detail}")
    return add


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        parts = ACCEPTANCE[number]
        status = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        terminalreporter.write_line(f"criterion {number:2d}: {status}  " + "; ".join(d for _, d in parts))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def plane3():
    """n = 3 with the real parts of z_1 and z_2 active."""
    return TorusGeometry(3, (1, 3), (16, 16))


@pytest.fixture
def full_z1():
    """n = 3 with both real axes of z_1 active."""
    return TorusGeometry(3, (1, 2), (16, 16))
