import numpy as np
import pytest

from transmon_lab.model import BasisConfig, DeviceParameters

# criterion number -> list of (passed, detail), filled by test_acceptance.py
ACCEPTANCE: dict[int, list[tuple[bool, str]]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        results = ACCEPTANCE[k]
        ok = all(r[0] for r in results)
        detail = "; ".join(r[1] for r in results)
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture(scope="session")
def reference_device():
    return DeviceParameters.reference()


@pytest.fixture(scope="session")
def small_basis():
    return BasisConfig(-3, 3, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_unitary(rng, d=4):
    z = (rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))
