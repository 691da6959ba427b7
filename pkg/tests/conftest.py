import numpy as np
import pytest

from chaos_lab.grid import GridSpec
from chaos_lab.kernel import Mollifier, YukawaParams, build_kernel


@pytest.fixture(scope="session")
def spec128():
    return GridSpec(16.0, 128)


@pytest.fixture(scope="session")
def kernel_half(spec128):
    return build_kernel(YukawaParams(1.0, 0.5), Mollifier(0.5), spec128)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE: list[str] = []


@pytest.fixture(scope="session")
def verdict():
    """Record one PASS/FAIL line per acceptance criterion."""

    def emit(n: int, ok: bool, detail: str) -> None:
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'} | {detail}"
        _ACCEPTANCE.append(line)
        print(line)

    return emit


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
