import numpy as np
import pytest

from angiointerp import _backend
from angiointerp.synthetic import PhantomConfig, generate_clip

BACKENDS = _backend.available()


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def small_clip():
    """64x64 phantom, 16 frames; cheap enough for per-test use."""
    return generate_clip(PhantomConfig(seed=3, size=(64, 64), n_frames=16))


@pytest.fixture(scope="session")
def textured_pair():
    """Smooth random texture and the same texture translated by (3, 0)."""
    from scipy import ndimage

    rng = np.random.default_rng(7)
    big = ndimage.gaussian_filter(rng.random((128, 160)), 2.5, mode="wrap")
    big = (big - big.min()) / (big.max() - big.min())
    a = big[:, 10:138]
    b = big[:, 7:135]  # b(x + 3) = a(x)
    return a, b


_ACCEPTANCE = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Append ``(criterion, passed, detail)``; printed in the terminal summary."""

    def record(criterion, passed, detail):
        line = f"[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
