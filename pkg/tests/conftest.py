import numpy as np
import pytest

from hierrank import diffcore as dc


def numeric_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. every entry of ``x`` (modified in place)."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = f()
        flat[i] = orig - h
        down = f()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return g


def rel_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-8) -> float:
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def check_op(build, *shapes, rng, h=1e-5, positive=False):
    """Backprop vs central differences for ``sum(build(*params) * w)`` with random ``w``.

    Gradient entries below 1e-4 are compared on absolute error: central
    differences at this step carry ~1e-11 of round-off.
    """
    arrays = []
    for s in shapes:
        a = rng.standard_normal(s)
        arrays.append(np.abs(a) + 0.5 if positive else a)
    params = [dc.parameter(a) for a in arrays]
    out = build(*params)
    w = rng.standard_normal(out.shape)

    def value():
        with dc.no_grad():
            return float(np.sum(build(*params).data * w))

    loss = dc.sum(dc.mul(build(*params), w))
    loss.backward()
    worst = 0.0
    for p in params:
        num = numeric_grad(value, p.data, h)
        worst = max(worst, rel_error(p.grad, num, floor=1e-4))
    return worst


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(name: str, passed: bool, detail: str) -> None:
    line = f"{'PASS' if passed else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
