import numpy as np
import pytest

from p2sn.nnet import DenseLayer, OutputMap, P2SN


class ConstProfile:
    """Profile that plays the same action for every player."""

    noise_dim = 0

    def __init__(self, value, d_A=1):
        self.value = np.broadcast_to(np.asarray(value, dtype=float), (d_A,))

    def __call__(self, players, noise=None):
        players = np.asarray(players)
        return np.broadcast_to(self.value, players.shape[:-1] + self.value.shape).copy()


class FnProfile:
    """Profile given by a scalar function of the first player coordinate."""

    noise_dim = 0

    def __init__(self, fn):
        self.fn = fn

    def __call__(self, players, noise=None):
        return self.fn(np.asarray(players)[..., 0])[..., None]


def affine_net(B=1.0, w=1.0, c=0.0, output_map=None):
    """Three-parameter P2SN: a = out(w sin(B i) + c), no hidden layers."""
    return P2SN(
        np.array([[B]], dtype=float),
        [DenseLayer(np.array([[w]], dtype=float), np.array([c], dtype=float))],
        0,
        output_map or OutputMap.interval(-1.0, 1.0),
    )


def trapezoid(y, x):
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def record_acceptance(number, title, ok, detail):
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    ACCEPTANCE_LINES.append((number, line))
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
