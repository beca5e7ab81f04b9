import numpy as np
import pytest

from certpri.model import Layer, Model, ModelSignature, dense_model
from certpri.sampling import make_rng


def central_difference(f, x, rel_step=1e-5):
    """Central differences with a step scaled by |x_i| (floored at 1)."""
    x = np.asarray(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        h = rel_step * max(1.0, abs(x[i]))
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


@pytest.fixture
def relu_fixture():
    """2-2-2 relu network with hand-checked outputs at x = (1, 1)."""
    layers = (
        Layer([[1.0, -1.0], [2.0, 1.0]], [0.5, -1.0], "relu"),
        Layer([[1.0, 1.0], [-1.0, 0.5]], [0.5, 0.0], "identity"),
    )
    return layers


@pytest.fixture
def blob_classifier():
    rng = make_rng(11)
    return dense_model([2, 8, 3], ["tanh", "identity"], rng=rng)


def random_model(rng, act="tanh", task="classification", depth=3, d=None, k=None):
    d = d or int(rng.integers(2, 7))
    k = k or int(rng.integers(2, 5))
    widths = [d] + [int(rng.integers(3, 9)) for _ in range(depth - 1)] + [k]
    acts = [act] * (depth - 1) + ["identity"]
    bounds = (-5.0, 5.0) if task == "regression" else None
    return dense_model(widths, acts, task=task, rng=rng, output_bounds=bounds)


@pytest.fixture
def make_random_model():
    return random_model


@pytest.fixture
def identity_regressor():
    sig = ModelSignature(2, 2, "regression", -10.0, 10.0)
    return Model(sig, (Layer(np.eye(2), np.zeros(2), "identity"),))


_criteria: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> None:
    """Print one PASS/FAIL line for an acceptance criterion and keep it for the summary."""
    line = f"{'PASS' if ok else 'FAIL'} criterion {number:>2}: {detail}"
    print(line)
    _criteria.append(line)


def pytest_terminal_summary(terminalreporter):
    if _criteria:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(_criteria, key=lambda l: int(l.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
