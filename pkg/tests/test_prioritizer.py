import math

import numpy as np
import pytest

from certpri.model import Layer, Model, ModelSignature
from certpri.prioritizer import (CertPriConfig, FiniteDifferenceField, LinearField, ModelGapField,
                                 class_center_reached, estimate_gradient_blackbox, gap_reached,
                                 gradient_norm_samples, movement_cost, order_ascending, prioritize,
                                 soundness_probe)
from certpri.sampling import lp_norm, make_rng

from conftest import random_model


class QuadraticField:
    """h(x) = c - ||x||^2 / 2, so ||grad h||_2 = ||x||_2."""

    def __init__(self, c=1.0):
        self.c = c

    def value(self, X):
        X = np.atleast_2d(X)
        return self.c - 0.5 * np.sum(X * X, axis=1)

    def gradient(self, X):
        return -np.atleast_2d(X)


@pytest.mark.parametrize("p", [1, 2, math.inf])
def test_linear_field_matches_closed_form(p):
    rng = make_rng(0)
    cfg = CertPriConfig(p=p, radius=0.5, radius_relative=False)
    for _ in range(10):
        w = rng.standard_normal(4)
        x0 = rng.standard_normal(4)
        b = abs(w @ x0) + 1.0 - w @ x0  # keeps h(x0) = |w.x0| + 1 > 0
        cost = movement_cost(LinearField(w, b), x0, cfg, rng, cfg.radius)
        expected = (w @ x0 + b) / lp_norm(w, cfg.q)
        assert cost.gamma_L == pytest.approx(expected, rel=1e-12)
        assert "fallback" in cost.warnings[0]


def test_quadratic_maxima_bounded_by_radius():
    cfg = CertPriConfig(p=2, radius=0.3, radius_relative=False)
    maxima = gradient_norm_samples(QuadraticField(), np.zeros(3), cfg, make_rng(1), 0.3)
    assert maxima.shape == (6,)
    assert np.all(maxima <= 0.3 + 1e-12)


def test_blackbox_gradient_of_square():
    g = estimate_gradient_blackbox(lambda X: X[:, 0] ** 2, np.array([3.0, 1.0]), 1e-4)
    assert g[0] == pytest.approx(6.0, abs=1e-6)
    assert g[1] == 0.0


def test_blackbox_exact_on_linear_fields():
    w = np.array([0.5, -2.0, 3.0])
    f = LinearField(w, 0.1)
    X = make_rng(2).standard_normal((5, 3))
    assert np.allclose(estimate_gradient_blackbox(f.value, X, 1e-3), w, atol=1e-9)


def test_blackbox_agrees_with_backprop_on_random_mlp():
    rng = make_rng(3)
    model = random_model(rng, "tanh", depth=3, d=5, k=3)
    x0 = rng.standard_normal(5)
    white = ModelGapField(model, x0)
    black = FiniteDifferenceField(white, 1e-5)
    X = x0 + 0.05 * rng.standard_normal((20, 5))
    gw, gb = white.gradient(X), black.gradient(X)
    cos = np.sum(gw * gb, axis=1) / (np.linalg.norm(gw, axis=1) * np.linalg.norm(gb, axis=1))
    assert np.all(cos >= 0.999)


def test_invalid_step():
    with pytest.raises(ValueError):
        estimate_gradient_blackbox(lambda X: X[:, 0], np.zeros(2), 0.0)


def test_order_tie_break_and_trivial_cases():
    assert list(order_ascending([0.4, 0.1])) == [1, 0]
    assert list(order_ascending([0.2, 0.1, 0.2, 0.1])) == [1, 3, 0, 2]
    model = random_model(make_rng(4), d=3, k=2)
    res = prioritize(model, np.ones((1, 3)))
    assert list(res.omega) == [0]


def test_prioritize_is_deterministic():
    rng = make_rng(5)
    model = random_model(rng, d=4, k=3)
    X = rng.standard_normal((30, 4))
    a = prioritize(model, X, CertPriConfig(seed=9)).to_dict()
    b = prioritize(model, X, CertPriConfig(seed=9)).to_dict()
    c = prioritize(model, X, CertPriConfig(seed=10)).to_dict()
    assert a == b
    assert a["inputs"] != c["inputs"]
    assert sorted(a["omega"]) == list(range(30))


def test_parallel_matches_serial():
    rng = make_rng(6)
    model = random_model(rng, d=3, k=3)
    X = rng.standard_normal((16, 3))
    serial = prioritize(model, X, CertPriConfig(seed=1)).to_dict()
    parallel = prioritize(model, X, CertPriConfig(seed=1), workers=2).to_dict()
    assert serial == parallel


def test_zero_gap_gives_zero_cost():
    # a saturated classifier sits past its clip point, so h = 0
    sig = ModelSignature(1, 2, "classification")
    model = Model(sig, (Layer([[0.0], [0.0]], [40.0, 0.0]),))
    res = prioritize(model, np.array([[0.3]]), CertPriConfig(radius=0.1, radius_relative=False))
    assert res.costs[0].gamma_L == 0.0
    assert soundness_probe(lambda X: np.ones(len(X), bool), np.array([0.3]), 0.0, 2, 100, make_rng(0)) == 0.0


def test_constant_model_has_unbounded_cost():
    sig = ModelSignature(2, 2, "classification")
    model = Model(sig, (Layer(np.zeros((2, 2)), [0.0, 0.0]),))
    res = prioritize(model, np.ones((1, 2)))
    assert math.isinf(res.costs[0].gamma_L)
    assert res.to_dict()["inputs"][0]["gamma_L"] is None
    assert any("unbounded" in w for w in res.costs[0].warnings)


@pytest.mark.parametrize("p", [1, 2, math.inf])
def test_exact_linear_bound_is_never_crossed(p):
    rng = make_rng(7)
    w = rng.standard_normal(3)
    x0 = rng.standard_normal(3)
    f = LinearField(w, 2.0 - w @ x0)
    gamma = 2.0 / lp_norm(w, math.inf if p == 1 else (2 if p == 2 else 1))
    rate = soundness_probe(gap_reached(f), x0, gamma, p, 2000, rng)
    assert rate == 0.0


def test_regression_pipeline(identity_regressor):
    X = np.array([[0.5, 1.0], [2.0, -1.0], [0.0, 0.0]])
    res = prioritize(identity_regressor, X, CertPriConfig(radius=0.1, radius_relative=False))
    g = res.gammas
    assert g[2] == 0.0
    assert np.all(np.isfinite(g)) and np.all(g[:2] > 0)
    assert res.omega[0] == 2


def test_gamma_is_monotone_in_gap():
    # same field up to a constant: larger h means larger gamma
    w = np.array([1.0, 2.0])
    cfg = CertPriConfig(radius=0.1, radius_relative=False)
    gs = [movement_cost(LinearField(w, b), np.zeros(2), cfg, make_rng(0), 0.1).gamma_L for b in (0.1, 0.5, 2.0)]
    assert gs[0] < gs[1] < gs[2]


def test_class_center_reading_targets_frozen_class():
    model = random_model(make_rng(8), d=2, k=3)
    x0 = np.array([0.2, -0.1])
    reached = class_center_reached(model, x0)
    assert not reached(x0[None, :])[0]


@pytest.mark.parametrize("kwargs", [
    {"radius": 0.0}, {"batches": 2}, {"samples_per_batch": 4}, {"mode": "grey"},
    {"fd_step": -1.0}, {"endpoint_variant": "x"}, {"p": 3},
])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        CertPriConfig(**kwargs)


def test_config_echo():
    d = CertPriConfig(p="inf").to_dict()
    assert d["p"] == "inf" and d["q"] == 1
    assert CertPriConfig().to_dict()["p"] == 2


def test_input_shape_checked():
    model = random_model(make_rng(9), d=3, k=2)
    with pytest.raises(ValueError):
        prioritize(model, np.ones((2, 4)))
    with pytest.raises(ValueError):
        prioritize(model, np.zeros((2, 3)))
