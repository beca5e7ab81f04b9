"""Certified movement-cost prioritization.

For every test input ``x0`` the gap ``h`` to its target position is divided
by an estimate of the largest dual-norm gradient magnitude of ``h`` over an
L_p ball around ``x0``. The estimate is the right endpoint of a reverse
Weibull fitted to per-batch maxima of sampled gradient norms. Inputs are
then ordered by that lower bound on movement cost, smallest first.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Protocol

import numpy as np

from .centers import gap_head
from .gevt import WeibullFit, lipschitz_estimate
from .model import Model
from .sampling import BallSpec, dual_norm, input_seed, lp_norm, make_rng, parse_norm, sample_batch

MODES = ("white_box", "black_box")
VARIANTS = ("location_scale", "standardized")


@dataclass(frozen=True)
class CertPriConfig:
    """Algorithm inputs. ``radius`` is a fraction of max|x| when ``radius_relative``.

    ``fd_step`` is relative to each feature's scale (max |x_j| over the
    prioritized inputs) in black-box mode.
    """

    p: float = 2.0
    radius: float = 0.04
    radius_relative: bool = True
    batches: int = 6
    samples_per_batch: int = 10
    mode: str = "white_box"
    fd_step: float = 1e-4
    seed: int = 0
    endpoint_variant: str = "location_scale"

    def __post_init__(self):
        object.__setattr__(self, "p", parse_norm(self.p))
        if not self.radius > 0:
            raise ValueError("radius must be > 0")
        if self.batches < 3:
            raise ValueError("need at least 3 batches")
        if self.samples_per_batch < 5:
            raise ValueError("need at least 5 samples per batch")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not self.fd_step > 0:
            raise ValueError("fd_step must be > 0")
        if self.endpoint_variant not in VARIANTS:
            raise ValueError(f"endpoint_variant must be one of {VARIANTS}")

    @property
    def q(self) -> float:
        return dual_norm(self.p)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["p"] = _norm_repr(self.p)
        d["q"] = _norm_repr(self.q)
        return d


def _norm_repr(p: float):
    return "inf" if math.isinf(p) else int(p) if p == int(p) else p


class ScalarField(Protocol):
    def value(self, X: np.ndarray) -> np.ndarray: ...

    def gradient(self, X: np.ndarray) -> np.ndarray: ...


class ModelGapField:
    """Gap ``h`` of a model with its class index frozen at ``x0``."""

    def __init__(self, model: Model, x0):
        self.model = model
        self.head = gap_head(model, x0)

    def value(self, X):
        return self.head(self._out(X))[0]

    def _out(self, X):
        return self.model.forward(np.atleast_2d(X))

    def gradient(self, X):
        return self.model.input_gradient(np.atleast_2d(X), self.head)


class LinearField:
    """h(x) = w.x + b; its gradient norm is constant."""

    def __init__(self, w, b=0.0):
        self.w = np.asarray(w, dtype=np.float64)
        self.b = float(b)

    def value(self, X):
        return np.atleast_2d(X) @ self.w + self.b

    def gradient(self, X):
        X = np.atleast_2d(X)
        return np.broadcast_to(self.w, X.shape).copy()


def estimate_gradient_blackbox(value: Callable[[np.ndarray], np.ndarray], X, step) -> np.ndarray:
    """Symmetric-difference gradient of a scalar function from evaluations only.

    ``step`` is a scalar or a per-feature vector. Costs ``2 d`` evaluations
    per point, all issued in one batched call.
    """
    X = np.asarray(X, dtype=np.float64)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    n, d = X.shape
    delta = np.broadcast_to(np.asarray(step, dtype=np.float64), (d,))
    if not np.all(delta > 0):
        raise ValueError("finite-difference step must be > 0")
    offsets = np.diag(delta)
    plus = (X[:, None, :] + offsets[None]).reshape(-1, d)
    minus = (X[:, None, :] - offsets[None]).reshape(-1, d)
    vals = np.asarray(value(np.concatenate([plus, minus])), dtype=np.float64)
    if not np.all(np.isfinite(vals)):
        raise ValueError("non-finite evaluation during gradient estimation")
    vp, vm = vals[: n * d].reshape(n, d), vals[n * d:].reshape(n, d)
    g = (vp - vm) / (2.0 * delta)
    return g[0] if single else g


class FiniteDifferenceField:
    """Black-box view of a field: gradients come from forward evaluations only."""

    def __init__(self, inner: ScalarField, step):
        self.inner = inner
        self.step = step

    def value(self, X):
        return self.inner.value(X)

    def gradient(self, X):
        return estimate_gradient_blackbox(self.inner.value, np.atleast_2d(X), self.step)


@dataclass
class MovementCost:
    gamma_L: float
    h_value: float
    lipschitz: float
    maxima: np.ndarray
    fit: WeibullFit | None = None
    warnings: list[str] = field(default_factory=list)


def gradient_norm_samples(grad_field: ScalarField, x0, config: CertPriConfig, rng: np.random.Generator,
                          radius: float) -> np.ndarray:
    """Per-batch maxima of ``||grad h||_q`` over uniform samples of the ball around ``x0``."""
    spec = BallSpec(x0, radius, config.p)
    nb, nrsb = config.batches, config.samples_per_batch
    pts = sample_batch(spec, nb * nrsb, rng)
    norms = lp_norm(grad_field.gradient(pts), config.q, axis=1)
    return norms.reshape(nb, nrsb).max(axis=1)


def movement_cost(grad_field: ScalarField, x0, config: CertPriConfig, rng: np.random.Generator,
                  radius: float) -> MovementCost:
    x0 = np.asarray(x0, dtype=np.float64)
    h = float(grad_field.value(x0[None, :])[0])
    maxima = gradient_norm_samples(grad_field, x0, config, rng, radius)
    lip, fit, warn = lipschitz_estimate(maxima, config.endpoint_variant)
    warnings = [warn] if warn else []
    if h <= 0.0:
        gamma = 0.0
    elif lip > 0.0:
        gamma = h / lip
    else:
        gamma = math.inf
        warnings.append("zero gradient everywhere in the ball; movement cost unbounded")
    return MovementCost(gamma, h, float(lip), maxima, fit, warnings)


@dataclass
class PrioritizationResult:
    costs: list[MovementCost]
    omega: np.ndarray
    config: CertPriConfig
    radius: float

    @property
    def gammas(self) -> np.ndarray:
        return np.array([c.gamma_L for c in self.costs])

    def to_dict(self) -> dict:
        inputs = []
        for i, c in enumerate(self.costs):
            inputs.append({
                "index": i,
                "gamma_L": c.gamma_L if math.isfinite(c.gamma_L) else None,
                "h": c.h_value,
                "lipschitz": c.lipschitz,
                "fit": c.fit.to_dict() if c.fit is not None else None,
                "warnings": list(c.warnings),
            })
        return {
            "config": self.config.to_dict(),
            "seed": self.config.seed,
            "radius_abs": self.radius,
            "inputs": inputs,
            "omega": [int(i) for i in self.omega],
        }


def order_ascending(gammas) -> np.ndarray:
    """Indices sorted by gamma ascending; ties keep the original order."""
    return np.argsort(np.asarray(gammas, dtype=np.float64), kind="stable")


def resolve_radius(config: CertPriConfig, inputs: np.ndarray) -> float:
    if not config.radius_relative:
        return float(config.radius)
    bound = float(np.max(np.abs(inputs)))
    if bound == 0.0:
        raise ValueError("relative radius needs inputs with max|x| > 0")
    return config.radius * bound


def make_field(model: Model, x0, config: CertPriConfig, fd_scale=None) -> ScalarField:
    f = ModelGapField(model, x0)
    if config.mode == "black_box":
        scale = 1.0 if fd_scale is None else fd_scale
        return FiniteDifferenceField(f, config.fd_step * np.asarray(scale, dtype=np.float64))
    return f


def _cost_for(args):
    model, x0, config, radius, index, fd_scale = args
    rng = make_rng(input_seed(config.seed, index))
    return movement_cost(make_field(model, x0, config, fd_scale), x0, config, rng, radius)


def prioritize(model: Model, inputs, config: CertPriConfig = CertPriConfig(), workers: int = 1,
               progress: Callable[[int], None] | None = None) -> PrioritizationResult:
    """Rank test inputs by certified movement cost, lowest first.

    Only the input matrix is accepted, so labels can never influence the
    order. Each input uses its own seed (base seed XOR index), which makes
    serial and parallel runs identical.
    """
    X = np.asarray(inputs, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 1:
        raise ValueError("inputs must be a non-empty N x d matrix")
    if X.shape[1] != model.input_dim:
        raise ValueError(f"inputs have dimension {X.shape[1]}, model expects {model.input_dim}")
    radius = resolve_radius(config, X)
    scale = np.max(np.abs(X), axis=0)
    scale = np.where(scale > 0, scale, 1.0)
    jobs = [(model, X[i], config, radius, i, scale) for i in range(X.shape[0])]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            costs = list(pool.map(_cost_for, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        costs = []
        for i, job in enumerate(jobs):
            costs.append(_cost_for(job))
            if progress is not None:
                progress(i + 1)
    omega = order_ascending([c.gamma_L for c in costs])
    return PrioritizationResult(costs, omega, config, radius)


def gap_reached(grad_field: ScalarField) -> Callable[[np.ndarray], np.ndarray]:
    """Target reached when the gap closes, h(x) <= 0."""
    return lambda X: grad_field.value(X) <= 0.0


def class_center_reached(model: Model, x0) -> Callable[[np.ndarray], np.ndarray]:
    """Target reached when the frozen class's probability hits its center value at ``x0``."""
    from .centers import _class_center

    p0 = model.forward(x0)
    c = int(np.argmax(p0))
    target = float(_class_center(p0[c]))
    return lambda X: model.forward(np.atleast_2d(X))[:, c] >= target


def soundness_probe(reached: Callable[[np.ndarray], np.ndarray], x0, gamma_L: float, p, trials: int,
                    rng: np.random.Generator) -> float:
    """Fraction of uniform perturbations with ||mu||_p <= gamma_L that reach the target."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not gamma_L > 0 or not math.isfinite(gamma_L):
        return 0.0
    pts = sample_batch(BallSpec(x0, gamma_L, p), trials, rng)
    return float(np.mean(reached(pts)))
