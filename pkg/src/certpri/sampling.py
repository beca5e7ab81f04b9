"""Uniform sampling from L_p balls, p in {1, 2, inf}."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


def parse_norm(p) -> float:
    """Normalize a norm order given as 1, 2, inf, 'inf' or 'infinity'."""
    if isinstance(p, str):
        key = p.strip().lower()
        if key in ("inf", "infinity", "linf"):
            return math.inf
        p = float(key)
    p = float(p)
    if p not in (1.0, 2.0, math.inf):
        raise ValueError(f"unsupported norm order p={p}; use 1, 2 or inf")
    return p


def dual_norm(p) -> float:
    """q with 1/p + 1/q = 1."""
    p = parse_norm(p)
    if p == 1.0:
        return math.inf
    if p == math.inf:
        return 1.0
    return p / (p - 1.0)


def lp_norm(v, p, axis=-1):
    p = float(p)
    v = np.abs(np.asarray(v, dtype=np.float64))
    if p == math.inf:
        return v.max(axis=axis)
    if p == 1.0:
        return v.sum(axis=axis)
    if p == 2.0:
        return np.sqrt((v * v).sum(axis=axis))
    return (v ** p).sum(axis=axis) ** (1.0 / p)


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 stream; identical output for identical seeds on every platform."""
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


def input_seed(base_seed: int, index: int) -> int:
    return (int(base_seed) ^ int(index)) & 0xFFFFFFFFFFFFFFFF


@dataclass(frozen=True)
class BallSpec:
    center: np.ndarray
    radius: float
    p: float = 2.0

    def __post_init__(self):
        c = np.array(self.center, dtype=np.float64).reshape(-1)
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "p", parse_norm(self.p))
        if not self.radius > 0 or not math.isfinite(self.radius):
            raise ValueError(f"radius must be positive and finite, got {self.radius}")

    @property
    def dim(self) -> int:
        return self.center.shape[0]


def unit_ball_batch(d: int, count: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """``count`` uniform points from the unit L_p ball in R^d."""
    p = parse_norm(p)
    if p == math.inf:
        return rng.uniform(-1.0, 1.0, size=(count, d))
    if p == 2.0:
        g = rng.standard_normal((count, d))
        norms = np.sqrt((g * g).sum(axis=1, keepdims=True))
        r = rng.random((count, 1)) ** (1.0 / d)
        pts = g / norms * r
    else:
        # signed exponentials over (sum |y| + one extra exponential) give
        # Dirichlet radial weights, which is uniform in the L1 ball
        y = rng.standard_exponential((count, d))
        s = rng.choice(np.array([-1.0, 1.0]), size=(count, d))
        z = rng.standard_exponential((count, 1))
        pts = s * y / (y.sum(axis=1, keepdims=True) + z)
    # guard against rounding just past the boundary
    n = lp_norm(pts, p, axis=1)[:, None]
    return np.where(n > 1.0, pts / n, pts)


def sample_batch(spec: BallSpec, count: int, rng: np.random.Generator) -> np.ndarray:
    if count < 1:
        raise ValueError("count must be >= 1")
    return spec.center + spec.radius * unit_ball_batch(spec.dim, count, spec.p, rng)


def sample(spec: BallSpec, rng: np.random.Generator) -> np.ndarray:
    return sample_batch(spec, 1, rng)[0]
