"""Desk-scale synthetic subjects.

Bug-revealing inputs come from label noise and from overlapping classes
rather than from adversarial construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .sampling import make_rng

GENERATORS = ("gaussian_blobs", "two_moons", "linear_regression_noise")


@dataclass(frozen=True)
class SyntheticSubjectSpec:
    generator: str = "gaussian_blobs"
    classes: int = 3
    input_dim: int = 2
    output_dim: int = 1
    n_train: int = 600
    n_test: int = 500
    label_noise: float = 0.0
    test_label_noise: float = 0.0
    spread: float = 1.0
    separation: float = 4.0
    truncate: bool = True
    target_noise: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.generator not in GENERATORS:
            raise ValueError(f"generator must be one of {GENERATORS}")
        if self.n_train < 1 or self.n_test < 1:
            raise ValueError("sample counts must be >= 1")
        for name in ("label_noise", "test_label_noise"):
            if not 0.0 <= getattr(self, name) <= 0.5:
                raise ValueError(f"{name} must lie in [0, 0.5]")
        if self.input_dim < 1 or self.output_dim < 1:
            raise ValueError("dimensions must be >= 1")
        if self.generator == "gaussian_blobs" and self.classes < 2:
            raise ValueError("blobs need at least 2 classes")
        if self.generator == "two_moons" and self.input_dim < 2:
            raise ValueError("two_moons needs input_dim >= 2")
        if self.spread <= 0 or self.separation <= 0:
            raise ValueError("spread and separation must be > 0")


@dataclass
class SyntheticSubject:
    train: Dataset
    test: Dataset
    meta: dict = field(default_factory=dict)


def blob_centers(k: int, d: int, separation: float, rng) -> np.ndarray:
    """``k`` centers with pairwise distance close to ``separation``."""
    if d >= k:
        # scaled simplex corners: all pairwise distances equal separation
        c = np.zeros((k, d))
        c[:, :k] = np.eye(k) * separation / np.sqrt(2.0)
        c -= c.mean(axis=0)
        q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        return c @ q.T
    if d == 1:
        return (np.arange(k) - (k - 1) / 2.0)[:, None] * separation
    # evenly spaced on a circle in the first two coordinates
    ang = 2 * np.pi * np.arange(k) / k
    r = separation / (2 * np.sin(np.pi / k))
    c = np.zeros((k, d))
    c[:, 0], c[:, 1] = r * np.cos(ang), r * np.sin(ang)
    return c


def _blobs(spec, n, centers, rng):
    k, d = centers.shape
    labels = rng.integers(0, k, size=n)
    offsets = spec.spread * rng.standard_normal((n, d))
    if spec.truncate:
        # keep every point strictly inside its Voronoi cell
        dmin = min(np.linalg.norm(centers[i] - centers[j]) for i in range(k) for j in range(i + 1, k))
        limit = 0.49 * dmin
        norms = np.linalg.norm(offsets, axis=1)
        bad = norms > limit
        while bad.any():
            offsets[bad] = spec.spread * rng.standard_normal((int(bad.sum()), d))
            norms = np.linalg.norm(offsets, axis=1)
            bad = norms > limit
    return centers[labels] + offsets, labels


def _moons(spec, n, rng):
    labels = rng.integers(0, 2, size=n)
    t = rng.uniform(0, np.pi, size=n)
    x = np.where(labels == 0, np.cos(t), 1.0 - np.cos(t))
    y = np.where(labels == 0, np.sin(t), 0.5 - np.sin(t))
    pts = np.zeros((n, spec.input_dim))
    pts[:, 0], pts[:, 1] = x, y
    pts += 0.1 * spec.spread * rng.standard_normal(pts.shape)
    return pts, labels


def flip_labels(labels: np.ndarray, rate: float, k: int, rng) -> np.ndarray:
    """Move a ``rate`` fraction of labels to a different, uniformly chosen class."""
    flip = rng.random(labels.shape[0]) < rate
    shift = rng.integers(1, k, size=labels.shape[0])
    return np.where(flip, (labels + shift) % k, labels)


def generate(spec: SyntheticSubjectSpec) -> SyntheticSubject:
    """Deterministic train/test split for ``spec``.

    Label noise draws from its own stream, so changing the noise rate leaves
    the features and the noiseless labels untouched.
    """
    rng = make_rng(spec.seed)
    noise_rng = make_rng(spec.seed ^ 0x5EED)
    meta = {"generator": spec.generator, "seed": spec.seed}
    if spec.generator == "linear_regression_noise":
        w = rng.standard_normal((spec.output_dim, spec.input_dim))
        b = rng.standard_normal(spec.output_dim)
        X = rng.uniform(-1.0, 1.0, size=(spec.n_train + spec.n_test, spec.input_dim))
        eps = spec.target_noise * rng.standard_normal((X.shape[0], spec.output_dim))
        T = X @ w.T + b + eps
        meta.update(weights=w.tolist(), bias=b.tolist(), target_noise=spec.target_noise)
        tr, te = slice(0, spec.n_train), slice(spec.n_train, None)
        return SyntheticSubject(Dataset(X[tr], targets=T[tr]), Dataset(X[te], targets=T[te]), meta)

    n = spec.n_train + spec.n_test
    if spec.generator == "gaussian_blobs":
        k = spec.classes
        centers = blob_centers(k, spec.input_dim, spec.separation, rng)
        X, y = _blobs(spec, n, centers, rng)
        meta["centers"] = centers.tolist()
    else:
        k = 2
        X, y = _moons(spec, n, rng)
    y_train = flip_labels(y[: spec.n_train], spec.label_noise, k, noise_rng)
    y_test = flip_labels(y[spec.n_train:], spec.test_label_noise, k, noise_rng)
    meta["classes"] = k
    return SyntheticSubject(Dataset(X[: spec.n_train], y_train), Dataset(X[spec.n_train:], y_test), meta)
