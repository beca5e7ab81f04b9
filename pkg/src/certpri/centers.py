"""Target positions for inversely perturbed inputs and the gap h(x) to them.

For a classifier the target is a boosted probability of the predicted class,
``min(p * (1 + log(1 + p)), 1)``. For a regressor each output ``f`` moves to
``clip(f + |f| * log(1 + tanh f))`` inside the output domain. The gap between
the current output and its target is the scalar whose local Lipschitz
constant bounds the movement cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Model, ModelError


def _log1p_tanh(f):
    # log(1 + tanh f) = log 2 - log(1 + exp(-2f)), finite for very negative f
    return math.log(2.0) - np.logaddexp(0.0, -2.0 * np.asarray(f, dtype=np.float64))


def _class_center(p):
    return np.minimum(p * (1.0 + np.log1p(p)), 1.0)


def class_center(p_c):
    """Class-center probability for the predicted-class probability ``p_c``."""
    p = np.asarray(p_c, dtype=np.float64)
    if np.any(~(p > 0.0) | ~(p < 1.0)):
        raise ValueError("class probability must lie in the open interval (0, 1)")
    out = _class_center(p)
    return float(out) if out.ndim == 0 else out


def _check_bounds(bounds):
    lo, hi = bounds
    if not lo < hi:
        raise ValueError(f"invalid output bounds [{lo}, {hi}]")
    return lo, hi


def _regression_center(f, lo, hi):
    return np.clip(f + np.abs(f) * _log1p_tanh(f), lo, hi)


def regression_center(f_i, bounds=(-math.inf, math.inf)):
    """Regression center of output value(s) ``f_i``, clipped into ``bounds``."""
    lo, hi = _check_bounds(bounds)
    f = np.asarray(f_i, dtype=np.float64)
    if not np.all(np.isfinite(f)):
        raise ValueError("regression output must be finite")
    out = _regression_center(f, lo, hi)
    return float(out) if out.ndim == 0 else out


def classification_gap_head(c: int):
    """Head ``probs -> (h, dh/dprobs)`` with the class index frozen to ``c``."""

    def head(probs):
        p = probs[:, c]
        unclipped = p * (1.0 + np.log1p(p)) < 1.0
        h = np.where(unclipped, p * np.log1p(p), 1.0 - p)
        dh = np.where(unclipped, np.log1p(p) + p / (1.0 + p), -1.0)
        g = np.zeros_like(probs)
        g[:, c] = dh
        return h, g

    return head


def regression_gap_head(bounds):
    lo, hi = _check_bounds(bounds)

    def head(out):
        k = out.shape[1]
        t = np.tanh(out)
        raw = out + np.abs(out) * _log1p_tanh(out)
        center = np.clip(raw, lo, hi)
        diff = center - out
        inside = (raw > lo) & (raw < hi)
        # d/df [f + |f| log(1 + tanh f)] = 1 + sign(f) log(1 + tanh f) + |f| (1 - tanh f)
        dcenter = np.where(inside, 1.0 + np.sign(out) * _log1p_tanh(out) + np.abs(out) * (1.0 - t), 0.0)
        h = np.abs(diff).sum(axis=1) / k
        g = np.sign(diff) * (dcenter - 1.0) / k
        return h, g

    return head


def gap_head(model: Model, x0):
    """Scalar gap head for ``model``, with any class index resolved at ``x0``."""
    if model.task == "classification":
        return classification_gap_head(model.predict_label(x0))
    return regression_gap_head(model.signature.output_bounds)


@dataclass(frozen=True)
class CenterGap:
    h_value: float
    center_value: float | np.ndarray


def center_gap(model: Model, x) -> CenterGap:
    out = model.forward(x)
    if out.ndim != 1:
        raise ModelError("center_gap takes a single input vector")
    if model.task == "classification":
        c = int(np.argmax(out))
        p = out[c]
        center = float(_class_center(p))
        return CenterGap(center - float(p), center)
    lo, hi = model.signature.output_bounds
    center = _regression_center(out, lo, hi)
    return CenterGap(float(np.mean(np.abs(center - out))), center)
