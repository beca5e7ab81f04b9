"""Evaluation measurements for prioritization orders, and the DeepGini baseline."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

CUTOFFS = (100, 200, 300, 500, None)


class MetricWarning(UserWarning):
    pass


def _check_order(order, n):
    order = np.asarray(order, dtype=np.int64)
    if order.size == 0:
        raise ValueError("empty ordering")
    if order.size != n:
        raise ValueError(f"ordering has {order.size} entries for {n} inputs")
    if not np.array_equal(np.sort(order), np.arange(n)):
        raise ValueError("ordering is not a permutation of the input indices")
    return order


def _clamp_cutoff(cutoff, n):
    if cutoff is None:
        return n
    if cutoff < 1:
        raise ValueError("cutoff must be >= 1")
    if cutoff > n:
        warnings.warn(f"cutoff {cutoff} exceeds {n} inputs; clamped", MetricWarning, stacklevel=3)
        return n
    return int(cutoff)


def rauc_classification(order, bug_flags, cutoff: int | None = None, prefix_bugs: bool = False) -> float:
    """Area under the cumulative bug-count curve over the first ``cutoff`` ranks,
    relative to the ideal order's area ``N*N' + (N' - N'^2) / 2``.

    ``N'`` is the total number of bugs capped at ``N``; with ``prefix_bugs``
    only bugs inside the first ``N`` ranks are counted. No bugs gives 1.
    """
    flags = np.asarray(bug_flags, dtype=bool)
    order = _check_order(order, flags.size)
    n = _clamp_cutoff(cutoff, flags.size)
    ranked = flags[order][:n]
    n_bugs = int(ranked.sum()) if prefix_bugs else min(int(flags.sum()), n)
    if n_bugs == 0:
        return 1.0
    area = float(np.cumsum(ranked).sum())
    ideal = n * n_bugs + (n_bugs - n_bugs**2) / 2.0
    return area / ideal


def rauc_regression(order, mse, cutoff: int | None = None) -> float:
    """Cumulative-MSE area along ``order`` relative to the descending-MSE order."""
    err = np.asarray(mse, dtype=np.float64)
    if np.any(err < 0):
        raise ValueError("MSE values must be >= 0")
    order = _check_order(order, err.size)
    n = _clamp_cutoff(cutoff, err.size)
    ideal = np.cumsum(np.sort(err)[::-1][:n]).sum()
    if ideal == 0.0:
        warnings.warn("all MSE values are zero; RAUC set to 1", MetricWarning, stacklevel=2)
        return 1.0
    return float(np.cumsum(err[order][:n]).sum() / ideal)


def robr(rauc_attacked: float, rauc_original: float) -> float:
    """RAUC-all on attacked inputs as a percentage of RAUC-all on the originals."""
    if rauc_original == 0:
        raise ValueError("original RAUC is zero")
    return 100.0 * rauc_attacked / rauc_original


def genrew(ranks, n_methods: int) -> float:
    """Mean normalized rank reward ``(n - k + 1) / n`` over a repetitions x subjects table."""
    k = np.asarray(ranks)
    if k.size == 0:
        raise ValueError("empty rank table")
    if np.any(k != np.round(k)) or np.any(k < 1) or np.any(k > n_methods):
        raise ValueError(f"ranks must be integers in [1, {n_methods}]")
    return float(np.mean((n_methods - k + 1) / n_methods))


def method_ranks(scores) -> np.ndarray:
    """1-based ranks of methods by descending score (ties share the best rank)."""
    s = np.asarray(scores, dtype=np.float64)
    return np.array([1 + int(np.sum(s > v)) for v in s])


@dataclass(frozen=True)
class TTest:
    t: float
    p: float
    dof: float


def welch_t_test(a, b) -> TTest:
    """Two-sided Welch test with Welch-Satterthwaite degrees of freedom."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise ValueError("each sample needs at least 2 values")
    va, vb = a.var(ddof=1) / a.size, b.var(ddof=1) / b.size
    if va + vb == 0:
        if a.mean() == b.mean():
            return TTest(0.0, 1.0, float(a.size + b.size - 2))
        raise ValueError("both samples have zero variance")
    t = (a.mean() - b.mean()) / math.sqrt(va + vb)
    dof = (va + vb) ** 2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    p = 2.0 * stats.t.sf(abs(t), dof)
    return TTest(float(t), float(min(p, 1.0)), float(dof))


def deepgini_score(probs) -> np.ndarray | float:
    """Gini impurity ``1 - sum p_i^2``; larger means more likely bug-revealing."""
    p = np.asarray(probs, dtype=np.float64)
    if np.any(p < -1e-12) or not np.allclose(p.sum(axis=-1), 1.0, atol=1e-6):
        raise ValueError("not a probability vector")
    out = 1.0 - np.sum(p * p, axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def deepgini_order(probs) -> np.ndarray:
    return np.argsort(-deepgini_score(np.atleast_2d(probs)), kind="stable")


def metric_report(order, bug_flags=None, mse=None, cutoffs=CUTOFFS, prefix_bugs: bool = False) -> dict:
    """RAUC at every cutoff, keyed ``rauc_100`` ... ``rauc_all``.

    Cutoffs beyond the number of inputs are clamped (with a warning).
    """
    if (bug_flags is None) == (mse is None):
        raise ValueError("pass exactly one of bug_flags or mse")
    out = {}
    for c in cutoffs:
        key = "rauc_all" if c is None else f"rauc_{c}"
        if bug_flags is not None:
            out[key] = rauc_classification(order, bug_flags, c, prefix_bugs)
        else:
            out[key] = rauc_regression(order, mse, c)
    return out
