"""Reverse-Weibull fitting of block maxima and the right-endpoint estimate.

Block maxima of a bounded quantity (here: dual-norm gradient magnitudes over
a ball) follow the GEV family with shape ``xi < 0``, which has a finite right
endpoint ``u - sigma / xi``. That endpoint is the local Lipschitz estimate.

The likelihood is optimized over an unconstrained reparameterization
``(a, b, c)`` of ``(xi, endpoint, sigma)``::

    xi       = -1 / (1 + exp(-a))          in (-1, 0)
    endpoint = max(x) + s * exp(b)         strictly above every observation
    sigma    = s * exp(c)

with ``s`` the sample standard deviation. ``xi <= -1`` is excluded because
the likelihood is unbounded there (the density diverges at the endpoint).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

GRAD_TOL = 1e-6
MAX_ITER = 500
MAX_RESTARTS = 3


class FitError(RuntimeError):
    """The sample cannot support a reverse-Weibull fit; use the max fallback."""


@dataclass(frozen=True)
class WeibullFit:
    xi: float
    u: float
    sigma: float
    log_likelihood: float
    endpoint: float
    iterations: int = 0

    def to_dict(self) -> dict:
        return {"xi": self.xi, "u": self.u, "sigma": self.sigma,
                "endpoint": self.endpoint, "loglik": self.log_likelihood}


def gev_cdf(g, xi: float, u: float, sigma: float):
    """GEV distribution function at ``g`` for shape ``xi``, location ``u``, scale ``sigma``.

    Covers all three branches: Gumbel (``xi == 0``), Frechet (``xi > 0``)
    and reverse Weibull (``xi < 0``, equal to 1 at and past the endpoint).
    """
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    z = (np.asarray(g, dtype=np.float64) - u) / sigma
    if xi == 0.0:
        out = np.exp(-np.exp(-z))
    else:
        t = 1.0 + xi * z
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            inside = np.exp(-np.power(np.where(t > 0, t, 1.0), -1.0 / xi))
        # outside the support: below the lower endpoint (xi > 0) or above the upper one (xi < 0)
        out = np.where(t > 0, inside, 0.0 if xi > 0 else 1.0)
    return float(out) if np.ndim(out) == 0 else out


def gev_loglik(values, xi: float, u: float, sigma: float) -> float:
    """GEV log-likelihood for ``xi != 0``; -inf off the support."""
    x = np.asarray(values, dtype=np.float64)
    t = 1.0 + xi * (x - u) / sigma
    if sigma <= 0 or np.any(t <= 0):
        return -math.inf
    lt = np.log(t)
    return float(-x.size * math.log(sigma) - (1.0 + 1.0 / xi) * lt.sum() - np.exp(-lt / xi).sum())


def reverse_weibull_sample(n: int, xi: float, u: float, sigma: float, rng: np.random.Generator) -> np.ndarray:
    """Inverse-CDF draws from the GEV with ``xi < 0``."""
    if not xi < 0:
        raise ValueError("reverse Weibull needs xi < 0")
    v = rng.random(n)
    return u + sigma / xi * ((-np.log(v)) ** (-xi) - 1.0)


# bound on the unconstrained parameters; beyond it the fit has left for a limit case
THETA_BOUND = 40.0


def _negloglik(theta, x, top, s):
    a, b, c = np.clip(theta, -THETA_BOUND, THETA_BOUND)
    k = 1.0 / (1.0 + math.exp(-a))  # k = -xi
    e = top + s * math.exp(b)
    sigma = s * math.exp(c)
    n = x.size
    gap = e - x
    L = math.log(k) + np.log(gap) - math.log(sigma)  # log t_i, t_i = k (e - x_i) / sigma
    w = np.exp(L / k)  # t_i^(-1/xi)
    ll = -n * math.log(sigma) - (1.0 - 1.0 / k) * L.sum() - w.sum()
    dL = -(1.0 - 1.0 / k) - w / k  # d ll / d L_i
    dk = -L.sum() / k**2 + (w * L).sum() / k**2 + dL.sum() / k
    de = (dL / gap).sum()
    dsig = -n / sigma - dL.sum() / sigma
    grad = np.array([dk * k * (1.0 - k), de * s * math.exp(b), dsig * sigma])
    return -ll, -grad


def fit_reverse_weibull(maxima) -> WeibullFit:
    """Maximum-likelihood reverse-Weibull fit of block maxima.

    Raises :class:`FitError` for fewer than three values, a (near) constant
    sample or an optimizer that does not converge.
    """
    x = np.asarray(maxima, dtype=np.float64).reshape(-1)
    if x.size < 3:
        raise FitError("need at least 3 block maxima")
    if not np.all(np.isfinite(x)):
        raise FitError("non-finite block maximum")
    top = float(x.max())
    if top - float(x.min()) <= 1e-12 * max(1.0, abs(top)):
        raise FitError("degenerate sample: all maxima equal")
    s = float(x.std())
    # start at xi = -0.5, u = max, sigma = std  =>  endpoint = max + 2 std
    start = np.array([0.0, math.log(2.0), 0.0])
    for _ in range(MAX_RESTARTS):
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            res = minimize(_negloglik, start, args=(x, top, s), jac=True, method="BFGS",
                           options={"gtol": GRAD_TOL, "maxiter": MAX_ITER})
        finite = np.all(np.isfinite(res.x)) and math.isfinite(res.fun)
        grad_norm = float(np.max(np.abs(res.jac))) if finite else math.inf
        # BFGS may stop on precision loss with an essentially zero gradient; accept that
        if finite and (res.success or grad_norm < 1e-4):
            break
        # a failed line search usually recovers from a fresh Hessian at the last iterate
        start = res.x if finite else start + 0.5
    else:
        raise FitError(f"no convergence after {MAX_RESTARTS} attempts: {res.message}")
    a, b, c = res.x
    if a < -0.5 * THETA_BOUND or b > 0.5 * THETA_BOUND:
        # xi -> 0 with a receding endpoint: the sample looks Gumbel, no finite endpoint
        raise FitError("likelihood maximized in the Gumbel limit; no finite endpoint")
    a, b, c = np.clip(res.x, -THETA_BOUND, THETA_BOUND)
    xi = -1.0 / (1.0 + math.exp(-a))
    endpoint = top + s * math.exp(b)
    sigma = s * math.exp(c)
    u = endpoint + sigma / xi
    if not (xi < 0 and math.isfinite(endpoint) and math.isfinite(u)):
        raise FitError("fit produced no finite endpoint")
    return WeibullFit(xi, u, sigma, -float(res.fun), endpoint, int(res.nit))


def lipschitz_estimate(maxima, variant: str = "location_scale"):
    """Local Lipschitz estimate from block maxima.

    Returns ``(estimate, fit, warning)``. ``fit`` is ``None`` and ``warning``
    a message when the fit failed; the estimate then falls back to the
    largest observed maximum. ``variant="standardized"`` returns ``-1/xi``
    instead of the location-scale endpoint, for comparison runs only.
    """
    x = np.asarray(maxima, dtype=np.float64).reshape(-1)
    if x.size == 0:
        raise ValueError("no block maxima")
    top = float(x.max())
    try:
        fit = fit_reverse_weibull(x)
    except FitError as exc:
        return top, None, f"fallback to sample max: {exc}"
    if variant == "standardized":
        return -1.0 / fit.xi, fit, None
    if variant != "location_scale":
        raise ValueError(f"unknown endpoint variant {variant!r}")
    return max(fit.endpoint, top), fit, None
