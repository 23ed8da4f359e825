"""Quadrature evaluation of Bayes' rule, independent of the closed forms.

The sparse-Gaussian posterior is a point mass at zero plus a continuous part;
the continuous integrals are evaluated by Gauss-Hermite quadrature on nodes
placed around the likelihood peak, doubling the order until two successive
estimates agree.  The binary posterior is an exact two-point sum.  Everything
is computed from the raw observation list, not from (s, k).
"""
from __future__ import annotations

from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.special import logsumexp, roots_hermite

from .errors import DomainError, NumericalError
from .posterior import PosteriorEstimate
from .priors import SourceKind, SourceModel

MIN_ORDER = 16
MAX_ORDER = 2048
RTOL = 1e-10


@lru_cache(maxsize=None)
def _hermite(n: int):
    t, w = roots_hermite(n)
    with np.errstate(divide="ignore"):
        return t, np.log(w)


def _loglik(x: np.ndarray, ys: np.ndarray, sigma2: float) -> np.ndarray:
    return -np.sum((ys[None, :] - x[:, None]) ** 2, axis=1) / (2.0 * sigma2)


def _weighted_mean_var(logw: np.ndarray, x: np.ndarray):
    lz = logsumexp(logw)
    w = np.exp(logw - lz)
    r = float(np.sum(w * x))
    mse = float(np.sum(w * (x - r) ** 2))
    return r, mse


def _sparse_gaussian(ys: np.ndarray, sigma2: float, p: float, order: int):
    k = ys.size
    center = float(np.mean(ys))
    scale = np.sqrt(2.0 * sigma2 / k)
    t, logw_gh = _hermite(order)
    x = center + scale * t
    # int f(x) dx = scale * sum_j w_j exp(t_j^2) f(x_j)
    log_prior = -0.5 * x * x - 0.5 * np.log(2.0 * np.pi)
    logw = np.log(scale) + logw_gh + t * t + log_prior + _loglik(x, ys, sigma2)
    if p > 0.0:
        logw = logw + np.log1p(-p)
        # point mass at zero
        x = np.append(x, 0.0)
        logw = np.append(logw, np.log(p) + _loglik(np.zeros(1), ys, sigma2))
    keep = np.isfinite(logw)
    return _weighted_mean_var(logw[keep], x[keep])


def _binary(ys: np.ndarray, sigma2: float, p: float):
    x = np.array([1.0, -1.0])
    logw = np.log([p, 1.0 - p]) + _loglik(x, ys, sigma2)
    return _weighted_mean_var(logw, x)


def _close(a: float, b: float, scale: float) -> bool:
    return abs(a - b) <= RTOL * max(abs(a), abs(b)) + 1e-15 * scale


def posterior_oracle(model: SourceModel, observations: Sequence[float], sigma2: float) -> PosteriorEstimate:
    """Numerically integrated posterior mean and MSE.

    Raises
    ------
    NumericalError
        If Gauss-Hermite estimates have not settled at ``MAX_ORDER`` nodes.
    """
    ys = np.asarray(observations, dtype=float).ravel()
    if ys.size == 0:
        raise DomainError("oracle needs at least one observation")
    if sigma2 <= 0:
        raise DomainError(f"noise variance must be positive, got {sigma2}")
    if model.kind is SourceKind.BINARY:
        return PosteriorEstimate(*_binary(ys, sigma2, model.p))

    order = MIN_ORDER
    prev = _sparse_gaussian(ys, sigma2, model.p, order)
    scale = 1.0 + abs(float(np.mean(ys)))
    history = [(order, prev)]
    while order < MAX_ORDER:
        order *= 2
        cur = _sparse_gaussian(ys, sigma2, model.p, order)
        history.append((order, cur))
        if _close(cur[0], prev[0], scale) and _close(cur[1], prev[1], scale * scale):
            return PosteriorEstimate(*cur)
        prev = cur
    raise NumericalError(
        "Gauss-Hermite quadrature did not converge; (order, r, mse) history: "
        + ", ".join(f"({n}, {r:.17g}, {m:.17g})" for n, (r, m) in history))
