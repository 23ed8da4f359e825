"""Closed-form conditional-mean estimators and posterior MSE.

All functions broadcast over numpy arrays of ``s`` (sum of observations of one
component) and ``k`` (number of observations).  Exponentials are evaluated in
the log domain so that large ``s**2 / sigma2`` neither overflows nor produces
``inf/inf``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import expit

from .errors import DomainError
from .priors import SourceKind, SourceModel


@dataclass(frozen=True)
class ObservationSummary:
    """Sufficient statistic of the observations of one component."""

    s: float
    k: int

    def __post_init__(self):
        if self.k < 1:
            raise DomainError(f"observation count must be >= 1, got k={self.k}")

    @classmethod
    def from_observations(cls, ys: Sequence[float]) -> "ObservationSummary":
        return cls(float(np.sum(ys)), len(ys))

    @property
    def mean(self) -> float:
        return self.s / self.k


@dataclass(frozen=True)
class PosteriorEstimate:
    r: float
    mse: float


def _check(sigma2, k):
    if np.any(np.asarray(sigma2) <= 0):
        raise DomainError(f"noise variance must be positive, got {sigma2}")
    if np.any(np.asarray(k) < 1):
        raise DomainError("observation count must be >= 1")


def _log_dtilde(s, k, sigma2, p):
    """log of the zero-vs-Gaussian posterior odds; -inf when p == 0."""
    s = np.asarray(s, dtype=float)
    k = np.asarray(k, dtype=float)
    if p == 0.0:
        return np.full(np.broadcast(s, k).shape, -np.inf)
    return (np.log(p) - np.log1p(-p) + 0.5 * np.log1p(k / sigma2)
            - s * s / (2.0 * sigma2 * (k + sigma2)))


def sg_reconstruct(s, k, sigma2: float, p: float):
    """Conditional mean of a sparse-Gaussian component given (s, k)."""
    _check(sigma2, k)
    log_d = _log_dtilde(s, k, sigma2, p)
    return np.asarray(s, dtype=float) / (k + sigma2) * expit(-log_d)


def sg_posterior_mse(s, k, sigma2: float, p: float):
    """Posterior MSE of a sparse-Gaussian component given (s, k)."""
    _check(sigma2, k)
    return _sg_mse(s, k, sigma2, p)


def _sg_mse(s, k, sigma2, p):
    s = np.asarray(s, dtype=float)
    log_d = _log_dtilde(s, k, sigma2, p)
    ksig = k + sigma2
    # (sigma2 + d/(1+d) * s^2/(k+sigma2)) / ((1+d)(k+sigma2))
    return (sigma2 + expit(log_d) * s * s / ksig) * expit(-log_d) / ksig


def _binary_arg(s, sigma2, p):
    return np.asarray(s, dtype=float) / sigma2 + 0.5 * (np.log(p) - np.log1p(-p))


def bin_reconstruct(s, k, sigma2: float, p: float):
    """Conditional mean of a +/-1 component; ``k`` only enters through ``s``."""
    _check(sigma2, k)
    return np.tanh(_binary_arg(s, sigma2, p))


def bin_posterior_mse(s, k, sigma2: float, p: float):
    """Posterior MSE of a +/-1 component, i.e. cosh**-2 of the shifted log-odds."""
    _check(sigma2, k)
    return _bin_mse(s, k, sigma2, p)


def _bin_mse(s, k, sigma2, p):
    a = np.abs(_binary_arg(s, sigma2, p))
    e = np.exp(-2.0 * a)
    return 4.0 * e / (1.0 + e) ** 2


def reconstruct(model: SourceModel, s, k, sigma2: float):
    """Conditional mean for ``model``; components with ``k == 0`` get the prior mean."""
    k = np.asarray(k)
    fn = sg_reconstruct if model.kind is SourceKind.SPARSE_GAUSSIAN else bin_reconstruct
    if np.all(k >= 1):
        return fn(s, k, sigma2, model.p)
    out = np.full(np.broadcast(np.asarray(s), k).shape, model.prior_mean)
    seen = k >= 1
    out[seen] = fn(np.broadcast_to(s, out.shape)[seen], k[seen], sigma2, model.p)
    return out


def posterior_mse(model: SourceModel, s, k, sigma2: float):
    """Posterior MSE for ``model``; components with ``k == 0`` get the prior variance."""
    k = np.asarray(k)
    fn = sg_posterior_mse if model.kind is SourceKind.SPARSE_GAUSSIAN else bin_posterior_mse
    if np.all(k >= 1):
        return fn(s, k, sigma2, model.p)
    out = np.full(np.broadcast(np.asarray(s), k).shape, model.prior_variance)
    seen = k >= 1
    out[seen] = fn(np.broadcast_to(s, out.shape)[seen], k[seen], sigma2, model.p)
    return out


def mse_kernel(model: SourceModel, sigma2: float):
    """Unchecked ``(s, k) -> mse`` for hot loops; requires ``k >= 1`` and ``sigma2 > 0``.

    Same arithmetic as :func:`posterior_mse`, so results agree bit for bit.
    """
    _check(sigma2, 1)
    p = model.p
    if model.kind is SourceKind.BINARY:
        return lambda s, k: _bin_mse(s, k, sigma2, p)
    if p == 0.0:
        return lambda s, k: _sg_mse(s, k, sigma2, p)
    log_odds = np.log(p) - np.log1p(-p)
    two_sigma2 = 2.0 * sigma2

    def kernel(s, k):
        ksig = k + sigma2
        log_d = log_odds + 0.5 * np.log1p(k / sigma2) - s * s / (two_sigma2 * ksig)
        return (sigma2 + expit(log_d) * s * s / ksig) * expit(-log_d) / ksig
    return kernel


def estimate(model: SourceModel, obs: ObservationSummary, sigma2: float) -> PosteriorEstimate:
    return PosteriorEstimate(float(reconstruct(model, obs.s, obs.k, sigma2)),
                             float(posterior_mse(model, obs.s, obs.k, sigma2)))
