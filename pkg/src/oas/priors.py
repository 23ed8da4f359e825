"""Source priors and reproducible random streams.

Every random quantity in the package is drawn from a Philox stream keyed by a
master seed plus an integer key path, so that a trial's draws depend only on
its identifiers and never on execution order.  Gaussian variates use the
inverse-CDF transform on open-interval uniforms.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

from .errors import ConfigurationError


class SourceKind(str, enum.Enum):
    SPARSE_GAUSSIAN = "sparse-gaussian"
    BINARY = "binary"


@dataclass(frozen=True)
class SourceModel:
    """Prior of a single data component.

    ``SPARSE_GAUSSIAN``: 0 with probability ``p``, otherwise N(0, 1).
    ``BINARY``: +1 with probability ``p``, otherwise -1.
    """

    kind: SourceKind
    p: float

    def __post_init__(self):
        object.__setattr__(self, "kind", SourceKind(self.kind))
        p = float(self.p)
        if self.kind is SourceKind.SPARSE_GAUSSIAN and not 0.0 <= p < 1.0:
            raise ConfigurationError(f"sparse-gaussian source needs 0 <= p < 1, got p={p}")
        if self.kind is SourceKind.BINARY and not 0.0 < p < 1.0:
            raise ConfigurationError(f"binary source needs 0 < p < 1, got p={p}")
        object.__setattr__(self, "p", p)

    @classmethod
    def sparse_gaussian(cls, p: float) -> "SourceModel":
        return cls(SourceKind.SPARSE_GAUSSIAN, p)

    @classmethod
    def binary(cls, p: float) -> "SourceModel":
        return cls(SourceKind.BINARY, p)

    @property
    def power(self) -> float:
        """Average power E[x^2]."""
        if self.kind is SourceKind.SPARSE_GAUSSIAN:
            return 1.0 - self.p
        return 1.0

    @property
    def prior_mean(self) -> float:
        if self.kind is SourceKind.SPARSE_GAUSSIAN:
            return 0.0
        return 2.0 * self.p - 1.0

    @property
    def prior_variance(self) -> float:
        """Posterior MSE of a component that has never been measured."""
        if self.kind is SourceKind.SPARSE_GAUSSIAN:
            return 1.0 - self.p
        return 4.0 * self.p * (1.0 - self.p)


# integer tags for the last element of a stream key
TRUTH, NOISE, CALIBRATION_TRUTH, CALIBRATION_NOISE = 0, 1, 2, 3


def stream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, *key)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def open_uniform(rng: np.random.Generator, size) -> np.ndarray:
    """Uniforms on the open interval (0, 1) with 53-bit resolution."""
    k = rng.integers(0, 2**52, size=size, dtype=np.int64)
    return (2.0 * k + 1.0) * 2.0**-53


def standard_normal(rng: np.random.Generator, size) -> np.ndarray:
    """N(0, 1) variates by inverse-CDF transform.

    Consuming the stream in chunks yields the same sequence as one large draw.
    """
    return ndtri(open_uniform(rng, size))


def sample_source(model: SourceModel, n: int, seed: int | np.random.Generator) -> np.ndarray:
    """Draw ``n`` i.i.d. components from ``model``.

    ``seed`` is either an integer master seed or an existing generator.
    Sparse-Gaussian zeros are exact zeros.
    """
    if n < 1:
        raise ConfigurationError(f"need n >= 1, got {n}")
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed)
    u = open_uniform(rng, n)
    if model.kind is SourceKind.BINARY:
        return np.where(u < model.p, 1.0, -1.0)
    g = standard_normal(rng, n)
    return np.where(u < model.p, 0.0, g)
