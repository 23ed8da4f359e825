"""Observation-domain stopping rules for asymptotic adaptation.

For a fixed observation count ``k`` the posterior MSE of a symmetric prior is
a function of ``|ybar|`` only.  When that profile rises to a single peak and
then falls, the set ``{mse <= D}`` is ``|ybar| <= lower`` together with
``|ybar| >= upper``, so stopping needs just two comparisons per slot.  The
tables are built once, before any measurement.
"""
from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, StructuralError
from .posterior import ObservationSummary, posterior_mse
from .priors import SourceKind, SourceModel

GRID_STEP = 1e-2
BISECT_TOL = 1e-10
BISECT_MAX_ITER = 200
# relative slack when testing the grid profile for extra turning points
SLOPE_TOL = 1e-12


class Decision(str, enum.Enum):
    ALWAYS_STOP = "always"
    NEVER_STOP = "never"
    TWO_SIDED = "two_sided"


@dataclass(frozen=True)
class ThresholdRow:
    """Stop iff ``|ybar| <= lower`` or ``|ybar| >= upper``.

    ``lower is None`` means the low test never fires (MSE at ``ybar = 0``
    already exceeds the target); ``upper is None`` means the high test never
    fires (the large-``|ybar|`` asymptote exceeds the target).
    """

    k: int
    decision: Decision
    lower: float | None = None
    upper: float | None = None

    def stops(self, ybar_abs: float) -> bool:
        if self.decision is Decision.ALWAYS_STOP:
            return True
        if self.decision is Decision.NEVER_STOP:
            return False
        return (self.lower is not None and ybar_abs <= self.lower) or \
               (self.upper is not None and ybar_abs >= self.upper)


@dataclass(frozen=True)
class StoppingThresholds:
    model: SourceModel
    sigma2: float
    target_mse: float
    rows: tuple[ThresholdRow, ...]

    @property
    def k_max(self) -> int:
        return len(self.rows)

    def __post_init__(self):
        lo = np.full(self.k_max + 1, -np.inf)
        hi = np.full(self.k_max + 1, np.inf)
        for row in self.rows:
            if row.decision is Decision.ALWAYS_STOP:
                lo[row.k] = np.inf
            elif row.decision is Decision.TWO_SIDED:
                if row.lower is not None:
                    lo[row.k] = row.lower
                if row.upper is not None:
                    hi[row.k] = row.upper
        object.__setattr__(self, "_lo", lo)
        object.__setattr__(self, "_hi", hi)

    def stop_decision(self, obs: ObservationSummary) -> bool:
        if obs.k > self.k_max:
            raise IndexError(f"k={obs.k} exceeds the table's k_max={self.k_max}")
        return self.rows[obs.k - 1].stops(abs(obs.s) / obs.k)

    def stop_mask(self, s, k, mse) -> np.ndarray:
        """Vectorised stop decision; counts beyond ``k_max`` compare ``mse`` directly."""
        s = np.asarray(s, dtype=float)
        k = np.asarray(k)
        inside = k <= self.k_max
        kk = np.where(inside, k, 0)
        ybar = np.abs(s) / k
        hit = (ybar <= self._lo[kk]) | (ybar >= self._hi[kk])
        return np.where(inside, hit, np.asarray(mse) <= self.target_mse)

    def stop_rule(self):
        return self.stop_mask

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "kind", "tau_lo", "tau_hi"])
        for row in self.rows:
            w.writerow([row.k, row.decision.value,
                        "" if row.lower is None else f"{row.lower:.12g}",
                        "" if row.upper is None else f"{row.upper:.12g}"])
        return buf.getvalue()


def default_k_max(M: int, compression_ratio: float) -> int:
    return int(math.ceil(4 * M / compression_ratio)) * 4


def _bisect(f, a: float, b: float) -> tuple[float, float]:
    """Shrink ``[a, b]`` with ``f(a) <= 0 < f(b)`` (or the reverse) to width BISECT_TOL.

    Returns the endpoints (stop side, continue side).
    """
    fa = f(a) <= 0.0
    for _ in range(BISECT_MAX_ITER):
        if abs(b - a) <= BISECT_TOL:
            break
        mid = 0.5 * (a + b)
        if (f(mid) <= 0.0) == fa:
            a = mid
        else:
            b = mid
    return (a, b) if fa else (b, a)


def _peak(mse, grid: np.ndarray, values: np.ndarray) -> float:
    """Refine the grid maximum by golden-section search."""
    i = int(np.argmax(values))
    a = grid[max(i - 1, 0)]
    b = grid[min(i + 1, grid.size - 1)]
    g = (math.sqrt(5.0) - 1.0) / 2.0
    c, d = b - g * (b - a), a + g * (b - a)
    fc, fd = mse(c), mse(d)
    while b - a > BISECT_TOL:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - g * (b - a)
            fc = mse(c)
        else:
            a, c, fc = c, d, fd
            d = a + g * (b - a)
            fd = mse(d)
    return 0.5 * (a + b)


def _count_turns(values: np.ndarray) -> int:
    d = np.diff(values)
    tol = SLOPE_TOL * np.max(np.abs(values))
    signs = np.sign(np.where(np.abs(d) <= tol, 0.0, d))
    signs = signs[signs != 0]
    return int(np.count_nonzero(signs[1:] != signs[:-1]))


def row_for(model: SourceModel, sigma2: float, target_mse: float, k: int) -> ThresholdRow:
    """Classify one observation count and locate its thresholds on ``|ybar|``."""
    def mse(ybar: float) -> float:
        return float(posterior_mse(model, k * ybar, k, sigma2))

    y_max = 10.0 * math.sqrt(1.0 + sigma2)
    grid = np.arange(0.0, y_max + GRID_STEP / 2, GRID_STEP)
    values = posterior_mse(model, k * grid, k, sigma2)
    turns = _count_turns(values)
    rising_at_end = values[-1] > values[-2] * (1.0 + SLOPE_TOL)
    if turns > 1 or rising_at_end:
        raise StructuralError(
            f"posterior MSE for k={k} is not single-peaked on |ybar| in [0, {y_max:.3g}] "
            f"({turns} turning points); a two-threshold stopping rule does not apply")

    peak = _peak(mse, grid, values)
    mse_peak = max(mse(peak), float(values.max()))
    at_zero = float(values[0])
    # large-|ybar| limit of the profile, approached from above
    tail = mse(1e3 * y_max)
    if mse_peak <= target_mse:
        return ThresholdRow(k, Decision.ALWAYS_STOP)
    if at_zero > target_mse and tail >= target_mse:
        return ThresholdRow(k, Decision.NEVER_STOP)

    def f(ybar):
        return mse(ybar) - target_mse

    lower = upper = None
    if at_zero <= target_mse:
        lower, _ = _bisect(f, 0.0, peak)
    if tail < target_mse:
        b = max(peak, GRID_STEP)
        while f(b) > 0.0:
            b *= 2.0
        upper, _ = _bisect(f, b, peak)
    return ThresholdRow(k, Decision.TWO_SIDED, lower, upper)


def compute_thresholds(model: SourceModel, sigma2: float, target_mse: float, k_max: int) -> StoppingThresholds:
    """Precompute stopping rows for ``k = 1 .. k_max``.

    Raises
    ------
    StructuralError
        For priors whose MSE is not a single-peaked function of ``|ybar|``,
        including binary sources with ``p != 1/2`` (asymmetric in ``ybar``).
    """
    if target_mse <= 0:
        raise ConfigurationError(f"target MSE must be positive, got {target_mse}")
    if k_max < 1:
        raise ConfigurationError(f"k_max must be >= 1, got {k_max}")
    if sigma2 <= 0:
        raise ConfigurationError(f"sigma2 must be positive, got {sigma2}")
    if model.kind is SourceKind.BINARY and model.p != 0.5:
        raise StructuralError("binary MSE is not symmetric in ybar for p != 1/2; "
                              "thresholds on |ybar| do not apply")
    rows = tuple(row_for(model, sigma2, target_mse, k) for k in range(1, k_max + 1))
    return StoppingThresholds(model, sigma2, target_mse, rows)
