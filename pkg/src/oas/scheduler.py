"""Adaptive measurement scheduling with unit-row-weight measurements.

Each slot measures a single component ``n`` and yields ``y = x[n] + z`` with
``z ~ N(0, sigma2)``.  Per component only the running sum ``s`` and count ``k``
are kept.  The batch engines advance many independent trials in lockstep
(trial ``t`` owns row ``t`` and its own noise stream), which is how the
harness runs ensembles; the single-trial functions are the batch engines with
one row plus a per-slot trace.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import CalibrationError, ConfigurationError
from .posterior import mse_kernel, posterior_mse
from .priors import (CALIBRATION_NOISE, CALIBRATION_TRUTH, NOISE, SourceModel, sample_source,
                     standard_normal, stream)


@dataclass(frozen=True)
class BudgetModel:
    """Slot budget of one sensing period.

    ``total_slots = round(M * N / c)`` sub-slots of noise variance ``sigma2``
    each.  A budget is feasible when every component can be measured once.
    """

    N: int
    compression_ratio: float
    M: int
    sigma2: float

    def __post_init__(self):
        if self.N < 1 or self.M < 1:
            raise ConfigurationError(f"need N >= 1 and M >= 1, got N={self.N}, M={self.M}")
        if self.compression_ratio <= 0:
            raise ConfigurationError(f"compression ratio must be positive, got {self.compression_ratio}")
        if self.sigma2 <= 0:
            raise ConfigurationError(f"per-slot noise variance must be positive, got {self.sigma2}")

    @classmethod
    def from_snr(cls, model: SourceModel, N: int, compression_ratio: float, M: int,
                 es_n0_db: float) -> "BudgetModel":
        """Per-slot noise ``sigma2 = M * power / (Es/N0)`` with ``Es = power * T_m``."""
        snr = 10.0 ** (es_n0_db / 10.0)
        return cls(N, compression_ratio, M, M * model.power / snr)

    @property
    def total_slots(self) -> int:
        return int(math.floor(self.M * self.N / self.compression_ratio + 0.5))

    @property
    def feasible(self) -> bool:
        return self.total_slots >= self.N

    def check_feasible(self):
        if not self.feasible:
            raise ConfigurationError(
                f"infeasible budget: M={self.M}, c={self.compression_ratio} gives "
                f"{self.total_slots} slots for N={self.N} components (need M >= c)")


@dataclass
class ComponentState:
    index: int
    s: float = 0.0
    k: int = 0
    current_mse: float = float("nan")


@dataclass
class ScheduleTrace:
    """Per-slot record of one trial plus the final sufficient statistics."""

    slot: np.ndarray        # m, 1-based
    component: np.ndarray   # n_m, 0-based
    y: np.ndarray
    s: np.ndarray           # running sum of the measured component after the slot
    k: np.ndarray
    mse: np.ndarray
    final_s: np.ndarray
    final_k: np.ndarray
    final_mse: np.ndarray
    parallel_steps: int | None = None

    @property
    def slots_used(self) -> int:
        return int(self.slot.size)

    def components(self) -> list[ComponentState]:
        return [ComponentState(n, float(s), int(k), float(m))
                for n, (s, k, m) in enumerate(zip(self.final_s, self.final_k, self.final_mse))]

    def lines(self) -> list[str]:
        """Text dump, one ``m,n_m,y_m,s,k,mse`` record per slot."""
        out = ["m,n_m,y_m,s,k,mse"]
        for m, n, y, s, k, e in zip(self.slot, self.component, self.y, self.s, self.k, self.mse):
            out.append(f"{m},{n},{y:.12g},{s:.12g},{k},{e:.12g}")
        return out

    def same_as(self, other: "ScheduleTrace") -> bool:
        """Bitwise equality of all per-slot records and final states."""
        names = ("slot", "component", "y", "s", "k", "mse", "final_s", "final_k", "final_mse")
        return all(np.array_equal(getattr(self, a), getattr(other, a)) for a in names)


class NoiseBuffer:
    """Lockstep noise for a set of trials, drawn in chunks from per-trial streams.

    Row ``t`` at slot ``m`` always receives the ``m``-th draw of generator ``t``,
    whatever the chunk size or the set of rows still active.
    """

    def __init__(self, generators: Sequence[np.random.Generator], sigma2: float, chunk: int = 256):
        self.generators = list(generators)
        self.sigma = math.sqrt(sigma2)
        self.chunk = chunk
        self.rows = np.arange(len(self.generators))
        self._buf = np.empty((len(self.generators), 0))
        self._start = 0

    def take(self, m: int) -> np.ndarray:
        """Noise of slot ``m`` for the currently kept rows (``m`` increases by one per call)."""
        j = m - self._start
        if j >= self._buf.shape[1]:
            self._start = m
            self._buf = np.stack([standard_normal(self.generators[r], self.chunk) for r in self.rows])
            self._buf *= self.sigma
            j = 0
        return self._buf[:, j]

    def keep(self, mask: np.ndarray):
        self.rows = self.rows[mask]
        self._buf = self._buf[mask]


class _Recorder:
    def __init__(self):
        self.rows = []

    def add(self, m, n, y, s, k, e):
        self.rows.append((m, n, y, s, k, e))

    def trace(self, S, K, E, steps=None) -> ScheduleTrace:
        cols = list(zip(*self.rows)) if self.rows else [[]] * 6
        return ScheduleTrace(
            slot=np.asarray(cols[0], dtype=np.int64), component=np.asarray(cols[1], dtype=np.int64),
            y=np.asarray(cols[2], dtype=float), s=np.asarray(cols[3], dtype=float),
            k=np.asarray(cols[4], dtype=np.int64), mse=np.asarray(cols[5], dtype=float),
            final_s=S.copy(), final_k=K.copy(), final_mse=E.copy(), parallel_steps=steps)


class _BatchRecorder:
    """Per-slot records of every trial in a lockstep batch."""

    def __init__(self, T: int):
        self.T = T
        self.parts = []

    def add(self, m, rows, n, y, s, k, e):
        self.parts.append((np.full(len(rows), m, dtype=np.int64), rows, n, y, s, k, e))

    def traces(self, S, K, E) -> list[ScheduleTrace]:
        slot, trial, n, y, s, k, e = (np.concatenate(c) for c in zip(*self.parts))
        order = np.argsort(trial, kind="stable")
        cuts = np.cumsum(np.bincount(trial, minlength=self.T))[:-1]
        cols = [np.split(a[order], cuts) for a in (slot, n, y, s, k, e)]
        return [ScheduleTrace(slot=cols[0][t], component=cols[1][t].astype(np.int64), y=cols[2][t],
                              s=cols[3][t], k=cols[4][t].astype(np.int64), mse=cols[5][t],
                              final_s=S[t].copy(), final_k=K[t].copy(), final_mse=E[t].copy())
                for t in range(self.T)]


@dataclass
class BatchResult:
    s: np.ndarray       # (T, N)
    k: np.ndarray       # (T, N)
    mse: np.ndarray     # (T, N)
    slots: np.ndarray   # (T,)
    traces: list[ScheduleTrace] | None = None
    aborted: bool = False

    @property
    def trace(self) -> ScheduleTrace | None:
        return self.traces[0] if self.traces else None


StopRule = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


def direct_stop(target_mse: float) -> StopRule:
    return lambda s, k, mse: mse <= target_mse


def _initial_pass(model, truth, noise, sigma2, rec):
    T, N = truth.shape
    S = np.empty((T, N))
    for m in range(N):
        S[:, m] = truth[:, m] + noise.take(m)
    K = np.ones((T, N), dtype=np.int64)
    E = posterior_mse(model, S, K, sigma2)
    if rec is not None:
        rows = np.arange(T)
        for m in range(N):
            rec.add(m + 1, rows, np.full(T, m), S[:, m].copy(), S[:, m].copy(), np.ones(T, dtype=np.int64),
                    E[:, m].copy())
    return S, K, E


def worst_component_batch(model: SourceModel, budget: BudgetModel, truth: np.ndarray,
                          noise: NoiseBuffer, record: bool = False) -> BatchResult:
    """Initial pass over all components, then always measure the argmax-MSE component.

    Ties go to the lowest index.
    """
    budget.check_feasible()
    truth = np.atleast_2d(truth)
    T, N = truth.shape
    rec = _BatchRecorder(T) if record else None
    S, K, E = _initial_pass(model, truth, noise, budget.sigma2, rec)
    rows = np.arange(T)
    mse_of = mse_kernel(model, budget.sigma2)
    for m in range(N, budget.total_slots):
        n = np.argmax(E, axis=1)
        y = truth[rows, n] + noise.take(m)
        s = S[rows, n] + y
        k = K[rows, n] + 1
        e = mse_of(s, k)
        S[rows, n] = s
        K[rows, n] = k
        E[rows, n] = e
        if rec is not None:
            rec.add(m + 1, rows, n, y, s, k, e)
    slots = np.full(T, budget.total_slots)
    return BatchResult(S, K, E, slots, rec.traces(S, K, E) if rec else None)


def asymptotic_batch(model: SourceModel, sigma2: float, truth: np.ndarray, noise: NoiseBuffer,
                     stop: StopRule, cap: int | None = None, record: bool = False,
                     abort_total: int | None = None) -> BatchResult:
    """Measure components in index order, each until ``stop`` fires.

    With a slot ``cap`` the run always uses exactly ``cap`` slots: a component is
    released early when the remaining slots are only enough to give every
    not-yet-started component one look, and slots left after all components
    stopped go to the argmax-MSE component.  Without a cap each trial ends when
    its last component stops.  ``abort_total`` ends an uncapped batch as soon as
    the slots spent by all trials together exceed it (``aborted`` is then set).
    """
    truth = np.atleast_2d(truth)
    T, N = truth.shape
    if cap is not None and cap < N:
        raise ConfigurationError(f"slot cap {cap} is below the component count {N}")
    rec = _BatchRecorder(T) if record else None
    S = np.zeros((T, N))
    K = np.zeros((T, N), dtype=np.int64)
    E = np.full((T, N), model.prior_variance)
    slots = np.zeros(T, dtype=np.int64)

    live = np.arange(T)          # original row ids of trials still running
    ptr = np.zeros(T, dtype=np.int64)
    mse_of = mse_kernel(model, sigma2)
    total = 0
    m = 0
    while live.size:
        if cap is not None and m >= cap:
            break
        n = ptr[live]
        sequential = n < N
        all_seq = sequential.all()
        if not all_seq:
            n = n.copy()
            n[~sequential] = np.argmax(E[live[~sequential]], axis=1)
        y = truth[live, n] + noise.take(m)
        s = S[live, n] + y
        k = K[live, n] + 1
        e = mse_of(s, k)
        S[live, n] = s
        K[live, n] = k
        E[live, n] = e
        if rec is not None:
            rec.add(m + 1, live, n, y, s, k, e)
        m += 1
        total += live.size

        if all_seq:
            r, c = live, n
            done = stop(s, k, e)
        elif sequential.any():
            idx = np.flatnonzero(sequential)
            r, c = live[idx], n[idx]
            done = stop(s[idx], k[idx], e[idx])
        else:
            done = None
        if done is not None:
            if cap is not None:
                done |= (cap - m) <= (N - 1 - c)
            ptr[r[done]] += 1
        if cap is None:
            alive = ptr[live] < N
            if not alive.all():
                slots[live[~alive]] = m
                live = live[alive]
                noise.keep(alive)
            if abort_total is not None and total > abort_total:
                slots[live] = m
                return BatchResult(S, K, E, slots, aborted=True)
    slots[live] = m
    return BatchResult(S, K, E, slots, rec.traces(S, K, E) if rec else None)


def _noise_for(seed, sigma2) -> NoiseBuffer:
    rng = seed if isinstance(seed, np.random.Generator) else stream(seed, NOISE)
    return NoiseBuffer([rng], sigma2)


def worst_component_run(model: SourceModel, budget: BudgetModel, truth, seed) -> ScheduleTrace:
    """Single-trial worst-component adaptation.

    ``seed`` is an integer or a generator supplying the trial's noise stream.
    """
    truth = np.asarray(truth, dtype=float)
    return worst_component_batch(model, budget, truth[None, :], _noise_for(seed, budget.sigma2),
                                 record=True).trace


def asymptotic_run(model: SourceModel, budget: BudgetModel | None, target_mse: float, truth, seed,
                   thresholds=None, sigma2: float | None = None) -> ScheduleTrace:
    """Single-trial asymptotic adaptation towards ``target_mse``.

    ``budget=None`` runs every component to the target without a slot cap; the
    noise variance is then taken from ``sigma2``.  Passing a
    :class:`~oas.thresholds.StoppingThresholds` table makes the stopping decisions
    by observation-domain comparisons instead of evaluating the MSE.
    """
    truth = np.asarray(truth, dtype=float)
    return asymptotic_runs(model, budget, target_mse, truth[None, :], [seed], thresholds, sigma2)[0]


def asymptotic_runs(model: SourceModel, budget: BudgetModel | None, target_mse: float, truths, seeds,
                    thresholds=None, sigma2: float | None = None) -> list[ScheduleTrace]:
    """:func:`asymptotic_run` for many trials at once, executed in lockstep.

    Trace ``t`` is identical to ``asymptotic_run(..., truths[t], seeds[t], ...)``.
    """
    if target_mse <= 0:
        raise ConfigurationError(f"target MSE must be positive, got {target_mse}")
    if budget is not None:
        budget.check_feasible()
        sigma2 = budget.sigma2
    elif sigma2 is None:
        raise ConfigurationError("uncapped run needs sigma2")
    truths = np.atleast_2d(np.asarray(truths, dtype=float))
    if len(seeds) != len(truths):
        raise ConfigurationError(f"{len(truths)} truth vectors but {len(seeds)} seeds")
    gens = [s if isinstance(s, np.random.Generator) else stream(s, NOISE) for s in seeds]
    rule = thresholds.stop_rule() if thresholds is not None else direct_stop(target_mse)
    return asymptotic_batch(model, sigma2, truths, NoiseBuffer(gens, sigma2), rule,
                            cap=None if budget is None else budget.total_slots, record=True).traces


def parallel_asymptotic_run(model: SourceModel, budget: BudgetModel | None, K: int, target_mse: float,
                            truth, seed, sigma2: float | None = None) -> ScheduleTrace:
    """Asymptotic adaptation with ``K`` sensors advancing in lockstep.

    Within one parallel step the sensors observe in sensor order; a component
    measured by several sensors collects every observation in its sum.  At the
    end of a step, components at or below the target release their sensors.
    A free sensor takes the lowest-index component never measured, or, when
    none is left, joins the component with the largest current MSE.  The
    budget counts observations; the last step may use only some sensors, and
    sensors are released early whenever the remaining budget would otherwise
    not cover one look at every unstarted component.
    """
    truth = np.asarray(truth, dtype=float)
    N = truth.size
    if not 1 <= K <= N:
        raise ConfigurationError(f"sensor count must satisfy 1 <= K <= N={N}, got K={K}")
    if target_mse <= 0:
        raise ConfigurationError(f"target MSE must be positive, got {target_mse}")
    if budget is not None:
        budget.check_feasible()
        sigma2 = budget.sigma2
    elif sigma2 is None:
        raise ConfigurationError("uncapped run needs sigma2")
    cap = None if budget is None else budget.total_slots
    noise = _noise_for(seed, sigma2)
    rec = _Recorder()
    S = np.zeros(N)
    Kc = np.zeros(N, dtype=np.int64)
    E = np.full(N, model.prior_variance)
    done = np.zeros(N, dtype=bool)
    assigned = [-1] * K
    next_new = 0
    m = 0
    steps = 0
    while True:
        for j in range(K):
            if assigned[j] < 0:
                if next_new < N:
                    assigned[j] = next_new
                    next_new += 1
                elif cap is not None or not done.all():
                    assigned[j] = int(np.argmax(E))
        if cap is None and done.all() or cap is not None and m >= cap:
            break
        steps += 1
        touched = []
        for j in range(K):
            n = assigned[j]
            if n < 0 or cap is not None and m >= cap:
                continue
            y = truth[n] + noise.take(m)[0]
            m += 1
            S[n] += y
            Kc[n] += 1
            E[n:n + 1] = posterior_mse(model, S[n:n + 1], Kc[n:n + 1], sigma2)
            rec.add(m, n, y, S[n], Kc[n], E[n])
            touched.append(n)
        for n in dict.fromkeys(touched):
            if E[n] <= target_mse:
                done[n] = True
                assigned = [-1 if a == n else a for a in assigned]
        if cap is not None and cap - m - K < N - next_new:
            # keep enough budget for one look at every unstarted component
            assigned = [-1] * K
    return rec.trace(S, Kc, E, steps)


CALIBRATION_BLOCK = 500


def _mean_slots(model, sigma2, target_mse, truths, generators, abort_total):
    """Mean slots to reach ``target_mse`` on every component, or None once above ``abort_total``."""
    total = 0
    for a in range(0, len(truths), CALIBRATION_BLOCK):
        noise = NoiseBuffer([g() for g in generators[a:a + CALIBRATION_BLOCK]], sigma2)
        res = asymptotic_batch(model, sigma2, truths[a:a + CALIBRATION_BLOCK], noise,
                               direct_stop(target_mse), abort_total=abort_total - total)
        if res.aborted:
            return None
        total += int(res.slots.sum())
        if total > abort_total:
            return None
    return total / len(truths)


def calibrate_target_mse(model: SourceModel, budget: BudgetModel, trials: int, seed: int,
                         tolerance: float, key: tuple[int, ...] = (), max_iter: int = 100) -> float:
    """Target MSE whose uncapped asymptotic runs use ``budget.total_slots`` slots on average.

    Bisection on ``log(target)`` over ``[1e-6, prior variance]`` using the same
    ``trials`` truth/noise realisations for every evaluation.  Streams are keyed
    ``(seed, *key, trial, CALIBRATION_TRUTH | CALIBRATION_NOISE)``.

    Raises
    ------
    CalibrationError
        If the interval does not bracket the budget or bisection does not reach
        ``tolerance`` (relative) within ``max_iter`` steps.
    """
    budget.check_feasible()
    if trials < 100:
        raise ConfigurationError(f"calibration needs at least 100 trials, got {trials}")
    if not tolerance > 0:
        raise ConfigurationError(f"calibration tolerance must be positive, got {tolerance}")
    goal = float(budget.total_slots)
    truths = np.stack([sample_source(model, budget.N, stream(seed, *key, t, CALIBRATION_TRUTH))
                       for t in range(trials)])
    generators = [lambda t=t: stream(seed, *key, t, CALIBRATION_NOISE) for t in range(trials)]
    abort_total = int(math.ceil(goal * (1.0 + tolerance) * trials))

    def evaluate(log_d):
        return _mean_slots(model, budget.sigma2, math.exp(log_d), truths, generators, abort_total)

    lo, hi = math.log(1e-6), math.log(model.prior_variance)
    at_hi = evaluate(hi)
    if at_hi is not None and at_hi > goal * (1.0 + tolerance):
        at_hi = None
    if at_hi is None:
        raise CalibrationError(
            f"target interval [1e-06, {model.prior_variance:.6g}] does not bracket {goal:.0f} slots: "
            f"even the prior variance needs more slots on average")
    if abs(at_hi - goal) <= tolerance * goal:
        return math.exp(hi)
    at_lo = evaluate(lo)
    if at_lo is not None and at_lo < goal:
        raise CalibrationError(
            f"target interval [1e-06, {model.prior_variance:.6g}] does not bracket {goal:.0f} slots: "
            f"mean slots at 1e-06 is only {at_lo:.6g}")
    history = []
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        got = evaluate(mid)
        history.append((math.exp(mid), got))
        if got is not None and abs(got - goal) <= tolerance * goal:
            return math.exp(mid)
        if got is None or got > goal:
            lo = mid
        else:
            hi = mid
    raise CalibrationError(
        f"no target within tolerance {tolerance} of {goal:.0f} slots after {max_iter} bisection steps; "
        f"last (target, mean slots): {history[-3:]}")
