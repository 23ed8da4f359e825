"""Monte-Carlo experiment engine for MSE-vs-compression-ratio sweeps.

Trials are grouped into fixed blocks of ``BLOCK`` consecutive trial ids.  A
block is the unit of work handed to a worker, and every random draw of trial
``t`` comes from streams keyed by ``(seed, cell id, t, tag)``.  The block
layout does not depend on the worker count, and the final reduction runs over
trial ids in ascending order, so results are identical for any ``workers``.
"""
from __future__ import annotations

import logging
import math
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable

import numpy as np
import yaml

from .baselines import OrthogonalConfig, orthogonal_trial
from .errors import CalibrationError, ConfigurationError
from .posterior import reconstruct
from .priors import NOISE, TRUTH, SourceModel, sample_source, stream
from .scheduler import (BudgetModel, NoiseBuffer, asymptotic_batch, calibrate_target_mse,
                        direct_stop, parallel_asymptotic_run, worst_component_batch)
from .thresholds import compute_thresholds, default_k_max

log = logging.getLogger(__name__)

POLICIES = ("worst_component", "asymptotic", "parallel_asymptotic", "orthogonal")
OAS_POLICIES = POLICIES[:3]
BLOCK = 500


@dataclass
class ExperimentConfig:
    source: str = "sparse-gaussian"
    p: float = 0.9
    es_n0_db: float = 10.0
    N: int = 100
    compression_ratios: list[float] = field(default_factory=lambda: [1.0, 1.5, 2.0, 2.5, 3.0, 4.0])
    oversampling_factors: list[int] = field(default_factory=lambda: [4, 16])
    policies: list[str] = field(default_factory=lambda: ["worst_component", "asymptotic", "orthogonal"])
    trials: int = 10_000
    seed: int = 0
    K: int = 4
    calibration_trials: int = 1000
    calibration_tolerance: float = 0.02
    # stopping decisions of the asymptotic policies by precomputed |ybar| thresholds
    use_thresholds: bool = False
    # "per_trial": asymptotic runs are capped at exactly round(M*N/c) slots;
    # "average": uncapped, only the calibrated mean matches the budget
    asymptotic_budget: str = "per_trial"

    def __post_init__(self):
        self.compression_ratios = [float(c) for c in self.compression_ratios]
        self.oversampling_factors = [int(m) for m in self.oversampling_factors]
        self.policies = list(self.policies)
        unknown = set(self.policies) - set(POLICIES)
        if unknown:
            raise ConfigurationError(f"unknown policies {sorted(unknown)}; choose from {POLICIES}")
        if self.trials < 1:
            raise ConfigurationError(f"trials must be >= 1, got {self.trials}")
        if self.N < 1:
            raise ConfigurationError(f"N must be >= 1, got {self.N}")
        if any(c <= 0 for c in self.compression_ratios):
            raise ConfigurationError("compression ratios must be positive")
        if any(m < 1 for m in self.oversampling_factors):
            raise ConfigurationError("oversampling factors must be >= 1")
        if not 1 <= self.K <= self.N:
            raise ConfigurationError(f"sensor count K must satisfy 1 <= K <= N, got K={self.K}")
        if self.asymptotic_budget not in ("per_trial", "average"):
            raise ConfigurationError(
                f"asymptotic_budget must be 'per_trial' or 'average', got {self.asymptotic_budget!r}")
        self.model  # validates source and p

    @property
    def model(self) -> SourceModel:
        return SourceModel(self.source, self.p)

    @classmethod
    def from_file(cls, path, **overrides) -> "ExperimentConfig":
        """Load a YAML (or JSON) mapping whose keys are field names."""
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
        if not isinstance(data, dict):
            raise ConfigurationError(f"{path}: expected a mapping of config fields")
        names = {f.name for f in fields(cls)}
        bad = set(data) - names
        if bad:
            raise ConfigurationError(f"{path}: unknown config keys {sorted(bad)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Cell:
    policy: str
    c: float
    M: int | None

    @property
    def cell_id(self) -> int:
        """Stream key shared by all policies at the same (c, M)."""
        return zlib.crc32(f"c={self.c!r};M={self.M}".encode())


@dataclass
class CellResult:
    cell: Cell
    status: str
    mse: float = math.nan
    stderr: float = math.nan
    slots_per_component: float = math.nan
    trials: int = 0
    seed: int = 0
    target_mse: float | None = None

    @property
    def mse_db(self) -> float:
        return 10.0 * math.log10(self.mse) if self.status == "ok" else math.nan


@dataclass
class SweepResult:
    config: ExperimentConfig
    rows: list[CellResult]

    def get(self, policy: str, c: float, M: int | None = None) -> CellResult:
        for row in self.rows:
            if row.cell.policy == policy and row.cell.c == c and (policy == "orthogonal" or row.cell.M == M):
                return row
        raise KeyError((policy, c, M))


def cells(config: ExperimentConfig) -> list[Cell]:
    out = []
    for c in config.compression_ratios:
        if "orthogonal" in config.policies:
            out.append(Cell("orthogonal", c, None))
        for M in config.oversampling_factors:
            out.extend(Cell(p, c, M) for p in OAS_POLICIES if p in config.policies)
    return out


def budget_for(config: ExperimentConfig, cell: Cell) -> BudgetModel:
    return BudgetModel.from_snr(config.model, config.N, cell.c, cell.M, config.es_n0_db)


def feasible(config: ExperimentConfig, cell: Cell) -> bool:
    if cell.policy == "orthogonal":
        return cell.c >= 1
    return budget_for(config, cell).feasible


def calibrate_cell(config: ExperimentConfig, cell: Cell) -> float:
    """Target MSE of the asymptotic policies at ``(c, M)``."""
    return calibrate_target_mse(config.model, budget_for(config, cell), config.calibration_trials,
                                config.seed, config.calibration_tolerance, key=(cell.cell_id,))


def _truths(config, cell, ids):
    return np.stack([sample_source(config.model, config.N, stream(config.seed, cell.cell_id, t, TRUTH))
                     for t in ids])


def _noise_streams(config, cell, ids):
    return [stream(config.seed, cell.cell_id, t, NOISE) for t in ids]


def run_block(config: ExperimentConfig, cell: Cell, ids: Iterable[int],
              target_mse: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Squared errors ``(len(ids), N)`` and slots used per trial for a run of trial ids."""
    ids = list(ids)
    model = config.model
    truth = _truths(config, cell, ids)
    gens = _noise_streams(config, cell, ids)
    if cell.policy == "orthogonal":
        oc = OrthogonalConfig(config.N, cell.c, config.es_n0_db, model)
        err = orthogonal_trial(oc, truth, gens).reshape(truth.shape)
        return err, np.full(len(ids), config.N)

    budget = budget_for(config, cell)
    budget.check_feasible()
    if cell.policy == "worst_component":
        res = worst_component_batch(model, budget, truth, NoiseBuffer(gens, budget.sigma2))
        s, k, slots = res.s, res.k, res.slots
    else:
        if target_mse is None:
            target_mse = calibrate_cell(config, cell)
        if cell.policy == "asymptotic":
            if config.use_thresholds:
                table = compute_thresholds(model, budget.sigma2, target_mse,
                                           default_k_max(budget.M, budget.compression_ratio))
                rule = table.stop_rule()
            else:
                rule = direct_stop(target_mse)
            cap = budget.total_slots if config.asymptotic_budget == "per_trial" else None
            res = asymptotic_batch(model, budget.sigma2, truth, NoiseBuffer(gens, budget.sigma2), rule,
                                   cap=cap)
            s, k, slots = res.s, res.k, res.slots
        else:
            capped = budget if config.asymptotic_budget == "per_trial" else None
            traces = [parallel_asymptotic_run(model, capped, config.K, target_mse, x, g,
                                              sigma2=budget.sigma2)
                      for x, g in zip(truth, gens)]
            s = np.stack([tr.final_s for tr in traces])
            k = np.stack([tr.final_k for tr in traces])
            slots = np.array([tr.slots_used for tr in traces])
    err = (truth - reconstruct(model, s, k, budget.sigma2)) ** 2
    return err, slots


def run_trial(config: ExperimentConfig, cell: Cell, trial: int,
              target_mse: float | None = None) -> tuple[np.ndarray, int]:
    """Per-component squared errors and slot count of a single trial."""
    err, slots = run_block(config, cell, [trial], target_mse)
    return err[0], int(slots[0])


def _block_task(args):
    config, cell, start, stop, target = args
    err, slots = run_block(config, cell, range(start, stop), target)
    # per-trial sums are all the reduction needs
    return err.sum(axis=1), slots


def _calibration_task(args):
    config, cell = args
    try:
        return calibrate_cell(config, cell)
    except CalibrationError as exc:
        log.warning("calibration failed at c=%g, M=%s: %s", cell.c, cell.M, exc)
        return None


def _map(fn, tasks, workers):
    if workers <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, tasks))


def run_sweep(config: ExperimentConfig, workers: int = 1) -> SweepResult:
    """Evaluate every (policy, c, M) cell; infeasible cells are reported as skipped."""
    all_cells = cells(config)
    todo = [cell for cell in all_cells if feasible(config, cell)]

    need_target = sorted({Cell("asymptotic", c.c, c.M) for c in todo if c.policy in OAS_POLICIES[1:]},
                         key=lambda c: (c.c, c.M))
    targets = dict(zip(((c.c, c.M) for c in need_target),
                       _map(_calibration_task, [(config, c) for c in need_target], workers)))
    for (c, M), d in targets.items():
        log.info("calibrated target MSE %s at c=%g, M=%d", d, c, M)

    tasks, owners, failed = [], [], set()
    for cell in todo:
        target = targets.get((cell.c, cell.M)) if cell.policy in OAS_POLICIES[1:] else None
        if cell.policy in OAS_POLICIES[1:] and target is None:
            failed.add(cell)
            continue
        for start in range(0, config.trials, BLOCK):
            tasks.append((config, cell, start, min(start + BLOCK, config.trials), target))
            owners.append(cell)
    outputs = _map(_block_task, tasks, workers)

    per_cell: dict[Cell, list] = {}
    for cell, out in zip(owners, outputs):
        per_cell.setdefault(cell, []).append(out)

    rows = []
    for cell in all_cells:
        if cell not in per_cell:
            status = "calibration_failed" if cell in failed else "skipped"
            rows.append(CellResult(cell, status, trials=config.trials, seed=config.seed))
            continue
        sums = np.concatenate([o[0] for o in per_cell[cell]])
        slots = np.concatenate([o[1] for o in per_cell[cell]])
        per_trial = sums / config.N
        mse = math.fsum(sums) / (config.N * config.trials)
        stderr = float(np.std(per_trial, ddof=1) / math.sqrt(config.trials)) if config.trials > 1 else 0.0
        rows.append(CellResult(cell, "ok", mse, stderr, math.fsum(slots) / (config.N * config.trials),
                               config.trials, config.seed, targets.get((cell.c, cell.M))
                               if cell.policy in OAS_POLICIES[1:] else None))
    return SweepResult(config, rows)


CSV_HEADER = "policy,c,M,mse,mse_db,stderr,slots_per_component,trials,seed,status"


def _fmt(x) -> str:
    return "" if x is None or (isinstance(x, float) and math.isnan(x)) else f"{x:.12g}"


def results_csv(result: SweepResult) -> str:
    lines = [CSV_HEADER]
    for r in result.rows:
        ok = r.status == "ok"
        lines.append(",".join([
            r.cell.policy, _fmt(r.cell.c), "" if r.cell.M is None else str(r.cell.M),
            _fmt(r.mse) if ok else "", _fmt(r.mse_db) if ok else "", _fmt(r.stderr) if ok else "",
            _fmt(r.slots_per_component) if ok else "", str(r.trials), str(r.seed), r.status]))
    return "\n".join(lines) + "\n"


PLOT_SCRIPT = '''\
"""Plot MSE (dB) against compression ratio from {csv_name}."""
import csv
import sys
from collections import defaultdict

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

curves = defaultdict(list)
with open({csv_name!r}) as fh:
    for row in csv.DictReader(fh):
        if row["status"] != "ok":
            continue
        label = row["policy"] if not row["M"] else f"{{row['policy']}} M={{row['M']}}"
        curves[label].append((float(row["c"]), float(row["mse_db"])))
overlay = {overlay!r}
if overlay:
    with open(overlay) as fh:
        for row in csv.DictReader(fh):
            curves[row["label"]].append((float(row["compression_ratio"]), float(row["mse_db"])))

fig, ax = plt.subplots(figsize=(6, 4.5))
for label, pts in sorted(curves.items()):
    pts.sort()
    ax.plot([c for c, _ in pts], [m for _, m in pts], marker="o", label=label)
ax.set_xlabel("compression ratio N/K")
ax.set_ylabel("MSE [dB]")
ax.grid(True, alpha=0.3)
ax.legend(fontsize=8)
fig.tight_layout()
fig.savefig(sys.argv[1] if len(sys.argv) > 1 else {png_name!r}, dpi=150)
'''


def emit_results(result: SweepResult, out_dir, formats=("csv", "plot-script"),
                 overlay: str | None = None, stem: str = "sweep") -> list[Path]:
    """Write the CSV table and/or a matplotlib script that plots it."""
    if not result.rows:
        raise ConfigurationError("empty result table")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    csv_path = out_dir / f"{stem}.csv"
    if "csv" in formats:
        csv_path.write_text(results_csv(result))
        written.append(csv_path)
    if "plot-script" in formats:
        script = out_dir / f"plot_{stem}.py"
        script.write_text(PLOT_SCRIPT.format(csv_name=csv_path.name, png_name=f"{stem}.png",
                                             overlay=overlay))
        written.append(script)
    return written


def default_workers() -> int:
    return os.cpu_count() or 1
