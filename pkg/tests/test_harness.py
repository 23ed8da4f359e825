import csv
import io
import math

import numpy as np
import pytest

from oas import harness
from oas.errors import ConfigurationError
from oas.harness import Cell, ExperimentConfig, run_sweep, run_trial


def small(**kw):
    base = dict(N=20, compression_ratios=[3.0], oversampling_factors=[2, 8], trials=40,
                calibration_trials=100, policies=list(harness.POLICIES))
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.fixture(scope="module")
def sweep():
    return run_sweep(small())


def test_sweep_is_deterministic(sweep):
    assert harness.results_csv(run_sweep(small())) == harness.results_csv(sweep)


def test_worker_count_does_not_change_output(sweep):
    assert harness.results_csv(run_sweep(small(), workers=2)) == harness.results_csv(sweep)


def test_infeasible_cells_are_skipped(sweep):
    # M=2 < c=3 leaves fewer slots than components
    row = sweep.get("worst_component", 3.0, 2)
    assert row.status == "skipped"
    line = [r for r in csv.DictReader(io.StringIO(harness.results_csv(sweep)))
            if r["policy"] == "worst_component" and r["M"] == "2"][0]
    assert line["mse"] == "" and line["mse_db"] == "" and line["status"] == "skipped"


def test_feasible_cells_report_budget(sweep):
    for policy in ("worst_component", "asymptotic", "parallel_asymptotic"):
        row = sweep.get(policy, 3.0, 8)
        assert row.status == "ok"
        assert row.slots_per_component <= 8 / 3.0 + 0.5 / 20 + 1e-12
    orth = sweep.get("orthogonal", 3.0)
    assert orth.status == "ok" and orth.slots_per_component == 1.0


def test_csv_header_and_row_count(sweep):
    text = harness.results_csv(sweep)
    lines = text.splitlines()
    assert lines[0] == harness.CSV_HEADER
    assert len(lines) == 1 + len(sweep.rows)


def test_single_row_table():
    res = run_sweep(small(policies=["orthogonal"], oversampling_factors=[4]))
    assert len(harness.results_csv(res).splitlines()) == 2


def test_run_trial_matches_block():
    cfg = small()
    cell = Cell("worst_component", 3.0, 8)
    err, slots = harness.run_block(cfg, cell, range(5))
    e3, s3 = run_trial(cfg, cell, 3)
    np.testing.assert_array_equal(err[3], e3)
    assert slots[3] == s3 == harness.budget_for(cfg, cell).total_slots


def test_degenerate_prior_trial():
    cfg = small(p=0.0, compression_ratios=[1.0], oversampling_factors=[1])
    err, slots = run_trial(cfg, Cell("asymptotic", 1.0, 1), 0, target_mse=0.05)
    assert err.shape == (20,) and slots == 20


def test_config_file_round_trip(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("N: 30\ncompression_ratios: [2, 3]\ntrials: 7\n")
    cfg = ExperimentConfig.from_file(path, seed=5)
    assert (cfg.N, cfg.compression_ratios, cfg.trials, cfg.seed) == (30, [2.0, 3.0], 7, 5)


def test_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "cfg.yaml"
    path.write_text("N: 30\nbogus: 1\n")
    with pytest.raises(ConfigurationError, match="bogus"):
        ExperimentConfig.from_file(path)


@pytest.mark.parametrize("kw", [dict(policies=["nope"]), dict(trials=0), dict(K=0),
                                dict(asymptotic_budget="x"), dict(p=1.5)])
def test_config_validation(kw):
    with pytest.raises((ConfigurationError, ValueError)):
        small(**kw)


def test_emit_results(tmp_path, sweep):
    paths = harness.emit_results(sweep, tmp_path, overlay="ref.csv", stem="s")
    assert [p.name for p in paths] == ["s.csv", "plot_s.py"]
    assert paths[0].read_text() == harness.results_csv(sweep)
    compile(paths[1].read_text(), "plot_s.py", "exec")
    assert "'ref.csv'" in paths[1].read_text()


def test_cell_ids_shared_across_policies():
    assert Cell("asymptotic", 3.0, 16).cell_id == Cell("worst_component", 3.0, 16).cell_id
    assert Cell("asymptotic", 3.0, 16).cell_id != Cell("asymptotic", 3.0, 4).cell_id


def test_mse_db_consistent(sweep):
    for row in sweep.rows:
        if row.status == "ok":
            assert math.isclose(row.mse_db, 10 * math.log10(row.mse))
