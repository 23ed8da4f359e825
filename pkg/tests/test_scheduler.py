import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oas.errors import CalibrationError, ConfigurationError
from oas.posterior import posterior_mse
from oas.priors import SourceModel, sample_source, stream
from oas.scheduler import (BudgetModel, NoiseBuffer, asymptotic_run, asymptotic_runs, calibrate_target_mse,
                           parallel_asymptotic_run, worst_component_batch, worst_component_run)

SG = SourceModel.sparse_gaussian(0.9)
GAUSS = SourceModel.sparse_gaussian(0.0)


def test_budget_from_snr():
    b = BudgetModel.from_snr(SG, 100, 3, 16, 10.0)
    assert b.total_slots == 533
    assert b.sigma2 == pytest.approx(16 * 0.1 / 10)


def test_infeasible_budget_names_m_and_c():
    b = BudgetModel(100, 3.0, 2, 1.0)
    assert not b.feasible
    with pytest.raises(ConfigurationError, match=r"M=2, c=3"):
        worst_component_run(SG, b, np.zeros(100), 0)


def test_initial_pass_then_argmax():
    b = BudgetModel(5, 1.0, 3, 0.5)
    truth = sample_source(SG, 5, 1)
    tr = worst_component_run(SG, b, truth, 7)
    assert list(tr.component[:5]) == [0, 1, 2, 3, 4]
    assert tr.slots_used == b.total_slots == 15
    # replay: each later slot picked the argmax (lowest index on ties) of the state before it
    s, k = np.zeros(5), np.zeros(5, dtype=int)
    for m, n, y in zip(tr.slot, tr.component, tr.y):
        if m > 5:
            e = posterior_mse(SG, s, k, b.sigma2)
            assert n == int(np.argmax(e))
        s[n] += y
        k[n] += 1
    assert np.array_equal(k, tr.final_k)


def test_argmax_choice_two_components():
    # hand-made state: the larger MSE wins
    b = BudgetModel(2, 1.0, 2, 1.0)
    noise = NoiseBuffer([stream(0)], b.sigma2)
    res = worst_component_batch(GAUSS, b, np.array([[0.0, 0.0]]), noise, record=True)
    assert list(res.trace.component[:2]) == [0, 1]
    assert res.trace.component[2] == 0  # equal MSE: lowest index


@given(st.integers(2, 30), st.integers(1, 8), st.integers(0, 10**6))
@settings(max_examples=40, deadline=None)
def test_gaussian_source_is_round_robin(N, M, seed):
    b = BudgetModel(N, 1.0, M, 1.0)
    tr = worst_component_run(GAUSS, b, sample_source(GAUSS, N, seed), seed)
    assert tr.final_k.max() - tr.final_k.min() <= 1
    assert tr.final_k.sum() == b.total_slots


def test_worst_component_deterministic():
    b = BudgetModel.from_snr(SG, 20, 2, 8, 10.0)
    truth = sample_source(SG, 20, 3)
    assert worst_component_run(SG, b, truth, 4).same_as(worst_component_run(SG, b, truth, 4))
    assert not worst_component_run(SG, b, truth, 5).same_as(worst_component_run(SG, b, truth, 4))


def test_last_measured_was_a_maximiser():
    b = BudgetModel.from_snr(SG, 30, 2, 8, 10.0)
    truth = sample_source(SG, 30, 8)
    tr = worst_component_run(SG, b, truth, 9)
    last = tr.component[-1]
    # state before the last slot
    s = tr.final_s.copy()
    k = tr.final_k.copy()
    s[last] -= tr.y[-1]
    k[last] -= 1
    e = posterior_mse(SG, s, k, b.sigma2)
    assert e[last] == e.max()


def test_asymptotic_gaussian_stops_at_four():
    truth = sample_source(GAUSS, 12, 0)
    tr = asymptotic_run(GAUSS, None, 0.2, truth, 1, sigma2=1.0)
    assert np.all(tr.final_k == 4)
    assert tr.slots_used == 48
    assert list(tr.component) == [n for n in range(12) for _ in range(4)]


def test_asymptotic_loose_target_one_look_then_worst():
    b = BudgetModel.from_snr(SG, 10, 1, 3, 10.0)
    truth = sample_source(SG, 10, 2)
    tr = asymptotic_run(SG, b, 10.0, truth, 3)
    assert list(tr.component[:10]) == list(range(10))
    assert tr.slots_used == b.total_slots
    wc = worst_component_run(SG, b, truth, 3)
    assert tr.same_as(wc)


def test_asymptotic_capped_uses_whole_budget_and_every_component():
    b = BudgetModel.from_snr(SG, 40, 3, 16, 10.0)
    for seed in range(20):
        truth = sample_source(SG, 40, seed)
        tr = asymptotic_run(SG, b, 1e-4, truth, seed)
        assert tr.slots_used == b.total_slots
        assert tr.final_k.min() >= 1


def test_asymptotic_rejects_bad_target():
    with pytest.raises(ConfigurationError):
        asymptotic_run(SG, None, 0.0, np.zeros(3), 0, sigma2=1.0)


def test_parallel_single_sensor_equals_sequential():
    b = BudgetModel.from_snr(SG, 25, 2, 8, 10.0)
    for seed in range(5):
        truth = sample_source(SG, 25, seed)
        for budget in (b, None):
            a = asymptotic_run(SG, budget, 0.01, truth, seed, sigma2=b.sigma2)
            p = parallel_asymptotic_run(SG, budget, 1, 0.01, truth, seed, sigma2=b.sigma2)
            assert a.same_as(p)


def test_parallel_gaussian_twelve_steps():
    truth = sample_source(GAUSS, 12, 0)
    tr = parallel_asymptotic_run(GAUSS, None, 4, 0.2, truth, 1, sigma2=1.0)
    assert tr.parallel_steps == 12
    assert np.all(tr.final_k == 4)


def test_parallel_all_sensors_one_step():
    truth = sample_source(SG, 6, 0)
    tr = parallel_asymptotic_run(SG, None, 6, 10.0, truth, 1, sigma2=0.1)
    assert tr.parallel_steps == 1
    assert np.all(tr.final_k == 1)


def test_parallel_termination_phase_shares_components():
    # at the end several sensors sit on the same component
    b = BudgetModel.from_snr(SG, 8, 1, 8, 10.0)
    truth = np.array([0, 0, 0, 0, 0, 0, 0, 1.3])
    tr = parallel_asymptotic_run(SG, None, 4, 0.002, truth, 4, sigma2=b.sigma2)
    assert tr.final_k[-1] > tr.final_k[:4].max()


def test_parallel_rejects_too_many_sensors():
    with pytest.raises(ConfigurationError):
        parallel_asymptotic_run(SG, None, 5, 0.1, np.zeros(4), 0, sigma2=1.0)


def test_parallel_respects_budget():
    b = BudgetModel.from_snr(SG, 30, 2, 4, 10.0)
    for seed in range(10):
        tr = parallel_asymptotic_run(SG, b, 3, 1e-4, sample_source(SG, 30, seed), seed)
        assert tr.slots_used == b.total_slots
        assert tr.final_k.min() >= 1


@pytest.mark.parametrize("M", [4, 8, 16, 32])
def test_noise_scaling_increment(M):
    # one more look changes the MSE less when slots are finer (sigma2 grows with M)
    def delta(M):
        s2 = M * 0.1 / 10.0
        k = M  # one nominal period worth of looks at the same average
        ybar = 0.5
        return abs(posterior_mse(SG, (k + 1) * ybar, k + 1, s2) - posterior_mse(SG, k * ybar, k, s2))
    if M > 4:
        assert delta(M) < delta(M // 2)


def test_calibrate_gaussian_interval():
    b = BudgetModel(10, 1.0, 4, 1.0)
    d = calibrate_target_mse(GAUSS, b, 100, 0, 0.01)
    assert 0.2 <= d < 0.25


def test_calibrate_rejects_zero_tolerance():
    b = BudgetModel(10, 1.0, 4, 1.0)
    with pytest.raises(ConfigurationError):
        calibrate_target_mse(GAUSS, b, 100, 0, 0.0)


def test_calibrate_non_bracketing():
    # one look per component is the whole budget, yet a single noisy look often
    # leaves the MSE above the prior variance
    b = BudgetModel(10, 1.0, 1, 2.0)
    with pytest.raises(CalibrationError, match="bracket"):
        calibrate_target_mse(SG, b, 100, 0, 0.001)


def test_trace_lines():
    b = BudgetModel(3, 1.0, 2, 1.0)
    tr = worst_component_run(GAUSS, b, np.zeros(3), 0)
    lines = tr.lines()
    assert lines[0] == "m,n_m,y_m,s,k,mse"
    assert len(lines) == 1 + 6
    assert lines[1].startswith("1,0,")


def test_lockstep_traces_match_single_runs():
    b = BudgetModel.from_snr(SG, 30, 2.0, 8, 10.0)
    truths = np.stack([sample_source(SG, 30, t) for t in range(6)])
    for budget in (b, None):
        batch = asymptotic_runs(SG, budget, 0.01, truths, list(range(6)), sigma2=b.sigma2)
        for t in range(6):
            assert batch[t].same_as(asymptotic_run(SG, budget, 0.01, truths[t], t, sigma2=b.sigma2))


def test_lockstep_traces_need_one_seed_per_trial():
    with pytest.raises(ConfigurationError):
        asymptotic_runs(SG, None, 0.01, np.zeros((2, 5)), [0], sigma2=1.0)
