import numpy as np
import pytest

from oas.baselines import OrthogonalConfig, orthogonal_mse_quadrature, orthogonal_trial
from oas.errors import ConfigurationError
from oas.priors import SourceModel, sample_source, stream


def test_noise_variance():
    cfg = OrthogonalConfig(100, 3, 10.0, SourceModel.sparse_gaussian(0.9))
    assert cfg.sigma2 == pytest.approx(0.03)


def test_rejects_c_below_one():
    with pytest.raises(ConfigurationError):
        OrthogonalConfig(10, 0.5, 10.0, SourceModel.sparse_gaussian(0.9))


def test_gaussian_linear_mmse():
    m = SourceModel.sparse_gaussian(0.0)
    cfg = OrthogonalConfig(10**5, 1, 10.0, m)
    truth = sample_source(m, 10**5, 1)
    err = orthogonal_trial(cfg, truth, 2)
    s2 = cfg.sigma2
    se = err.std(ddof=1) / np.sqrt(err.size)
    assert abs(err.mean() - s2 / (1 + s2)) <= 2 * se


def test_matches_quadrature_of_posterior_mse():
    m = SourceModel.sparse_gaussian(0.9)
    cfg = OrthogonalConfig(100, 3, 10.0, m)
    trials = 10**4
    truth = np.stack([sample_source(m, 100, stream(3, t, 0)) for t in range(trials)])
    err = orthogonal_trial(cfg, truth, [stream(3, t, 1) for t in range(trials)])
    per_trial = err.mean(axis=1)
    se = per_trial.std(ddof=1) / np.sqrt(trials)
    assert abs(per_trial.mean() - orthogonal_mse_quadrature(cfg)) <= 2 * se


def test_quadrature_gaussian_closed_form():
    cfg = OrthogonalConfig(1, 2, 3.0, SourceModel.sparse_gaussian(0.0))
    s2 = cfg.sigma2
    assert orthogonal_mse_quadrature(cfg) == pytest.approx(s2 / (1 + s2), rel=1e-12)


def test_binary_source():
    m = SourceModel.binary(0.5)
    cfg = OrthogonalConfig(10**5, 2, 3.0, m)
    err = orthogonal_trial(cfg, sample_source(m, 10**5, 4), 5)
    se = err.std(ddof=1) / np.sqrt(err.size)
    assert abs(err.mean() - orthogonal_mse_quadrature(cfg)) <= 3 * se
