import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oas.errors import ConfigurationError
from oas.priors import SourceModel, open_uniform, sample_source, standard_normal, stream


def test_degenerate_sparse_prior_rejected():
    with pytest.raises(ConfigurationError):
        SourceModel.sparse_gaussian(1.0)


@pytest.mark.parametrize("p", [0.0, 1.0, -0.1])
def test_binary_needs_open_p(p):
    with pytest.raises(ConfigurationError):
        SourceModel.binary(p)


def test_binary_mean_near_zero():
    x = sample_source(SourceModel.binary(0.5), 10**6, seed=11)
    assert set(np.unique(x)) == {-1.0, 1.0}
    assert abs(x.mean()) <= 0.005


def test_sparse_zero_fraction_and_power():
    p = 0.9
    x = sample_source(SourceModel.sparse_gaussian(p), 10**6, seed=12)
    assert abs(np.mean(x == 0.0) - p) <= 0.001
    # second moment 1-p; sd of x^2 is sqrt(3(1-p) - (1-p)^2)
    se = np.sqrt(3 * (1 - p) - (1 - p) ** 2) / np.sqrt(x.size)
    assert abs(np.mean(x**2) - (1 - p)) <= 4 * se


@given(st.sampled_from([("sparse-gaussian", 0.3), ("binary", 0.7)]), st.integers(1, 50),
       st.integers(0, 2**63 - 1))
@settings(max_examples=30, deadline=None)
def test_sampling_reproducible(source, n, seed):
    model = SourceModel(*source)
    assert np.array_equal(sample_source(model, n, seed), sample_source(model, n, seed))


def test_streams_are_independent_of_chunking():
    a = standard_normal(stream(5, 1, 2), 1000)
    g = stream(5, 1, 2)
    b = np.concatenate([standard_normal(g, 7), standard_normal(g, 993)])
    assert np.array_equal(a, b)


def test_stream_keys_differ():
    assert not np.array_equal(standard_normal(stream(5, 0), 10), standard_normal(stream(5, 1), 10))


def test_open_uniform_never_hits_endpoints():
    u = open_uniform(stream(1), 10**6)
    assert u.min() > 0.0 and u.max() < 1.0


def test_standard_normal_moments():
    z = standard_normal(stream(3), 10**6)
    assert abs(z.mean()) < 0.005
    assert abs(z.var() - 1.0) < 0.005
