import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from iago.gp_core import CandidateGrid, GPPosterior
from iago.minimizer_entropy import (
    MinimizerDistribution,
    PathSet,
    entropy_of_posterior,
    minimizer_histogram,
    sample_paths,
    shannon_entropy,
)


def posterior(mean, cov):
    m = len(mean)
    return GPPosterior(CandidateGrid(np.arange(m, dtype=float)), np.asarray(mean, float), np.asarray(cov, float))


def independent_minimizer_probs(mu, sd):
    """P(i is the argmin) for independent Gaussians, by 1-d quadrature."""
    probs = []
    for i in range(len(mu)):

        def integrand(t, i=i):
            dens = stats.norm.pdf(t, mu[i], sd[i])
            surv = np.prod([stats.norm.sf(t, mu[j], sd[j]) for j in range(len(mu)) if j != i])
            return dens * surv

        lo, hi = min(mu) - 10 * max(sd), max(mu) + 10 * max(sd)
        probs.append(integrate.quad(integrand, lo, hi, limit=200, epsabs=1e-12)[0])
    return np.array(probs)


def test_zero_covariance_paths_equal_mean():
    post = posterior([0.3, -1.0, 2.0], np.zeros((3, 3)))
    paths = sample_paths(post, 17, rng=0)
    assert np.all(paths.values == post.mean)


def test_sample_moments_large_s():
    cov = np.array([[1.0, 0.5, 0.2], [0.5, 2.0, -0.3], [0.2, -0.3, 0.5]])
    post = posterior([0.1, -0.4, 1.0], cov)
    v = sample_paths(post, 200_000, rng=1).values
    assert np.max(np.abs(v.mean(axis=0) - post.mean)) <= 0.01 * math.sqrt(2.0)
    assert np.max(np.abs(np.cov(v, rowvar=False) - cov)) <= 0.02


def test_sample_paths_deterministic():
    post = posterior([0.0, 1.0], [[1.0, 0.3], [0.3, 1.0]])
    a, b = sample_paths(post, 50, rng=9), sample_paths(post, 50, rng=9)
    np.testing.assert_array_equal(a.values, b.values)
    assert a.seed == 9


def test_sample_paths_rejects_zero_count():
    with pytest.raises(ValueError):
        sample_paths(posterior([0.0, 1.0], np.eye(2)), 0, rng=0)


def test_histogram_direct_count():
    dist = minimizer_histogram(PathSet([[1, 2], [3, 0], [5, 6]]))
    np.testing.assert_allclose(dist.probabilities, [2 / 3, 1 / 3])


def test_histogram_point_mass():
    row = np.arange(10.0)
    row[4] = -5
    dist = minimizer_histogram(np.tile(row, (7, 1)))
    assert dist.probabilities[4] == 1.0 and dist.probabilities.sum() == 1.0


def test_histogram_tie_goes_to_smallest_index():
    row = np.array([[3.0, 3.0, 1.0, 2.0, 2.0, 1.0]])
    assert minimizer_histogram(row).probabilities[2] == 1.0


def test_entropy_examples():
    assert shannon_entropy(MinimizerDistribution(np.full(51, 1 / 51))) == pytest.approx(
        math.log(51), abs=1e-12
    )
    assert math.log(51) == pytest.approx(3.9318, abs=1e-4)
    assert shannon_entropy(np.eye(5)[2]) == 0.0
    p = np.zeros(6)
    p[:2] = 0.5
    assert shannon_entropy(p) == pytest.approx(0.6931, abs=1e-4)


def test_entropy_of_degenerate_posterior_is_zero():
    post = posterior([0.2, 0.1, 0.5], np.zeros((3, 3)))
    assert entropy_of_posterior(post, 100, rng=0) == 0.0


def test_entropy_of_exchangeable_posterior():
    cov = 0.7 * np.eye(5) + 0.3
    post = posterior(np.full(5, 0.4), cov)
    assert entropy_of_posterior(post, 100_000, rng=2) == pytest.approx(math.log(5), abs=0.05)


def test_entropy_of_posterior_deterministic():
    post = posterior([0.0, 0.1, 0.2], np.eye(3))
    assert entropy_of_posterior(post, 300, rng=4) == entropy_of_posterior(post, 300, rng=4)


@pytest.mark.parametrize(
    "mu,sd",
    [
        ([0.0, 0.3], [1.0, 0.5]),
        ([0.0, 0.2, -0.1], [0.4, 1.0, 0.7]),
        ([1.0, 0.0, 0.5, 0.2], [0.3, 0.3, 1.2, 0.6]),
    ],
)
def test_minimizer_probabilities_match_independence_oracle(mu, sd):
    post = posterior(mu, np.diag(np.square(sd)))
    p = minimizer_histogram(sample_paths(post, 200_000, rng=3)).probabilities
    oracle = independent_minimizer_probs(mu, sd)
    assert oracle.sum() == pytest.approx(1.0, abs=1e-6)
    assert np.max(np.abs(p - oracle)) <= 0.01


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_entropy_bounds_and_normalisation(seed):
    rng = np.random.default_rng(seed)
    m = int(rng.integers(2, 12))
    a = rng.normal(size=(m, m))
    post = posterior(rng.normal(size=m), a @ a.T * rng.uniform(0, 2))
    paths = sample_paths(post, int(rng.integers(1, 400)), rng=seed)
    dist = minimizer_histogram(paths)
    assert abs(dist.probabilities.sum() - 1.0) <= 1e-12
    h = shannon_entropy(dist)
    assert 0.0 <= h <= math.log(m) + 1e-12


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_permutation_permutes_histogram(seed):
    rng = np.random.default_rng(seed)
    values = rng.normal(size=(200, 8))
    perm = rng.permutation(8)
    p = minimizer_histogram(values).probabilities
    q = minimizer_histogram(values[:, perm]).probabilities
    np.testing.assert_array_equal(q, p[perm])
    assert shannon_entropy(q) == pytest.approx(shannon_entropy(p), abs=1e-12)
