"""Monte-Carlo estimation of the distribution of the minimizer and its entropy."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import ConditioningError, InvalidArgumentError
from .gp_core import GPPosterior, jittered_cholesky

DEFAULT_PATHS = 1000


@dataclass(frozen=True, eq=False)
class PathSet:
    """Sample paths restricted to the grid, one per row (shape ``(S, m)``)."""

    values: np.ndarray
    seed: object = None

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] < 1:
            raise InvalidArgumentError("a path set needs at least one path")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def S(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class MinimizerDistribution:
    """Probabilities of each grid point being the minimizer."""

    probabilities: np.ndarray

    @property
    def entropy(self) -> float:
        return shannon_entropy(self)


def _seed_record(rng):
    if isinstance(rng, (int, np.integer)):
        return int(rng)
    return None


def covariance_factor(post: GPPosterior) -> np.ndarray:
    """Factor ``L`` with ``L L^T`` equal to the (jittered) posterior covariance.

    A posterior covariance is positive semidefinite in exact arithmetic but
    can come out slightly indefinite after conditioning on exact values.  When
    even the jittered Cholesky factorization fails, the negative eigenvalues
    are clipped to zero and ``V sqrt(max(w, 0))`` is returned instead.
    """
    cov = post.covariance
    if not np.any(cov):
        return np.zeros_like(cov)
    try:
        return jittered_cholesky(cov, "posterior covariance")
    except ConditioningError:
        w, v = np.linalg.eigh(0.5 * (cov + cov.T))
        return v * np.sqrt(np.maximum(w, 0.0))


def sample_paths(post: GPPosterior, S: int = DEFAULT_PATHS, rng=None) -> PathSet:
    """Draw ``S`` i.i.d. paths from ``N(mean, covariance)`` on the grid."""
    if S < 1:
        raise InvalidArgumentError("S must be >= 1")
    seed = _seed_record(rng)
    gen = np.random.default_rng(rng)
    factor = covariance_factor(post)
    z = gen.standard_normal((S, post.grid.m))
    return PathSet(post.mean + z @ factor.T, seed)


def minimizer_histogram(paths) -> MinimizerDistribution:
    """Empirical frequency of the argmin over the rows of ``paths``.

    Ties inside a row go to the smallest index.
    """
    values = paths.values if isinstance(paths, PathSet) else np.asarray(paths, dtype=float)
    S, m = values.shape
    counts = np.bincount(np.argmin(values, axis=1), minlength=m)
    return MinimizerDistribution(counts / S)


def _entropy(p: np.ndarray) -> float:
    p = p[p > 0]
    return float(max(-np.sum(p * np.log(p)), 0.0))


def shannon_entropy(dist) -> float:
    """Shannon entropy in nats, with ``0 log 0 = 0``."""
    p = dist.probabilities if isinstance(dist, MinimizerDistribution) else np.asarray(dist)
    return _entropy(np.asarray(p, dtype=float))


def entropy_of_posterior(post: GPPosterior, S: int = DEFAULT_PATHS, rng=None) -> float:
    """Plug-in estimate of the entropy of the minimizer under ``post``."""
    return shannon_entropy(minimizer_histogram(sample_paths(post, S, rng)))


def max_entropy(m: int) -> float:
    return math.log(m)
