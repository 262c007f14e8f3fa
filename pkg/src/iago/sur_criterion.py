"""Entropy-based sampling criteria with a virtual batch size.

For a candidate ``x`` the criterion is the expected entropy of the minimizer
after ``K`` hypothetical noisy evaluations at ``x``.  Averaging ``K`` such
evaluations gives a single observation with noise variance ``sigma^2 / K``
whose predictive law is ``N(mean(x), var(x) + sigma^2 / K)``.  The outer
expectation is computed by Gauss-Hermite quadrature and the inner entropy by
re-conditioning one shared set of posterior sample paths (common random
numbers across candidates and quadrature nodes).

``K = 1`` gives the classic one-step criterion; ``K = math.inf`` means a
noise-free hypothetical observation.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np

from .exceptions import InvalidArgumentError
from .gp_core import CandidateGrid, GPPosterior, NoiseModel
from .minimizer_entropy import DEFAULT_PATHS, PathSet, minimizer_histogram, sample_paths, shannon_entropy

DEFAULT_ORDER = 15
INF = math.inf


def check_batch_size(K):
    """Validate a virtual batch size and normalise it to ``int`` or ``math.inf``.

    Strings ``"inf"``, ``"+inf"`` and ``"∞"`` are accepted for infinity.
    """
    if isinstance(K, str):
        if K.strip().lower() in ("inf", "+inf", "infinity", "∞", "+∞"):
            return INF
        K = int(K)
    if isinstance(K, float) and math.isinf(K) and K > 0:
        return INF
    if float(K).is_integer() and K >= 1:
        return int(K)
    raise InvalidArgumentError(f"virtual batch size must be a positive integer or inf, got {K!r}")


def format_batch_size(K) -> str:
    return "inf" if math.isinf(K) else str(int(K))


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    """Gauss-Hermite rule for expectations under ``N(0, 1)``."""

    nodes: np.ndarray
    weights: np.ndarray

    @property
    def order(self) -> int:
        return self.nodes.size

    def expect(self, g) -> float:
        """Approximate ``E[g(Z)]`` for ``Z ~ N(0, 1)``.

        Mirrored nodes are added pairwise first, so odd integrands sum to
        exactly zero.
        """
        vals = np.asarray(g(self.nodes), dtype=float)
        half = self.order // 2
        total = np.dot(self.weights[:half], vals[:half] + vals[::-1][:half])
        if self.order % 2:
            total += self.weights[half] * vals[half]
        return float(total)


def gauss_hermite(order: int = DEFAULT_ORDER) -> QuadratureRule:
    """Probabilists' Gauss-Hermite rule with weights normalised to sum to one.

    The ``order``-point rule integrates polynomials of degree up to
    ``2 * order - 1`` exactly against the standard normal density.
    """
    if not 1 <= order <= 64:
        raise InvalidArgumentError(f"quadrature order must be in [1, 64], got {order}")
    x, w = np.polynomial.hermite_e.hermegauss(order)
    # enforce exact symmetry about 0
    x = 0.5 * (x - x[::-1])
    w = 0.5 * (w + w[::-1])
    w = w / w.sum()
    x.flags.writeable = False
    w.flags.writeable = False
    return QuadratureRule(x, w)


@dataclass(frozen=True, eq=False)
class CriterionProfile:
    """Criterion estimates (nats) at every grid point."""

    values: np.ndarray
    K: float
    S: int
    seed: object = None
    base_entropy: float = float("nan")

    def argmin(self) -> int:
        return select_next(self)


def fantasy_observation_distribution(post: GPPosterior, grid_index: int, K, noise: NoiseModel):
    """Mean and variance of the average of ``K`` hypothetical evaluations at a grid point."""
    K = check_batch_size(K)
    var = float(post.variance[grid_index])
    return float(post.mean[grid_index]), var + noise.effective_variance(K)


@dataclass(frozen=True, eq=False)
class _BaseDraw:
    paths: PathSet
    entropy: float
    noise_key: int


def _base_draw(post: GPPosterior, S: int, rng, paths: PathSet | None = None) -> _BaseDraw:
    gen = np.random.default_rng(rng)
    if paths is None:
        paths = sample_paths(post, S, gen)
    noise_key = int(gen.integers(2**63))
    return _BaseDraw(paths, shannon_entropy(minimizer_histogram(paths)), noise_key)


def _fantasy_noise(noise_key: int, grid_index: int, shape) -> np.ndarray:
    # one stream per candidate, indexed by (node, path) inside the array, so the
    # draws do not depend on the order in which candidates are processed
    ss = np.random.SeedSequence(noise_key, spawn_key=(grid_index,))
    return np.random.default_rng(ss).standard_normal(shape)


@numba.njit(cache=True, nogil=True)
def _argmin_counts(paths, gain, innovations):
    # counts[q, j]: number of paths whose re-conditioned minimum at node q is
    # attained at j (first index on ties), without forming the (Q, S, m) array
    Q, S = innovations.shape
    m = paths.shape[1]
    counts = np.zeros((Q, m), dtype=np.int64)
    for q in range(Q):
        for s in range(S):
            d = innovations[q, s]
            best = paths[s, 0] + d * gain[0]
            best_j = 0
            for j in range(1, m):
                v = paths[s, j] + d * gain[j]
                if v < best:
                    best = v
                    best_j = j
            counts[q, best_j] += 1
    return counts


def _node_entropies(paths: np.ndarray, gain: np.ndarray, innovations: np.ndarray) -> np.ndarray:
    """Entropy of the minimizer histogram of ``paths + gain * innovation`` per node."""
    S = innovations.shape[1]
    counts = _argmin_counts(np.ascontiguousarray(paths), np.ascontiguousarray(gain), innovations)
    return np.array([shannon_entropy(c / S) for c in counts])


def _criterion(post, grid_index, tau, rule, base: _BaseDraw) -> float:
    if post.is_known(grid_index):
        return base.entropy
    paths = base.paths.values
    var = float(post.covariance[grid_index, grid_index])
    total = var + tau
    gain = post.covariance[:, grid_index] / total
    fantasy = post.mean[grid_index] + math.sqrt(total) * rule.nodes
    at_x = paths[:, grid_index]
    if tau > 0:
        e = math.sqrt(tau) * _fantasy_noise(base.noise_key, grid_index, (rule.order, paths.shape[0]))
        innovations = fantasy[:, None] - (at_x[None, :] + e)
    else:
        innovations = fantasy[:, None] - at_x[None, :]
    return float(np.dot(rule.weights, _node_entropies(paths, gain, innovations)))


def criterion_value(
    post: GPPosterior,
    grid_index: int,
    K,
    rule: QuadratureRule | None = None,
    S: int = DEFAULT_PATHS,
    rng=None,
    *,
    noise: NoiseModel,
    paths: PathSet | None = None,
) -> float:
    """Expected minimizer entropy after ``K`` evaluations at ``grid_index``.

    Draws the base path set (and the fantasy-noise key) from ``rng`` exactly as
    :func:`criterion_profile` does, so the two agree under the same seed.
    """
    if not 0 <= grid_index < post.grid.m:
        raise InvalidArgumentError(f"grid index {grid_index} outside [0, {post.grid.m})")
    K = check_batch_size(K)
    rule = gauss_hermite() if rule is None else rule
    base = _base_draw(post, S, rng, paths)
    return _criterion(post, grid_index, noise.effective_variance(K), rule, base)


def criterion_profile(
    post: GPPosterior,
    K,
    rule: QuadratureRule | None = None,
    S: int = DEFAULT_PATHS,
    rng=None,
    *,
    noise: NoiseModel,
    paths: PathSet | None = None,
    threads: int = 1,
) -> CriterionProfile:
    """Evaluate the criterion at every grid point with one shared path set.

    Parameters
    ----------
    post : GPPosterior
        Current posterior.
    K : int or math.inf
        Virtual batch size.
    rule : QuadratureRule, optional
        Defaults to the 15-point Gauss-Hermite rule.
    S : int
        Number of conditional sample paths.
    rng : seed or numpy Generator
        Source of the base paths and of the fantasy-noise key.
    noise : NoiseModel
        Known evaluation noise.
    paths : PathSet, optional
        Use these base paths instead of drawing new ones.
    threads : int
        Candidates are split over this many threads; results do not depend
        on it.
    """
    K = check_batch_size(K)
    rule = gauss_hermite() if rule is None else rule
    seed = rng if isinstance(rng, (int, np.integer)) else None
    base = _base_draw(post, S, rng, paths)
    tau = noise.effective_variance(K)

    def one(i):
        return _criterion(post, i, tau, rule, base)

    m = post.grid.m
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            values = list(pool.map(one, range(m)))
    else:
        values = [one(i) for i in range(m)]
    return CriterionProfile(np.array(values), K, base.paths.S, seed, base.entropy)


def select_next(profile) -> int:
    """Index of the smallest criterion value (first one on ties)."""
    values = profile.values if isinstance(profile, CriterionProfile) else np.asarray(profile)
    if values.size == 0:
        raise InvalidArgumentError("empty profile")
    return int(np.argmin(values))


def iid_select(grid, rng=None) -> int:
    """Uniformly random grid index.  ``grid`` may also be a point count."""
    m = grid.m if isinstance(grid, CandidateGrid) else int(grid)
    if m < 1:
        raise InvalidArgumentError("need at least one candidate")
    return int(np.random.default_rng(rng).integers(m))
