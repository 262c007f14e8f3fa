"""Gaussian-process prior and posterior on a finite candidate grid.

Everything here works on a fixed, ordered set of candidate points.  A
posterior is stored as a dense mean vector and covariance matrix over the
grid, which is cheap for the grid sizes this package targets (tens to a few
hundred points).

Observations carry a *batch count* ``k``: an observation with ``k`` equal to
the number of averaged raw evaluations has noise variance ``sigma^2 / k``, and
``k = inf`` encodes an exact observation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import linalg, optimize
from scipy.spatial.distance import cdist

from .exceptions import (
    ConditioningError,
    InsufficientDataError,
    InvalidArgumentError,
    InvalidSpecificationError,
)

MATERN52 = "matern52"
MATERN32 = "matern32"
SQUARED_EXPONENTIAL = "sqexp"
FAMILIES = (MATERN52, MATERN32, SQUARED_EXPONENTIAL)

# jitter policy, relative to the mean diagonal of the matrix being factored
JITTER_START = 1e-10
JITTER_MAX = 1e-6
JITTER_FACTOR = 10.0

# variances below this fraction of the largest prior-scale variance are
# treated as exactly zero (no information can be gained there)
ZERO_VARIANCE_RTOL = 1e-12


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype)
    a.flags.writeable = False
    return a


# ---------------------------------------------------------------------------
# Domain types


@dataclass(frozen=True, eq=False)
class CandidateGrid:
    """Ordered finite set of ``m`` candidate points in R^d.

    Parameters
    ----------
    points : array_like, shape (m, d) or (m,)
        Candidate locations.  One-dimensional input is read as ``d = 1``.
    """

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or pts.shape[0] < 2:
            raise InvalidArgumentError("a candidate grid needs at least 2 points")
        if not np.all(np.isfinite(pts)):
            raise InvalidArgumentError("grid points must be finite")
        if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
            raise InvalidArgumentError("grid points must be pairwise distinct")
        object.__setattr__(self, "points", _frozen(pts))

    @classmethod
    def linspace(cls, start: float, stop: float, m: int) -> "CandidateGrid":
        """Equally spaced one-dimensional grid, endpoints included."""
        return cls(np.linspace(start, stop, m))

    @property
    def m(self) -> int:
        return self.points.shape[0]

    @property
    def d(self) -> int:
        return self.points.shape[1]

    def __len__(self):
        return self.m

    def span(self) -> float:
        """Largest coordinate range of the grid."""
        return float(np.max(np.ptp(self.points, axis=0)))


@dataclass(frozen=True)
class CovarianceSpec:
    """Stationary covariance function of the prior.

    ``family`` is one of ``"matern52"`` (default), ``"matern32"`` or
    ``"sqexp"``; ``lengthscales`` has one entry per input dimension.
    Validation happens in :meth:`validate`, which every consumer calls.
    """

    family: str = MATERN52
    variance: float = 1.0
    lengthscales: tuple = (1.0,)

    def __post_init__(self):
        object.__setattr__(
            self, "lengthscales", tuple(float(v) for v in np.atleast_1d(self.lengthscales))
        )
        object.__setattr__(self, "variance", float(self.variance))

    def validate(self):
        if self.family not in FAMILIES:
            raise InvalidSpecificationError(f"unknown covariance family {self.family!r}")
        if not self.variance > 0 or not math.isfinite(self.variance):
            raise InvalidSpecificationError(f"process variance must be > 0, got {self.variance}")
        if len(self.lengthscales) == 0 or not all(
            ell > 0 and math.isfinite(ell) for ell in self.lengthscales
        ):
            raise InvalidSpecificationError(f"lengthscales must be > 0, got {self.lengthscales}")
        return self

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "variance": self.variance,
            "lengthscales": list(self.lengthscales),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CovarianceSpec":
        return cls(d.get("family", MATERN52), d["variance"], tuple(d["lengthscales"]))


@dataclass(frozen=True)
class NoiseModel:
    """Known, homoscedastic Gaussian observation noise of variance ``variance``."""

    variance: float = 0.0

    def __post_init__(self):
        if not self.variance >= 0 or not math.isfinite(self.variance):
            raise InvalidSpecificationError(f"noise variance must be >= 0, got {self.variance}")
        object.__setattr__(self, "variance", float(self.variance))

    def effective_variance(self, batch_count) -> float:
        """Noise variance of the average of ``batch_count`` raw evaluations."""
        if math.isinf(batch_count):
            return 0.0
        return self.variance / batch_count


@dataclass(frozen=True)
class Observation:
    """A (possibly averaged) observation at one grid index.

    ``batch_count`` is a positive integer or ``math.inf`` (exact observation).
    """

    grid_index: int
    value: float
    batch_count: float = 1

    def __post_init__(self):
        k = self.batch_count
        if not (math.isinf(k) and k > 0) and not (float(k).is_integer() and k >= 1):
            raise InvalidArgumentError(f"batch_count must be a positive integer or inf, got {k}")


@dataclass(frozen=True, eq=False)
class ObservationSet:
    """Immutable collection of observations on a grid."""

    grid: CandidateGrid
    indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    values: np.ndarray = field(default_factory=lambda: np.zeros(0))
    batch_counts: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=int).reshape(-1)
        val = np.asarray(self.values, dtype=float).reshape(-1)
        k = np.asarray(self.batch_counts, dtype=float).reshape(-1)
        if not (idx.shape == val.shape == k.shape):
            raise InvalidArgumentError("indices, values and batch_counts must have equal length")
        if idx.size and (idx.min() < 0 or idx.max() >= self.grid.m):
            raise InvalidArgumentError("observation index outside of the grid")
        if np.any(k < 1):
            raise InvalidArgumentError("batch counts must be >= 1")
        if not np.all(np.isfinite(val)):
            raise InvalidArgumentError("observed values must be finite")
        object.__setattr__(self, "indices", _frozen(idx, int))
        object.__setattr__(self, "values", _frozen(val))
        object.__setattr__(self, "batch_counts", _frozen(k))

    @classmethod
    def from_observations(cls, grid: CandidateGrid, observations: Iterable[Observation]):
        obs = list(observations)
        return cls(
            grid,
            [o.grid_index for o in obs],
            [o.value for o in obs],
            [o.batch_count for o in obs],
        )

    def __len__(self):
        return self.indices.size

    def __iter__(self):
        for i, y, k in zip(self.indices, self.values, self.batch_counts):
            yield Observation(int(i), float(y), int(k) if math.isfinite(k) else math.inf)

    def append(self, *observations: Observation) -> "ObservationSet":
        """Return a new set with ``observations`` added at the end."""
        return ObservationSet(
            self.grid,
            np.concatenate([self.indices, [o.grid_index for o in observations]]),
            np.concatenate([self.values, [o.value for o in observations]]),
            np.concatenate([self.batch_counts, [o.batch_count for o in observations]]),
        )

    @property
    def locations(self) -> np.ndarray:
        return self.grid.points[self.indices]

    def noise_variances(self, noise: NoiseModel) -> np.ndarray:
        """Per-observation noise variances ``sigma^2 / k`` (0 where ``k = inf``)."""
        with np.errstate(divide="ignore"):
            return np.where(np.isinf(self.batch_counts), 0.0, noise.variance / self.batch_counts)


@dataclass(frozen=True, eq=False)
class GPPosterior:
    """Posterior law of the process restricted to the grid."""

    grid: CandidateGrid
    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", _frozen(self.mean))
        object.__setattr__(self, "covariance", _frozen(self.covariance))

    @property
    def variance(self) -> np.ndarray:
        """Pointwise posterior variances, negative round-off clipped to 0."""
        return np.maximum(np.diag(self.covariance), 0.0)

    def zero_variance_tol(self) -> float:
        return ZERO_VARIANCE_RTOL * max(float(np.max(np.diag(self.covariance))), 0.0)

    def is_known(self, grid_index: int) -> bool:
        """True when the variance at ``grid_index`` is zero up to round-off."""
        return self.covariance[grid_index, grid_index] <= self.zero_variance_tol()


# ---------------------------------------------------------------------------
# Linear algebra helpers


def jittered_cholesky(a: np.ndarray, what: str = "matrix") -> np.ndarray:
    """Lower Cholesky factor of a symmetric PSD matrix.

    The plain factorization is tried first.  On failure a diagonal jitter of
    ``1e-10`` times the mean diagonal is added and escalated by factors of 10
    up to ``1e-6`` times the mean diagonal; after that a
    :class:`ConditioningError` is raised.
    """
    a = np.asarray(a, dtype=float)
    try:
        return linalg.cholesky(a, lower=True, check_finite=False)
    except linalg.LinAlgError:
        pass
    scale = float(np.mean(np.diag(a)))
    if not scale > 0:
        raise ConditioningError(f"cannot factor {what}: non-positive diagonal", 0.0)
    jitter = JITTER_START * scale
    eye = np.eye(a.shape[0])
    while jitter <= JITTER_MAX * scale * (1 + 1e-9):
        try:
            return linalg.cholesky(a + jitter * eye, lower=True, check_finite=False)
        except linalg.LinAlgError:
            jitter *= JITTER_FACTOR
    raise ConditioningError(f"cannot factor {what}", jitter / JITTER_FACTOR)


def _as_points(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a[:, None]
    return a


def _scaled_diffs(spec: CovarianceSpec, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    ell = np.asarray(spec.lengthscales)
    if ell.size == 1:
        ell = np.full(a.shape[1], ell[0])
    if ell.size != a.shape[1]:
        raise InvalidSpecificationError(
            f"{ell.size} lengthscales given for {a.shape[1]}-dimensional inputs"
        )
    return a / ell, b / ell


def _correlation(family: str, r: np.ndarray) -> np.ndarray:
    if family == MATERN52:
        t = math.sqrt(5.0) * r
        return (1.0 + t + t * t / 3.0) * np.exp(-t)
    if family == MATERN32:
        t = math.sqrt(3.0) * r
        return (1.0 + t) * np.exp(-t)
    return np.exp(-0.5 * r * r)


def cov_matrix(spec: CovarianceSpec, A, B) -> np.ndarray:
    """Covariance matrix ``k(A_i, B_j)`` between two lists of locations."""
    spec.validate()
    a, b = _as_points(A), _as_points(B)
    sa, sb = _scaled_diffs(spec, a, b)
    r = cdist(sa, sb)
    return spec.variance * _correlation(spec.family, r)


def _cov_and_grads(spec: CovarianceSpec, x: np.ndarray):
    """Covariance on ``x`` and its derivatives w.r.t. log-variance and log-lengthscales."""
    sx, _ = _scaled_diffs(spec, x, x)
    r = cdist(sx, sx)
    k = spec.variance * _correlation(spec.family, r)
    grads = [k]
    per_dim = len(spec.lengthscales) > 1
    dims = range(x.shape[1]) if per_dim else [None]
    if spec.family == MATERN52:
        t = math.sqrt(5.0) * r
        base = spec.variance * (5.0 / 3.0) * (1.0 + t) * np.exp(-t)
    elif spec.family == MATERN32:
        base = spec.variance * 3.0 * np.exp(-math.sqrt(3.0) * r)
    else:
        base = k
    for j in dims:
        if j is None:
            sq = r * r
        else:
            sq = (sx[:, j, None] - sx[None, :, j]) ** 2
        grads.append(base * sq)
    return k, grads


# ---------------------------------------------------------------------------
# Conditioning


def fuse_batch(values: Sequence[float], noise: NoiseModel | None = None, grid_index: int = 0):
    """Average ``K`` same-point evaluations into one observation.

    The returned observation has ``batch_count = K``, hence effective noise
    variance ``noise.variance / K``.
    """
    v = np.asarray(values, dtype=float).reshape(-1)
    if v.size == 0:
        raise InvalidArgumentError("cannot fuse an empty batch")
    if not np.all(np.isfinite(v)):
        raise InvalidArgumentError("cannot fuse non-finite evaluations")
    value = float(v[0]) if v.size == 1 else float(np.mean(v))
    return Observation(int(grid_index), value, int(v.size))


def compute_posterior(
    spec: CovarianceSpec,
    noise: NoiseModel,
    obs: ObservationSet,
    grid: CandidateGrid | None = None,
) -> GPPosterior:
    """Condition the zero-mean prior on ``obs`` and restrict it to the grid.

    Observation ``i`` carries noise variance ``noise.variance / k_i``.  With no
    observations the prior itself is returned.
    """
    grid = obs.grid if grid is None else grid
    if grid is not obs.grid and grid.points.shape != obs.grid.points.shape:
        raise InvalidArgumentError("observations live on a different grid")
    prior = cov_matrix(spec, grid.points, grid.points)
    if len(obs) == 0:
        return GPPosterior(grid, np.zeros(grid.m), prior)
    idx = obs.indices
    gram = prior[np.ix_(idx, idx)] + np.diag(obs.noise_variances(noise))
    chol = jittered_cholesky(gram, "observation Gram matrix")
    w = linalg.solve_triangular(chol, prior[idx, :], lower=True, check_finite=False)
    alpha = linalg.solve_triangular(chol, obs.values, lower=True, check_finite=False)
    mean = w.T @ alpha
    cov = prior - w.T @ w
    cov = 0.5 * (cov + cov.T)
    return GPPosterior(grid, mean, cov)


def fantasy_update(
    post: GPPosterior, grid_index: int, value: float, obs_noise_variance: float
) -> GPPosterior:
    """Condition ``post`` on one more observation by a rank-one update.

    When the posterior variance at ``grid_index`` is (numerically) zero the
    observation carries no information and ``post`` is returned unchanged.
    """
    m = post.grid.m
    if not 0 <= grid_index < m:
        raise InvalidArgumentError(f"grid index {grid_index} outside [0, {m})")
    if obs_noise_variance < 0:
        raise InvalidArgumentError("observation noise variance must be >= 0")
    if post.is_known(grid_index):
        return post
    s = np.array(post.covariance[:, grid_index])
    v = s[grid_index] + obs_noise_variance
    gain = s / v
    mean = post.mean + gain * (value - post.mean[grid_index])
    cov = post.covariance - np.outer(gain, s)
    cov = 0.5 * (cov + cov.T)
    if obs_noise_variance == 0:
        mean[grid_index] = value
        cov[grid_index, :] = 0.0
        cov[:, grid_index] = 0.0
    return GPPosterior(post.grid, mean, cov)


# ---------------------------------------------------------------------------
# Likelihood and parameter fitting


def log_marginal_likelihood(spec: CovarianceSpec, noise: NoiseModel, obs: ObservationSet) -> float:
    """Gaussian log-density of the observed values under prior plus noise."""
    n = len(obs)
    if n == 0:
        return 0.0
    x = obs.locations
    gram = cov_matrix(spec, x, x) + np.diag(obs.noise_variances(noise))
    chol = jittered_cholesky(gram, "observation Gram matrix")
    alpha = linalg.solve_triangular(chol, obs.values, lower=True, check_finite=False)
    return float(
        -0.5 * alpha @ alpha - np.sum(np.log(np.diag(chol))) - 0.5 * n * math.log(2 * math.pi)
    )


def _nll_and_grad(theta, family, x, y, tau):
    spec = CovarianceSpec(family, math.exp(theta[0]), tuple(np.exp(theta[1:])))
    k, grads = _cov_and_grads(spec, x)
    try:
        chol = jittered_cholesky(k + np.diag(tau))
    except ConditioningError:
        return 1e25, np.zeros_like(theta)
    alpha = linalg.cho_solve((chol, True), y, check_finite=False)
    kinv = linalg.cho_solve((chol, True), np.eye(y.size), check_finite=False)
    nll = 0.5 * y @ alpha + np.sum(np.log(np.diag(chol))) + 0.5 * y.size * math.log(2 * math.pi)
    inner = np.outer(alpha, alpha) - kinv
    grad = np.array([-0.5 * np.sum(inner * g) for g in grads])
    return float(nll), grad


@dataclass(frozen=True)
class HyperparameterBounds:
    """Box constraints for the fitted covariance parameters (natural units)."""

    variance: tuple = (1e-4, 1e2)
    lengthscale: tuple = (0.05, 1.0)

    @classmethod
    def for_grid(cls, grid: CandidateGrid, variance=(1e-4, 1e2)) -> "HyperparameterBounds":
        """Default bounds with lengthscales between 5% and 100% of the grid span."""
        span = grid.span()
        return cls(tuple(variance), (0.05 * span, 1.0 * span))


def fit_hyperparameters(
    obs: ObservationSet,
    grid: CandidateGrid | None = None,
    noise: NoiseModel | None = None,
    bounds: HyperparameterBounds | None = None,
    restarts: int = 5,
    rng=None,
    *,
    family: str = MATERN52,
    init: CovarianceSpec | None = None,
) -> CovarianceSpec:
    """Maximum-likelihood covariance parameters by multi-start L-BFGS-B.

    Parameters are searched on a log scale inside ``bounds``.  The noise
    variance is known and never estimated.  ``restarts`` random starting
    points are drawn uniformly (in log space) from the box; when ``init`` is
    given it is used as an additional first starting point.

    Returns
    -------
    CovarianceSpec
        The best parameters found.
    """
    grid = obs.grid if grid is None else grid
    noise = NoiseModel() if noise is None else noise
    bounds = HyperparameterBounds.for_grid(grid) if bounds is None else bounds
    if len(obs) < 2 or np.unique(obs.indices).size < 2:
        raise InsufficientDataError("need at least 2 observations at 2 distinct locations")
    rng = np.random.default_rng(rng)
    d = grid.d
    lo = np.log([bounds.variance[0]] + [bounds.lengthscale[0]] * d)
    hi = np.log([bounds.variance[1]] + [bounds.lengthscale[1]] * d)
    box = list(zip(lo, hi))

    starts = []
    if init is not None:
        theta0 = np.log([init.variance] + list(np.broadcast_to(init.lengthscales, (d,))))
        starts.append(np.clip(theta0, lo, hi))
    starts.extend(lo + (hi - lo) * rng.random((max(restarts, 0), d + 1)))
    if not starts:
        starts.append(0.5 * (lo + hi))

    x, y, tau = obs.locations, obs.values, obs.noise_variances(noise)
    best_theta, best_nll = None, np.inf
    for theta0 in starts:
        res = optimize.minimize(
            _nll_and_grad,
            theta0,
            args=(family, x, y, tau),
            jac=True,
            method="L-BFGS-B",
            bounds=box,
        )
        theta = np.clip(res.x, lo, hi)
        nll = _nll_and_grad(theta, family, x, y, tau)[0]
        if nll < best_nll:
            best_theta, best_nll = theta, nll
    if best_theta is None:
        raise ConditioningError("likelihood is not finite at any start point", 0.0)
    return CovarianceSpec(family, float(np.exp(best_theta[0])), tuple(np.exp(best_theta[1:])))

