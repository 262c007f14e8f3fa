"""Sequential optimization loop with actual batches of repeated evaluations.

At each iteration a grid point is chosen, either by minimizing the
virtual-batch entropy criterion (policy ``"IAGO"``) or uniformly at random
(policy ``"IID"``), then evaluated ``actual_batch`` times.  The batch is
averaged into one observation, the covariance parameters are refitted, and
the estimated minimizer, estimated minimum and minimizer entropy are logged.

Observations are standardized with the mean and standard deviation of the
raw initial-design evaluations; the constants are frozen for the whole run
and every logged minimum is reported in original units.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .exceptions import IagoError, InvalidArgumentError
from .gp_core import (
    MATERN52,
    CandidateGrid,
    CovarianceSpec,
    GPPosterior,
    HyperparameterBounds,
    NoiseModel,
    ObservationSet,
    compute_posterior,
    fit_hyperparameters,
    fuse_batch,
)
from .minimizer_entropy import entropy_of_posterior
from .sur_criterion import (
    INF,
    check_batch_size,
    criterion_profile,
    format_batch_size,
    gauss_hermite,
    iid_select,
    select_next,
)

IAGO = "IAGO"
IID = "IID"
POLICIES = (IAGO, IID)

# seed streams, combined with the run seed and an iteration counter
_DESIGN, _FIT, _POLICY, _EVAL, _ENTROPY = range(5)


def _stream(seed: int, stream: int, counter: int = 0) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(stream, counter))


def _seed_int(seed: int, stream: int, counter: int) -> int:
    return int(_stream(seed, stream, counter).generate_state(1, np.uint64)[0])


@dataclass(frozen=True)
class OptimizerConfig:
    """Settings of one optimization run.

    ``budget`` counts evaluations after the initial design, which uses
    ``init_batches * actual_batch`` additional evaluations.  ``refit_every``
    is a number of batches (0 disables refitting).
    """

    budget: int = 2000
    actual_batch: int = 10
    virtual_batch: object = INF
    paths: int = 1000
    quad_order: int = 15
    init_batches: int = 11
    refit_every: int = 1
    policy: str = IAGO
    seed: int = 0
    family: str = MATERN52
    restarts: int = 5
    refit_restarts: int = 2
    noise_variance: float | None = None
    variance_bounds: tuple = (1e-4, 1e2)
    lengthscale_bounds: tuple | None = None
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "virtual_batch", check_batch_size(self.virtual_batch))
        object.__setattr__(self, "policy", self.policy.upper())
        if self.policy not in POLICIES:
            raise InvalidArgumentError(f"unknown policy {self.policy!r}")
        if self.actual_batch < 1:
            raise InvalidArgumentError("actual_batch must be >= 1")
        if self.budget < 0 or self.budget % self.actual_batch:
            raise InvalidArgumentError("budget must be a nonnegative multiple of actual_batch")
        if self.init_batches < 1:
            raise InvalidArgumentError("init_batches must be >= 1")
        if self.paths < 1 or self.refit_every < 0:
            raise InvalidArgumentError("paths must be >= 1 and refit_every >= 0")

    @property
    def iterations(self) -> int:
        return self.budget // self.actual_batch

    def to_dict(self) -> dict:
        d = asdict(self)
        d["virtual_batch"] = format_batch_size(self.virtual_batch)
        for key in ("variance_bounds", "lengthscale_bounds"):
            if d[key] is not None:
                d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerConfig":
        d = dict(d)
        for key in ("variance_bounds", "lengthscale_bounds"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


@dataclass(frozen=True)
class Standardization:
    """Affine map ``z = (y - offset) / scale`` applied to observed values."""

    offset: float = 0.0
    scale: float = 1.0

    @classmethod
    def from_values(cls, values) -> "Standardization":
        v = np.asarray(values, dtype=float)
        scale = float(np.std(v, ddof=1)) if v.size > 1 else 0.0
        return cls(float(np.mean(v)), scale if scale > 0 else 1.0)

    def forward(self, y):
        return (np.asarray(y, dtype=float) - self.offset) / self.scale

    def backward(self, z):
        return np.asarray(z, dtype=float) * self.scale + self.offset

    def noise(self, noise_variance: float) -> NoiseModel:
        return NoiseModel(noise_variance / self.scale**2)


@dataclass(frozen=True)
class IterationRecord:
    """State after one batch (iteration 0 is the state after the initial design)."""

    iteration: int
    evaluations: int
    chosen_index: int | None
    values: tuple
    xhat_index: int
    xhat: object
    Mhat: float
    H: float
    spec: dict
    entropy_seed: int

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class RunTrace:
    """Everything logged during one run."""

    config: dict
    metadata: dict = field(default_factory=dict)
    initial: IterationRecord | None = None
    records: list = field(default_factory=list)

    @property
    def final(self) -> IterationRecord | None:
        return self.records[-1] if self.records else self.initial

    def at(self, iteration: int) -> IterationRecord:
        return self.initial if iteration == 0 else self.records[iteration - 1]

    def standardization(self) -> Standardization:
        return Standardization(**self.metadata["standardization"])

    def observations(self, grid: CandidateGrid, iteration: int | None = None) -> ObservationSet:
        """Standardized observation set available after ``iteration`` batches."""
        iteration = len(self.records) if iteration is None else iteration
        std = self.standardization()
        batches = list(zip(self.metadata["initial_indices"], self.metadata["initial_values"]))
        batches += [(r.chosen_index, r.values) for r in self.records[:iteration]]
        obs = [fuse_batch(std.forward(v), grid_index=i) for i, v in batches]
        return ObservationSet.from_observations(grid, obs)

    def posterior(self, grid: CandidateGrid, iteration: int | None = None) -> GPPosterior:
        """Posterior (standardized units) used for the logged estimates at ``iteration``."""
        iteration = len(self.records) if iteration is None else iteration
        rec = self.at(iteration)
        noise = self.standardization().noise(self.metadata["noise_variance"])
        spec = CovarianceSpec.from_dict(rec.spec)
        return compute_posterior(spec, noise, self.observations(grid, iteration))


class RunAborted(IagoError):
    """A run failed; ``trace`` holds everything logged up to the failure."""

    def __init__(self, message, trace: RunTrace):
        super().__init__(message)
        self.trace = trace


# ---------------------------------------------------------------------------


def design_indices(grid: CandidateGrid, n: int) -> list[int]:
    """Deterministic space-filling subset of ``n`` grid indices.

    One point is the grid point closest to the centre of the bounding box.
    In one dimension, ``n >= 2`` points are the grid points closest to ``n``
    equally spaced targets between the two endpoints.  In higher dimension a
    greedy maximin selection starts from the two most distant points.
    """
    m = grid.m
    if not 1 <= n <= m:
        raise InvalidArgumentError(f"cannot pick {n} distinct points out of {m}")
    pts = grid.points
    if n == 1:
        centre = 0.5 * (pts.min(axis=0) + pts.max(axis=0))
        return [int(np.argmin(np.linalg.norm(pts - centre, axis=1)))]
    chosen: list[int] = []
    if grid.d == 1:
        x = pts[:, 0]
        for t in np.linspace(x.min(), x.max(), n):
            dist = np.abs(x - t)
            dist[chosen] = np.inf
            chosen.append(int(np.argmin(dist)))
        return sorted(chosen)
    dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    i, j = np.unravel_index(np.argmax(dist), dist.shape)
    chosen = [int(min(i, j)), int(max(i, j))]
    while len(chosen) < n:
        gap = dist[:, chosen].min(axis=1)
        gap[chosen] = -np.inf
        chosen.append(int(np.argmax(gap)))
    return sorted(chosen)


def _initial_batches(grid, init_batches, K0, objective, rng):
    gen = np.random.default_rng(rng)
    return [(i, np.asarray(objective(i, K0, gen), dtype=float)) for i in design_indices(grid, init_batches)]


def initial_design(
    grid: CandidateGrid, init_batches: int, K0: int, objective: Callable, rng=None
) -> ObservationSet:
    """Evaluate ``K0`` times at each of ``init_batches`` spread-out grid points.

    ``objective(grid_index, k, rng)`` must return ``k`` evaluations.  Each
    batch is averaged into one observation with batch count ``K0``.
    """
    batches = _initial_batches(grid, init_batches, K0, objective, rng)
    return ObservationSet.from_observations(grid, [fuse_batch(v, grid_index=i) for i, v in batches])


def estimate_optimum(post: GPPosterior, standardization: Standardization | None = None):
    """Argmin of the posterior mean (first on ties) and the mean value there.

    With ``standardization`` the value is mapped back to original units.
    """
    i = int(np.argmin(post.mean))
    value = float(post.mean[i])
    if standardization is not None:
        value = float(standardization.backward(value))
    return i, value


def _location(grid: CandidateGrid, i: int):
    p = grid.points[i]
    return float(p[0]) if grid.d == 1 else [float(v) for v in p]


def run(config: OptimizerConfig, objective, *, grid: CandidateGrid | None = None) -> RunTrace:
    """Execute one optimization run.

    Parameters
    ----------
    config : OptimizerConfig
    objective : callable
        ``objective(grid_index, k, rng)`` returning ``k`` noisy evaluations,
        e.g. a :class:`iago.testbed.NoisyObjective`.
    grid : CandidateGrid, optional
        Defaults to ``objective.grid``.

    Raises
    ------
    RunAborted
        On any numerical failure, with the partial trace attached.
    """
    grid = objective.grid if grid is None else grid
    noise_variance = (
        config.noise_variance if config.noise_variance is not None else objective.noise_variance
    )
    seed = config.seed
    rule = gauss_hermite(config.quad_order)
    ell_bounds = config.lengthscale_bounds
    bounds = HyperparameterBounds(
        tuple(config.variance_bounds),
        tuple(ell_bounds) if ell_bounds is not None else HyperparameterBounds.for_grid(grid).lengthscale,
    )

    trace = RunTrace(config.to_dict())
    counters = {"profile_builds": 0, "raw_evaluations": 0}

    def record(it, chosen, values, spec, post) -> IterationRecord:
        xi, mhat = estimate_optimum(post, std)
        h_seed = _seed_int(seed, _ENTROPY, it)
        h = entropy_of_posterior(post, config.paths, h_seed)
        return IterationRecord(
            it,
            counters["raw_evaluations"],
            chosen,
            tuple(float(v) for v in values),
            xi,
            _location(grid, xi),
            mhat,
            h,
            spec.to_dict(),
            h_seed,
        )

    try:
        batches = _initial_batches(
            grid, config.init_batches, config.actual_batch, objective, _stream(seed, _DESIGN)
        )
        counters["raw_evaluations"] += config.init_batches * config.actual_batch
        raw = np.concatenate([v for _, v in batches])
        std = Standardization.from_values(raw)
        noise = std.noise(noise_variance)
        trace.metadata.update(
            standardization=asdict(std),
            noise_variance=noise_variance,
            initial_indices=[int(i) for i, _ in batches],
            initial_values=[[float(y) for y in v] for _, v in batches],
            estimator="argmin of posterior mean",
            entropy_units="nats",
            common_random_numbers="one base path set per criterion profile",
            objective=getattr(objective, "label", type(objective).__name__),
            grid_size=grid.m,
        )
        obs = ObservationSet.from_observations(
            grid, [fuse_batch(std.forward(v), grid_index=i) for i, v in batches]
        )
        spec = fit_hyperparameters(
            obs, grid, noise, bounds, config.restarts, _stream(seed, _FIT, 0), family=config.family
        )
        post = compute_posterior(spec, noise, obs)
        trace.initial = record(0, None, (), spec, post)

        for it in range(1, config.iterations + 1):
            if config.policy == IAGO:
                profile = criterion_profile(
                    post,
                    config.virtual_batch,
                    rule,
                    config.paths,
                    _seed_int(seed, _POLICY, it),
                    noise=noise,
                    threads=config.threads,
                )
                counters["profile_builds"] += 1
                chosen = select_next(profile)
            else:
                chosen = iid_select(grid, _stream(seed, _POLICY, it))
            values = np.asarray(
                objective(chosen, config.actual_batch, _stream(seed, _EVAL, it)), dtype=float
            )
            counters["raw_evaluations"] += config.actual_batch
            obs = obs.append(fuse_batch(std.forward(values), grid_index=chosen))
            if config.refit_every and it % config.refit_every == 0:
                spec = fit_hyperparameters(
                    obs,
                    grid,
                    noise,
                    bounds,
                    config.refit_restarts,
                    _stream(seed, _FIT, it),
                    family=config.family,
                    init=spec,
                )
            post = compute_posterior(spec, noise, obs)
            trace.records.append(record(it, chosen, values, spec, post))
    except IagoError as exc:
        trace.metadata.update(counters)
        raise RunAborted(f"run aborted: {exc}", trace) from exc
    trace.metadata.update(counters)
    return trace

