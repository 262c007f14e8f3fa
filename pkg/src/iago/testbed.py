"""Synthetic noisy objectives on a candidate grid.

All objectives are *synthetic analogs*: they stand in for an expensive
stochastic simulator whose expected cost is a smooth function with a shallow
basin, observed through heavy additive Gaussian noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import InvalidArgumentError
from .gp_core import CandidateGrid, CovarianceSpec, cov_matrix, jittered_cholesky

# Shallow-basin surrogate on [-1, 0] (synthetic, not fitted to any data):
#   f(x) = OFFSET + SLOPE * (sqrt((x - CENTER)**2 + ROUNDING**2) - ROUNDING)
# i.e. a wide, rounded V whose bottom sits on a grid point.
RES_GRID = (-1.0, 0.0, 51)
RES_OFFSET = 0.68
RES_CENTER = -0.36
RES_SLOPE = 0.16
RES_ROUNDING = 0.05
RES_NOISE_STD = 0.3


@dataclass(frozen=True, eq=False)
class NoisyObjective:
    """Objective known on a grid, observed with additive N(0, noise_std^2) noise."""

    grid: CandidateGrid
    mean_values: np.ndarray
    noise_std: float
    label: str = "objective"

    def __post_init__(self):
        f = np.array(self.mean_values, dtype=float).reshape(-1)
        if f.size != self.grid.m or not np.all(np.isfinite(f)):
            raise InvalidArgumentError("mean_values must be finite, one per grid point")
        if not self.noise_std >= 0:
            raise InvalidArgumentError("noise_std must be >= 0")
        f.flags.writeable = False
        object.__setattr__(self, "mean_values", f)
        object.__setattr__(self, "noise_std", float(self.noise_std))

    @property
    def noise_variance(self) -> float:
        return self.noise_std**2

    def __call__(self, grid_index: int, k: int, rng) -> np.ndarray:
        return evaluate_batch(self, grid_index, k, rng)

    def to_table(self, path) -> None:
        """Write a two-column text table ``grid point, mean value``."""
        if self.grid.d != 1:
            raise InvalidArgumentError("table export is only defined for 1-d grids")
        np.savetxt(
            path,
            np.column_stack([self.grid.points[:, 0], self.mean_values]),
            fmt="%.17g",
            header=f"{self.label} (synthetic analog); columns: x f(x)",
        )


def make_gp_draw_objective(
    spec: CovarianceSpec, grid: CandidateGrid, noise_std: float, seed=None
) -> NoisyObjective:
    """Objective whose mean is one exact draw from the prior on ``grid``."""
    if spec.variance == 0:
        f = np.zeros(grid.m)
    else:
        k = cov_matrix(spec, grid.points, grid.points)
        f = jittered_cholesky(k, "prior covariance") @ np.random.default_rng(seed).standard_normal(
            grid.m
        )
    return NoisyObjective(grid, f, noise_std, label=f"gp-draw(seed={seed})")


def res_surrogate_mean(x) -> np.ndarray:
    d = np.asarray(x, dtype=float) - RES_CENTER
    return RES_OFFSET + RES_SLOPE * (np.sqrt(d * d + RES_ROUNDING**2) - RES_ROUNDING)


def make_res_surrogate(noise_std: float = RES_NOISE_STD) -> NoisyObjective:
    """Fixed shallow-basin objective on 51 equally spaced points of [-1, 0].

    The mean varies by about 0.095 over the grid, so the default noise
    standard deviation of 0.3 is roughly 3.2 times that range.
    """
    grid = CandidateGrid.linspace(*RES_GRID)
    return NoisyObjective(grid, res_surrogate_mean(grid.points[:, 0]), noise_std, "res-surrogate")


def evaluate_batch(obj: NoisyObjective, grid_index: int, k: int, rng=None) -> np.ndarray:
    """``k`` independent noisy evaluations at ``grid_index``."""
    if k < 1:
        raise InvalidArgumentError("k must be >= 1")
    if not 0 <= grid_index < obj.grid.m:
        raise InvalidArgumentError(f"grid index {grid_index} outside [0, {obj.grid.m})")
    f = obj.mean_values[grid_index]
    if obj.noise_std == 0:
        return np.full(k, f)
    return f + obj.noise_std * np.random.default_rng(rng).standard_normal(k)


def true_optimum(obj: NoisyObjective) -> tuple[int, float]:
    """Exhaustive argmin of the mean (first index on ties) and the minimum."""
    i = int(np.argmin(obj.mean_values))
    return i, float(obj.mean_values[i])
