"""
Posterior, minimizer entropy and the one-step criterion
=======================================================

Walks through one decision of the optimizer on the shallow-basin surrogate:
condition a Gaussian process on a few averaged batches, look at where the
minimizer probably is, then score every grid point by the entropy we expect
to have left after sampling it.
"""

import numpy as np

from iago import (
    CovarianceSpec,
    ObservationSet,
    compute_posterior,
    criterion_profile,
    fuse_batch,
    make_res_surrogate,
    minimizer_histogram,
    sample_paths,
    shannon_entropy,
)
from iago.optimizer import Standardization, design_indices

objective = make_res_surrogate()
grid = objective.grid
rng = np.random.default_rng(1)

# five batches of ten noisy evaluations, spread over [-1, 0]
batches = [(i, objective(i, 10, rng)) for i in design_indices(grid, 5)]
std = Standardization.from_values(np.concatenate([v for _, v in batches]))
obs = ObservationSet.from_observations(grid, [fuse_batch(std.forward(v), grid_index=i) for i, v in batches])
noise = std.noise(objective.noise_variance)

# a fixed, reasonable model; the optimizer refits it by maximum likelihood
spec = CovarianceSpec("matern52", 1.0, (0.3,))
post = compute_posterior(spec, noise, obs)

print("observed at x =", np.round(grid.points[obs.indices, 0], 2))
print("batch means    =", np.round(std.backward(obs.values), 3))
print("noise sd of a batch mean = %.3f" % (objective.noise_std / np.sqrt(10)))

# %%
# Where is the minimizer?  Draw conditional paths and histogram their argmins.
paths = sample_paths(post, 2000, rng=7)
dist = minimizer_histogram(paths)
top = np.argsort(dist.probabilities)[::-1][:5]
print("\nmost likely minimizers:")
for i in top:
    print(f"  x = {grid.points[i, 0]:+.2f}   p = {dist.probabilities[i]:.3f}")
print("entropy H = %.3f nats (uniform would be %.3f)" % (shannon_entropy(dist), np.log(grid.m)))

# %%
# The criterion: expected entropy after one more batch at each point.  With
# K = inf the hypothetical batch is noise free, with K = 10 it matches the
# real batch size.
for K in (10, np.inf):
    prof = criterion_profile(post, K, S=1000, rng=3, noise=noise)
    best = prof.argmin()
    print(f"\nK = {K}: next point x = {grid.points[best, 0]:+.2f}, "
          f"expected H = {prof.values[best]:.3f} (now {prof.base_entropy:.3f})")
