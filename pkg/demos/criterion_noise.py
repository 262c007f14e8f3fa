"""
How noisy is the criterion itself?
==================================

The criterion is a Monte-Carlo estimate.  Repeating it with fresh random
numbers gives a cloud of profiles; this script measures that cloud for several
virtual batch sizes ``K`` and prints the dispersion ratio

    rho(K) = mean over grid of the replicate sd / range of the mean profile.

Smaller is better: the profile shape stands out from its own noise.
"""

import sys
from pathlib import Path

import numpy as np

from iago.bench import criterion_noise_study, load_config

config = Path(__file__).resolve().parents[1] / "configs" / "criterion_noise.yaml"
cfg = load_config(config)
if "--quick" in sys.argv:
    cfg["criterion_noise"].update(replicates=5, paths=300)

report = criterion_noise_study(cfg)
print("fitted model:", report.fixture["spec"])
for K in report.K:
    prof = report.profiles[K]
    mean = prof.mean(axis=0)
    print(f"K = {str(K):>4}: rho = {report.rho[K]:7.3f}   "
          f"mean-profile range = {np.ptp(mean):.2e}   argmin of mean at index {int(np.argmin(mean))}")
