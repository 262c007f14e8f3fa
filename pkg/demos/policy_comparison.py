"""
Entropy-driven sampling against uniform random sampling
=======================================================

A small version of the policy comparison: a handful of runs per policy on the
shallow-basin surrogate, then median entropy and location error at a few
checkpoints.  Use ``iago bench configs/policy_comparison.yaml`` for the
50-run version.
"""

import sys
from pathlib import Path

from iago.bench import bench, load_config

cfg = load_config(Path(__file__).resolve().parents[1] / "configs" / "policy_comparison.yaml")
runs = 2 if "--quick" in sys.argv else 6
if "--quick" in sys.argv:
    cfg["optimizer"].update(budget=100, paths=300)
    cfg["checkpoints"] = [0, 50, 100]

summary = bench(cfg, runs=runs)
names = [p["name"] for p in cfg["policies"]]

print(f"{runs} runs per policy, medians over runs\n")
print(f"{'n':>5}  " + "  ".join(f"{name + ' H':>12}  {name + ' err':>13}" for name in names))
for n in cfg["checkpoints"]:
    cells = [f"{summary.value(p, n, 'H'):12.3f}  {summary.value(p, n, 'xerr'):13.3f}" for p in names]
    print(f"{n:>5}  " + "  ".join(cells))
