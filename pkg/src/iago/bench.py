"""Experiment harness: configuration, criterion-noise study, multi-run benchmark.

Configuration files are YAML documents validated against :data:`CONFIG_SCHEMA`.
Result files are deterministic functions of the configuration and the master
seed; wall-clock information only goes to a sidecar ``*.log`` file.
"""

from __future__ import annotations

import copy
import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np
import yaml

from .exceptions import InvalidArgumentError
from .gp_core import (
    CandidateGrid,
    CovarianceSpec,
    HyperparameterBounds,
    ObservationSet,
    compute_posterior,
    fit_hyperparameters,
    fuse_batch,
)
from .optimizer import OptimizerConfig, RunAborted, Standardization, _initial_batches, run
from .sur_criterion import check_batch_size, criterion_profile, format_batch_size, gauss_hermite
from .testbed import NoisyObjective, make_gp_draw_objective, make_res_surrogate, true_optimum

log = logging.getLogger(__name__)

PERCENTILE_LEVELS = (5, 25, 50, 75, 95)
SUMMARY_STATS = ("xhat", "xerr", "Mhat", "H")

_batch_size = {"oneOf": [{"type": "integer", "minimum": 1}, {"enum": ["inf", "+inf", "∞"]}]}

CONFIG_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "runs": {"type": "integer", "minimum": 1},
        "objective": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["res_surrogate", "gp_draw"]},
                "noise_std": {"type": "number", "minimum": 0},
                "family": {"enum": ["matern52", "matern32", "sqexp"]},
                "variance": {"type": "number", "exclusiveMinimum": 0},
                "lengthscale": {"type": "number", "exclusiveMinimum": 0},
                "grid": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {
                        "start": {"type": "number"},
                        "stop": {"type": "number"},
                        "m": {"type": "integer", "minimum": 2},
                    },
                    "required": ["start", "stop", "m"],
                },
                "seed": {"type": "integer", "minimum": 0},
            },
            "required": ["kind"],
        },
        "optimizer": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "budget": {"type": "integer", "minimum": 0},
                "actual_batch": {"type": "integer", "minimum": 1},
                "paths": {"type": "integer", "minimum": 1},
                "quad_order": {"type": "integer", "minimum": 1, "maximum": 64},
                "init_batches": {"type": "integer", "minimum": 1},
                "refit_every": {"type": "integer", "minimum": 0},
                "family": {"enum": ["matern52", "matern32", "sqexp"]},
                "restarts": {"type": "integer", "minimum": 0},
                "refit_restarts": {"type": "integer", "minimum": 0},
                "noise_variance": {"type": ["number", "null"], "minimum": 0},
                "variance_bounds": {
                    "type": "array",
                    "items": {"type": "number", "exclusiveMinimum": 0},
                    "minItems": 2,
                    "maxItems": 2,
                },
                "lengthscale_bounds": {
                    "type": ["array", "null"],
                    "items": {"type": "number", "exclusiveMinimum": 0},
                    "minItems": 2,
                    "maxItems": 2,
                },
            },
        },
        "policies": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "additionalProperties": False,
                "properties": {
                    "name": {"type": "string"},
                    "policy": {"enum": ["IAGO", "IID"]},
                    "virtual_batch": _batch_size,
                },
                "required": ["name", "policy"],
            },
        },
        "checkpoints": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "criterion_noise": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "K": {"type": "array", "items": _batch_size, "minItems": 1},
                "replicates": {"type": "integer", "minimum": 2},
                "paths": {"type": "integer", "minimum": 1},
                "quad_order": {"type": "integer", "minimum": 1, "maximum": 64},
                "init_batches": {"type": "integer", "minimum": 1},
                "actual_batch": {"type": "integer", "minimum": 1},
                "fixture_seed": {"type": "integer", "minimum": 0},
                "restarts": {"type": "integer", "minimum": 0},
                "noise_variance": {"type": ["number", "null"], "minimum": 0},
            },
        },
    },
}

DEFAULTS = {
    "seed": 0,
    "runs": 50,
    "objective": {"kind": "res_surrogate", "noise_std": 0.3},
    "optimizer": {
        "budget": 600,
        "actual_batch": 10,
        "paths": 1000,
        "quad_order": 15,
        "init_batches": 11,
        "refit_every": 1,
        "family": "matern52",
        "restarts": 5,
        "refit_restarts": 2,
        "noise_variance": None,
        "variance_bounds": [1e-4, 1e2],
        "lengthscale_bounds": None,
    },
    "policies": [
        {"name": "IID", "policy": "IID"},
        {"name": "IAGO-10", "policy": "IAGO", "virtual_batch": 10},
        {"name": "IAGO-inf", "policy": "IAGO", "virtual_batch": "inf"},
    ],
    "criterion_noise": {
        "K": [1, 10, 100, "inf"],
        "replicates": 15,
        "paths": 1000,
        "quad_order": 15,
        "init_batches": 11,
        "actual_batch": 10,
        "fixture_seed": 0,
        "restarts": 5,
        "noise_variance": None,
    },
}


class ConfigError(InvalidArgumentError):
    """The configuration file is malformed or fails validation."""


def _merge(base: dict, override: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = copy.deepcopy(value)
    return out


def resolve_config(raw: dict | None) -> dict:
    """Validate a configuration mapping and fill in defaults."""
    raw = {} if raw is None else raw
    try:
        jsonschema.validate(raw, CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"invalid configuration at {path}: {exc.message}") from None
    cfg = _merge(DEFAULTS, raw)
    names = [p["name"] for p in cfg["policies"]]
    if len(set(names)) != len(names):
        raise ConfigError("policy names must be unique")
    try:
        _optimizer_config(cfg, cfg["policies"][0], 0)
    except InvalidArgumentError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path) -> dict:
    """Read and resolve a YAML configuration file."""
    try:
        raw = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from None
    if raw is not None and not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping")
    return resolve_config(raw)


def make_objective(cfg: dict) -> NoisyObjective:
    o = cfg["objective"]
    if o["kind"] == "res_surrogate":
        return make_res_surrogate(o.get("noise_std", 0.3))
    g = o.get("grid", {"start": -1.0, "stop": 0.0, "m": 51})
    spec = CovarianceSpec(o.get("family", "matern52"), o.get("variance", 1.0), (o.get("lengthscale", 0.3),))
    grid = CandidateGrid.linspace(g["start"], g["stop"], g["m"])
    return make_gp_draw_objective(spec, grid, o.get("noise_std", 1.0), o.get("seed", 0))


def _optimizer_config(cfg: dict, policy: dict, seed: int, threads: int = 1) -> OptimizerConfig:
    opt = dict(cfg["optimizer"])
    return OptimizerConfig.from_dict(
        dict(
            opt,
            policy=policy["policy"],
            virtual_batch=policy.get("virtual_batch", 1),
            seed=seed,
            threads=threads,
        )
    )


def run_seed(master_seed: int, run_index: int) -> int:
    """Seed of run ``run_index``; shared by all policies (common random numbers)."""
    return int(np.random.SeedSequence(master_seed, spawn_key=(run_index,)).generate_state(1, np.uint64)[0])


def default_checkpoints(budget: int) -> list[int]:
    return sorted({0, budget // 4, budget // 2, 3 * budget // 4, budget})


# ---------------------------------------------------------------------------
# statistics


def percentiles(samples, levels=PERCENTILE_LEVELS) -> list[float]:
    """Linear-interpolation percentiles (the usual ``(n - 1) * q`` rule)."""
    x = np.asarray(samples, dtype=float).reshape(-1)
    if x.size == 0:
        raise InvalidArgumentError("percentiles of an empty sample")
    lv = np.asarray(levels, dtype=float)
    if np.any((lv < 0) | (lv > 100)):
        raise InvalidArgumentError("percentile levels must lie in [0, 100]")
    return [float(v) for v in np.percentile(x, lv, method="linear")]


# ---------------------------------------------------------------------------
# trace serialization


def trace_lines(trace, run_index: int, policy_name: str, true_x=None) -> list[dict]:
    """One JSON-ready record per iteration (iteration 0 is the initial design)."""
    out = []
    recs = [trace.initial] + list(trace.records) if trace.initial is not None else list(trace.records)
    init_evals = trace.initial.evaluations if trace.initial is not None else 0
    for r in recs:
        line = {
            "run": run_index,
            "iter": r.iteration,
            "n": r.evaluations - init_evals,
            "policy": policy_name,
            "chosen_index": r.chosen_index,
            "values": list(r.values),
            "xhat": r.xhat,
            "Mhat": r.Mhat,
            "H": r.H,
            "spec": r.spec,
        }
        if true_x is not None:
            line["xerr"] = float(np.max(np.abs(np.atleast_1d(r.xhat) - np.atleast_1d(true_x))))
        out.append(line)
    return out


def dumps_line(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), allow_nan=True)


def summarize(lines: list[dict], policies: list[str], checkpoints=None) -> list[dict]:
    """Percentile table over runs, per policy, checkpoint and statistic."""
    rows = []
    by_policy = {p: [ln for ln in lines if ln["policy"] == p] for p in policies}
    for p in policies:
        pl = by_policy[p]
        if not pl:
            continue
        ns = sorted({ln["n"] for ln in pl})
        cps = ns if checkpoints is None else [n for n in checkpoints if n in ns]
        for n in cps:
            at = [ln for ln in pl if ln["n"] == n]
            for stat in SUMMARY_STATS:
                if stat not in at[0]:
                    continue
                vals = [ln[stat] for ln in at]
                if isinstance(vals[0], list):
                    continue
                q = percentiles(vals)
                rows.append(dict(policy=p, checkpoint_n=n, stat=stat, **dict(zip(("p05", "p25", "p50", "p75", "p95"), q))))
    return rows


def summary_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    fields = ["policy", "checkpoint_n", "stat", "p05", "p25", "p50", "p75", "p95"]
    w = csv.DictWriter(buf, fieldnames=fields, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


def read_summary_csv(path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        row["checkpoint_n"] = int(row["checkpoint_n"])
        for k in ("p05", "p25", "p50", "p75", "p95"):
            row[k] = float(row[k])
    return rows


def read_traces(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


# ---------------------------------------------------------------------------
# multi-run benchmark


@dataclass
class BenchmarkSummary:
    """Percentile table plus the raw per-iteration records it was built from."""

    rows: list
    lines: list
    failures: list = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def value(self, policy: str, n: int, stat: str, level: str = "p50") -> float:
        for row in self.rows:
            if row["policy"] == policy and row["checkpoint_n"] == n and row["stat"] == stat:
                return row[level]
        raise KeyError((policy, n, stat))


def _bench_task(args):
    cfg, policy, run_index = args
    objective = make_objective(cfg)
    seed = run_seed(cfg["seed"], run_index)
    true_x = objective.grid.points[true_optimum(objective)[0]]
    true_x = float(true_x[0]) if objective.grid.d == 1 else [float(v) for v in true_x]
    try:
        trace = run(_optimizer_config(cfg, policy, seed), objective)
    except RunAborted as exc:
        return policy["name"], run_index, None, f"{type(exc.__cause__).__name__}: {exc}"
    return policy["name"], run_index, trace_lines(trace, run_index, policy["name"], true_x), None


def bench(cfg: dict, runs: int | None = None, checkpoints=None, workers: int = 1, order=None) -> BenchmarkSummary:
    """Run every policy ``runs`` times and summarize.

    Parameters
    ----------
    cfg : dict
        Resolved configuration (see :func:`resolve_config`).
    runs : int, optional
        Overrides ``cfg["runs"]``.
    checkpoints : list of int, optional
        Evaluation counts at which to summarize; defaults to ``cfg["checkpoints"]``
        or every iteration.
    workers : int
        Number of worker processes.  Results do not depend on it.
    order : sequence of int, optional
        Permutation of the task list, for testing schedule independence.
    """
    cfg = copy.deepcopy(cfg)
    if runs is not None:
        cfg["runs"] = runs
    if checkpoints is None:
        checkpoints = cfg.get("checkpoints")
    tasks = [(cfg, p, r) for p in cfg["policies"] for r in range(cfg["runs"])]
    if order is not None:
        tasks = [tasks[i] for i in order]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_bench_task, tasks))
    else:
        results = [_bench_task(t) for t in tasks]

    names = [p["name"] for p in cfg["policies"]]
    results.sort(key=lambda r: (names.index(r[0]), r[1]))
    lines, failures = [], []
    for name, run_index, run_lines, error in results:
        if error is not None:
            failures.append({"policy": name, "run": run_index, "error": error})
            log.warning("run %d of %s failed: %s", run_index, name, error)
        else:
            lines.extend(run_lines)
    rows = summarize(lines, names, checkpoints)
    return BenchmarkSummary(rows, lines, failures, cfg)


def write_bench(summary: BenchmarkSummary, out_dir) -> dict:
    """Write ``traces.jsonl``, ``summary.csv`` and ``bench.json`` into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "traces": out / "traces.jsonl",
        "summary": out / "summary.csv",
        "meta": out / "bench.json",
    }
    with open(paths["traces"], "w", encoding="utf-8", newline="\n") as fh:
        for line in summary.lines:
            fh.write(dumps_line(line) + "\n")
    paths["summary"].write_text(summary_csv(summary.rows), encoding="utf-8")
    meta = {
        "config": summary.config,
        "failures": summary.failures,
        "warning_count": len(summary.failures),
        "estimator": "argmin of posterior mean",
        "entropy_units": "nats",
        "objective_note": "synthetic analog",
    }
    paths["meta"].write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths


# ---------------------------------------------------------------------------
# criterion-noise study


@dataclass
class CriterionNoiseReport:
    """Replicate criterion profiles and their dispersion ratio per virtual batch size."""

    K: list
    profiles: dict
    rho: dict
    fixture: dict

    def to_dict(self) -> dict:
        return {
            "K": [format_batch_size(k) for k in self.K],
            "rho": {format_batch_size(k): self.rho[k] for k in self.K},
            "profiles": {format_batch_size(k): self.profiles[k].tolist() for k in self.K},
            "fixture": self.fixture,
            "entropy_units": "nats",
            "common_random_numbers": "one base path set per replicate, shared across candidates and nodes",
        }


def dispersion_ratio(profiles: np.ndarray) -> float:
    """Mean across-replicate sd divided by the range of the mean profile."""
    profiles = np.asarray(profiles, dtype=float)
    sd = profiles.std(axis=0, ddof=1).mean()
    mean = profiles.mean(axis=0)
    spread = mean.max() - mean.min()
    return float(sd / spread) if spread > 0 else math.inf


def criterion_fixture(cfg: dict):
    """Posterior after the initial design on the configured objective.

    Returns ``(posterior, noise_model, fixture_info)``, all in standardized units.
    """
    cn = cfg["criterion_noise"]
    objective = make_objective(cfg)
    grid = objective.grid
    noise_variance = cn.get("noise_variance")
    if noise_variance is None:
        noise_variance = objective.noise_variance
    seed = cn["fixture_seed"]
    batches = _initial_batches(
        grid, cn["init_batches"], cn["actual_batch"], objective, np.random.SeedSequence(seed, spawn_key=(0, 0))
    )
    std = Standardization.from_values(np.concatenate([v for _, v in batches]))
    noise = std.noise(noise_variance)
    obs = ObservationSet.from_observations(grid, [fuse_batch(std.forward(v), grid_index=i) for i, v in batches])
    opt = cfg["optimizer"]
    ell = opt.get("lengthscale_bounds")
    bounds = HyperparameterBounds(
        tuple(opt["variance_bounds"]),
        tuple(ell) if ell is not None else HyperparameterBounds.for_grid(grid).lengthscale,
    )
    spec = fit_hyperparameters(
        obs, grid, noise, bounds, cn["restarts"], np.random.SeedSequence(seed, spawn_key=(1, 0)), family=opt["family"]
    )
    post = compute_posterior(spec, noise, obs)
    info = {
        "objective": objective.label,
        "fixture_seed": seed,
        "indices": [int(i) for i, _ in batches],
        "values": [[float(y) for y in v] for _, v in batches],
        "standardization": {"offset": std.offset, "scale": std.scale},
        "noise_variance": noise_variance,
        "spec": spec.to_dict(),
    }
    return post, noise, info


def criterion_noise_study(cfg: dict, seed: int | None = None, threads: int = 1, fixture=None) -> CriterionNoiseReport:
    """Replicate criterion profiles for each configured virtual batch size.

    Replicate ``r`` uses the same seed for every ``K``, so with noise-free
    evaluations all ``K`` give identical profiles.
    """
    cn = cfg["criterion_noise"]
    master = cfg["seed"] if seed is None else seed
    post, noise, info = criterion_fixture(cfg) if fixture is None else fixture
    rule = gauss_hermite(cn["quad_order"])
    Ks = [check_batch_size(k) for k in cn["K"]]
    seeds = [run_seed(master, r) for r in range(cn["replicates"])]
    profiles, rho = {}, {}
    for K in Ks:
        profs = np.array(
            [criterion_profile(post, K, rule, cn["paths"], s, noise=noise, threads=threads).values for s in seeds]
        )
        profiles[K] = profs
        rho[K] = dispersion_ratio(profs)
    info = dict(info, replicate_seeds=seeds, paths=cn["paths"], quad_order=cn["quad_order"])
    return CriterionNoiseReport(Ks, profiles, rho, info)


def write_criterion_noise(report: CriterionNoiseReport, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {"report": out / "criterion_noise.json", "rho": out / "rho.csv"}
    paths["report"].write_text(json.dumps(report.to_dict(), sort_keys=True) + "\n", encoding="utf-8")
    lines = ["K,rho"] + [f"{format_batch_size(k)},{report.rho[k]!r}" for k in report.K]
    paths["rho"].write_text("\n".join(lines) + "\n", encoding="utf-8")
    return paths


# ---------------------------------------------------------------------------
# single run


def optimize(cfg: dict, seed: int | None = None, threads: int = 1, policy: str | None = None):
    """One run of one policy (the first configured one by default)."""
    pol = cfg["policies"][0]
    if policy is not None:
        matches = [p for p in cfg["policies"] if p["name"] == policy]
        if not matches:
            raise ConfigError(f"no policy named {policy!r}")
        pol = matches[0]
    objective = make_objective(cfg)
    trace = run(_optimizer_config(cfg, pol, cfg["seed"] if seed is None else seed, threads), objective)
    return pol["name"], trace, objective


def write_trace(name: str, trace, objective, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    true_x = objective.grid.points[true_optimum(objective)[0]]
    true_x = float(true_x[0]) if objective.grid.d == 1 else [float(v) for v in true_x]
    paths = {"trace": out / "trace.jsonl", "meta": out / "trace_meta.json"}
    with open(paths["trace"], "w", encoding="utf-8", newline="\n") as fh:
        for line in trace_lines(trace, 0, name, true_x):
            fh.write(dumps_line(line) + "\n")
    meta = {"config": trace.config, "metadata": trace.metadata}
    paths["meta"].write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths


def timed_log(out_dir, name: str, message: str) -> None:
    """Append a timestamped line to the sidecar log ``<name>.log``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / f"{name}.log", "a", encoding="utf-8") as fh:
        fh.write(f"{time.strftime('%Y-%m-%dT%H:%M:%S')} {message}\n")


__all__ = [
    "BenchmarkSummary",
    "CONFIG_SCHEMA",
    "ConfigError",
    "CriterionNoiseReport",
    "bench",
    "criterion_noise_study",
    "dispersion_ratio",
    "load_config",
    "optimize",
    "percentiles",
    "resolve_config",
    "summarize",
]

