import math

import numpy as np
import pytest

from iago.exceptions import InvalidArgumentError
from iago.gp_core import CandidateGrid, CovarianceSpec, GPPosterior, NoiseModel, ObservationSet, compute_posterior
from iago.minimizer_entropy import entropy_of_posterior
from iago.optimizer import (
    IAGO,
    IID,
    OptimizerConfig,
    RunAborted,
    Standardization,
    design_indices,
    estimate_optimum,
    initial_design,
    run,
)
from iago.testbed import NoisyObjective, make_res_surrogate, true_optimum

FAST = dict(paths=200, quad_order=7, restarts=2, refit_restarts=1)


def _count_calls(objective):
    calls = []

    def wrapped(i, k, rng):
        calls.append(k)
        return objective(i, k, rng)

    wrapped.grid = objective.grid
    wrapped.noise_variance = objective.noise_variance
    return wrapped, calls


# ---------------------------------------------------------------------------
# initial design


def test_initial_design_spread(grid51):
    obj, calls = _count_calls(make_res_surrogate())
    obs = initial_design(grid51, 11, 10, obj, rng=0)
    assert len(obs) == 11
    assert len(set(obs.indices.tolist())) == 11
    assert sum(calls) == 110
    assert np.all(obs.batch_counts == 10)
    assert obs.indices[0] == 0 and obs.indices[-1] == 50


def test_initial_design_single_batch_at_centre(grid51):
    obs = initial_design(grid51, 1, 10, make_res_surrogate(), rng=0)
    assert obs.indices.tolist() == [25]


def test_initial_design_deterministic(grid51):
    a = initial_design(grid51, 11, 10, make_res_surrogate(), rng=5)
    b = initial_design(grid51, 11, 10, make_res_surrogate(), rng=5)
    np.testing.assert_array_equal(a.values, b.values)
    np.testing.assert_array_equal(a.indices, b.indices)


def test_initial_design_too_many_batches():
    grid = CandidateGrid.linspace(0, 1, 5)
    with pytest.raises(InvalidArgumentError):
        initial_design(grid, 6, 1, NoisyObjective(grid, np.zeros(5), 1.0), rng=0)


def test_design_maximin_in_two_dimensions():
    xs = np.linspace(0, 1, 5)
    grid = CandidateGrid(np.array([(a, b) for a in xs for b in xs]))
    idx = design_indices(grid, 4)
    corners = {tuple(p) for p in grid.points[idx]}
    assert corners == {(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)}


# ---------------------------------------------------------------------------
# estimator


def _post(mean):
    m = len(mean)
    return GPPosterior(CandidateGrid(np.arange(m, dtype=float)), np.asarray(mean, float), np.eye(m))


def test_estimate_optimum_examples():
    assert estimate_optimum(_post([3, 1, 2])) == (1, 1.0)
    assert estimate_optimum(_post([2.5, 2.5, 2.5])) == (0, 2.5)


def test_estimate_optimum_destandardizes():
    assert estimate_optimum(_post([3, 1, 2]), Standardization(10.0, 2.0)) == (1, 12.0)


@pytest.mark.parametrize("offset,scale", [(0.0, 1.0), (0.68, 0.3), (-5.0, 17.0)])
def test_mhat_invariant_to_standardization_noise_free(offset, scale):
    obj = make_res_surrogate(0.0)
    std = Standardization(offset, scale)
    obs = ObservationSet(obj.grid, np.arange(51), std.forward(obj.mean_values), np.full(51, np.inf))
    post = compute_posterior(CovarianceSpec("matern52", 1.0, (0.1,)), NoiseModel(0.0), obs)
    i, mhat = estimate_optimum(post, std)
    assert (i, mhat) == (true_optimum(obj)[0], pytest.approx(true_optimum(obj)[1], abs=1e-9))


def test_standardization_round_trip():
    y = np.random.default_rng(0).normal(3, 2, 50)
    std = Standardization.from_values(y)
    np.testing.assert_allclose(std.backward(std.forward(y)), y, atol=1e-12)
    assert abs(std.forward(y).mean()) < 1e-12
    assert std.noise(0.09).variance == pytest.approx(0.09 / std.scale**2)


# ---------------------------------------------------------------------------
# run


def test_config_validation():
    with pytest.raises(InvalidArgumentError):
        OptimizerConfig(budget=25, actual_batch=10)
    with pytest.raises(InvalidArgumentError):
        OptimizerConfig(policy="random")
    with pytest.raises(InvalidArgumentError):
        OptimizerConfig(virtual_batch=0)
    cfg = OptimizerConfig(virtual_batch="inf", policy="iid")
    assert cfg.virtual_batch == math.inf and cfg.policy == IID
    assert OptimizerConfig.from_dict(cfg.to_dict()) == cfg


def test_zero_budget_has_initial_record_only():
    trace = run(OptimizerConfig(budget=0, **FAST), make_res_surrogate())
    assert trace.records == []
    assert trace.final is trace.initial and trace.initial.iteration == 0
    assert trace.metadata["raw_evaluations"] == 110
    assert len(trace.metadata["initial_indices"]) == 11


def test_iid_record_count_and_no_profiles():
    obj, calls = _count_calls(make_res_surrogate())
    trace = run(OptimizerConfig(budget=100, policy=IID, **FAST), obj)
    assert len(trace.records) == 10
    assert trace.metadata["profile_builds"] == 0
    assert sum(calls) == 110 + 100


def test_evaluation_count_and_trace_ranges():
    obj, calls = _count_calls(make_res_surrogate())
    cfg = OptimizerConfig(budget=60, actual_batch=5, init_batches=4, virtual_batch=10, **FAST)
    trace = run(cfg, obj)
    assert sum(calls) == 4 * 5 + 60 == trace.metadata["raw_evaluations"] == trace.final.evaluations
    assert len(trace.records) == cfg.iterations == 12
    assert trace.metadata["profile_builds"] == 12
    for rec in trace.records:
        assert len(rec.values) == 5
        assert 0 <= rec.H <= math.log(51) + 1e-12


def test_run_is_deterministic():
    cfg = OptimizerConfig(budget=40, seed=3, **FAST)
    a, b = run(cfg, make_res_surrogate()), run(cfg, make_res_surrogate())
    assert [r.to_dict() for r in a.records] == [r.to_dict() for r in b.records]


def test_entropy_reproducible_from_trace():
    obj = make_res_surrogate()
    trace = run(OptimizerConfig(budget=30, seed=8, **FAST), obj)
    for it in (0, 2, 3):
        rec = trace.at(it)
        post = trace.posterior(obj.grid, it)
        assert entropy_of_posterior(post, trace.config["paths"], rec.entropy_seed) == rec.H
        assert estimate_optimum(post, trace.standardization()) == (rec.xhat_index, rec.Mhat)


def test_noise_free_monotone_function_found():
    grid = CandidateGrid.linspace(0, 1, 5)
    obj = NoisyObjective(grid, [4.0, 3.0, 2.0, 1.5, 1.0], 0.0, "monotone")
    hits = 0
    for seed in range(20):
        cfg = OptimizerConfig(budget=3, actual_batch=1, init_batches=2, seed=seed, paths=300, quad_order=7)
        trace = run(cfg, obj)
        hits += trace.final.xhat_index == 4
    assert hits == 20


def test_run_aborts_with_partial_trace():
    base = make_res_surrogate()

    def broken(i, k, rng):
        values = base(i, k, rng)
        return values if broken.calls <= 13 else np.full(k, np.nan)

    def counting(i, k, rng):
        broken.calls += 1
        return broken(i, k, rng)

    broken.calls = 0
    counting.grid, counting.noise_variance = base.grid, base.noise_variance
    with pytest.raises(RunAborted) as info:
        run(OptimizerConfig(budget=50, policy=IID, **FAST), counting)
    trace = info.value.trace
    assert trace.initial is not None
    assert len(trace.records) == 2
    assert trace.metadata["raw_evaluations"] == 110 + 30


def test_policy_constants():
    assert OptimizerConfig().policy == IAGO
