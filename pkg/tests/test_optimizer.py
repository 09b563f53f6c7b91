import json
from dataclasses import replace

import numpy as np
import pytest

from oatcontrol.dynamics import ControlProfile, ModelParams
from oatcontrol.measurement import build_noise_kernel
from oatcontrol.optimizer import (
    CfiObjective,
    OptimizationResult,
    OptimizerSettings,
    QfiObjective,
    ascend,
    ascend_with_scans,
    coordinate_scan,
    finite_diff_gradient,
    multi_start,
    objective_cfi,
    objective_qfi,
    restart_inits,
)
from oatcontrol.protocols import run_tnt


def richardson_gradient(f, x, h=1e-3):
    """Fourth-order central differences."""
    g = np.empty(x.size)
    for k in range(x.size):
        e = np.zeros(x.size)
        e[k] = h
        g[k] = (-f(x + 2 * e) + 8 * f(x + e) - 8 * f(x - e) + f(x - 2 * e)) / (12 * h)
    return g


def test_segment_objective_matches_plain_objective():
    params = ModelParams(20, 0.1)
    obj = QfiObjective(params)
    rng = np.random.default_rng(0)
    x = rng.uniform(-3, 3, 8)
    for k in [7, 3, 0, None]:
        y = x.copy()
        if k is not None:
            y[k] += 0.1
        assert obj(y) == pytest.approx(objective_qfi(params, ControlProfile(y)), rel=1e-12)


def test_cfi_objective_matches_plain_objective():
    params = ModelParams(20, 0.1)
    noise = build_noise_kernel(20, 2.0)
    x = np.random.default_rng(1).uniform(-3, 3, 6)
    obj = CfiObjective(params, 2.0)
    assert obj(x) == pytest.approx(objective_cfi(params, ControlProfile(x), noise), rel=1e-12)
    phi = obj.phase_offset(x)
    assert obj.scan(x)(phi)[0] == pytest.approx(obj(x), rel=1e-12)


def test_fd_gradient_matches_richardson_oracle():
    params = ModelParams(16, 0.2)
    obj = QfiObjective(params)
    x = np.random.default_rng(2).uniform(-2, 2, 6)
    assert np.allclose(finite_diff_gradient(obj, x, 1e-4), richardson_gradient(obj, x), rtol=1e-5, atol=1e-6)


@pytest.mark.parametrize("sigma", [0.0, 2.0])
def test_cfi_gradient_matches_richardson_oracle(sigma):
    obj = CfiObjective(ModelParams(16, 0.2), sigma)
    x = np.random.default_rng(5).uniform(-2, 2, 6)
    assert np.allclose(obj.gradient(x, 1e-4), richardson_gradient(obj, x), rtol=1e-5, atol=1e-6)


def test_ascent_on_quadratic():
    target = np.array([0.5, -2.0, 3.0])
    f = lambda x: -np.sum((x - target) ** 2)  # noqa: E731
    res = ascend(f, np.zeros(3), OptimizerSettings(lambda_bound=10.0))
    assert np.allclose(res.x, target, atol=1e-4)


def test_ascent_respects_box_and_is_monotone():
    f = lambda x: float(np.sum(x))  # noqa: E731
    res = ascend(f, np.zeros(4), OptimizerSettings(lambda_bound=2.5))
    assert np.allclose(res.x, 2.5)
    assert np.all(np.diff(res.trace) > 0)


def test_ascent_custom_bounds():
    f = lambda x: -np.sum((x - 5.0) ** 2)  # noqa: E731
    res = ascend(f, np.zeros(2), OptimizerSettings(), lower=[-1, -1], upper=[1, 3])
    assert np.allclose(res.x, [1, 3], atol=1e-6)


def test_restart_inits_anchors_and_bounds():
    s = OptimizerSettings(n_segments=5, n_restarts=6, lambda_bound=4.0, rng_seed=3)
    inits = restart_inits(s)
    assert np.array_equal(inits[0][1], np.ones(5))
    assert np.array_equal(inits[1][1], np.zeros(5))
    for _, x in inits[2:]:
        assert np.all(np.abs(x) <= 4.0)
    other = restart_inits(OptimizerSettings(n_segments=5, n_restarts=6, lambda_bound=4.0, rng_seed=4))
    assert not np.array_equal(inits[2][1], other[2][1])


def small_run(seed=0, workers=1):
    settings = OptimizerSettings(n_segments=6, n_restarts=4, max_iters=15, rng_seed=seed)
    return multi_start(QfiObjective(ModelParams(10, 0.2)), settings, n_workers=workers)


def test_multi_start_deterministic():
    a, b = small_run(), small_run()
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())
    assert np.array_equal(a.best_profile.segments, b.best_profile.segments)


def test_multi_start_independent_of_workers():
    a, b = small_run(), small_run(workers=2)
    assert json.dumps(a.to_dict()) == json.dumps(b.to_dict())


def test_multi_start_best_and_round_trip():
    res = small_run()
    assert res.best_objective == max(r.final_objective for r in res.restart_records)
    for rec in res.restart_records:
        assert rec.trace[-1] == rec.final_objective
        assert np.all(np.diff(rec.trace) > 0)
    again = OptimizationResult.from_dict(json.loads(json.dumps(res.to_dict())))
    assert again.best_profile == res.best_profile
    assert again.to_dict() == res.to_dict()


def test_single_anchor_restart_beats_tnt():
    params = ModelParams(30, 0.1)
    settings = OptimizerSettings(n_restarts=1, max_iters=10)
    res = multi_start(QfiObjective(params), settings)
    assert res.best_objective >= run_tnt(params, n_samples=2).fq_final


def test_cfi_multi_start_reports_phase():
    params = ModelParams(10, 0.2)
    res = multi_start(CfiObjective(params, 1.0), OptimizerSettings(n_segments=4, n_restarts=2, max_iters=5))
    assert res.phase_offset is not None
    assert -np.pi <= res.phase_offset < np.pi


def test_coordinate_scan_escapes_local_optimum():
    # two bumps in the last coordinate; plain ascent from 0 stops on the small one
    def f(x):
        return -np.sum(x[:-1] ** 2) + np.exp(-(x[-1] - 1) ** 2) + 3 * np.exp(-(x[-1] + 6) ** 2)

    settings = OptimizerSettings(n_segments=3, lambda_bound=10.0)
    plain = ascend(f, np.zeros(3), settings)
    assert plain.x[-1] == pytest.approx(1.0, abs=1e-3)
    scanned = ascend_with_scans(f, np.zeros(3), replace(settings, scan_points=41))
    assert scanned.x[-1] == pytest.approx(-6.0, abs=1e-3)
    assert scanned.value == pytest.approx(3.0, abs=1e-6)
    assert np.all(np.diff(scanned.trace) >= 0)
    unscanned = ascend_with_scans(f, np.zeros(3), settings)
    assert np.array_equal(unscanned.x, plain.x) and unscanned.trace == plain.trace


def test_coordinate_scan_unchanged_at_global_optimum():
    f = lambda x: -np.sum(x**2)  # noqa: E731
    x, v = coordinate_scan(f, np.zeros(2), 0.0, OptimizerSettings(n_segments=2, scan_points=5))
    assert v == 0.0 and np.array_equal(x, np.zeros(2))


def test_extra_inits():
    params = ModelParams(10, 0.2)
    settings = OptimizerSettings(n_segments=4, n_restarts=2, max_iters=20)
    x0 = np.array([0.5, 1.0, 1.5, 2.0])
    res = multi_start(QfiObjective(params), settings, extra_inits=[x0])
    assert res.restart_records[-1].init == x0.tolist()
    with pytest.raises(ValueError):
        multi_start(QfiObjective(params), settings, extra_inits=[np.ones(3)])


def test_settings_validation():
    with pytest.raises(ValueError):
        OptimizerSettings(scan_points=1)
    with pytest.raises(ValueError):
        OptimizerSettings(fd_step=0)
    with pytest.raises(ValueError):
        OptimizerSettings(backtrack=1.5)
    with pytest.raises(ValueError):
        OptimizerSettings(rng_seed=-1)
    s = OptimizerSettings(n_restarts=3)
    assert OptimizerSettings.from_dict(s.to_dict()) == s
