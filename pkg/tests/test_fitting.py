import numpy as np
import pytest

from hdgeom import fitting
from hdgeom.errors import NumericalError, ValidationError
from hdgeom.fitting import (TRACE_COLUMNS, FitConfig, FitTrace, central_difference,
                            compare_gradients, fit, gradcheck, parallelism_residual)
from hdgeom.losses import LossBreakdown, LossWeights
from hdgeom.synth import ScenarioConfig, generate_scenario, perturb


@pytest.fixture
def lanes():
    gt = generate_scenario(ScenarioConfig(kind="parallel", n_instances=4, n_points=10, seed=0))
    return gt, perturb(gt, 0.02, 1)


def test_fit_at_ground_truth_is_stationary(lanes):
    gt, _ = lanes
    final, trace = fit(gt, gt, FitConfig(iterations=20, record_every=5))
    assert np.array_equal(final.coords(), gt.coords())
    assert trace.iterations == [0, 5, 10, 15, 20]
    assert np.all(trace.column("pts") == 0.0) and np.all(trace.column("mAP") == 1.0)


def test_point_only_shrinks_point_loss(lanes):
    gt, init = lanes
    cfg = FitConfig(iterations=500, step_size=2e-5, weights=LossWeights.point_only())
    _, trace = fit(init, gt, cfg)
    pts = trace.column("pts")
    assert pts[-1] < pts[0] / 10


@pytest.mark.parametrize("step", [1e-3, 1e-4])
def test_total_loss_trends_down(lanes, step):
    gt, init = lanes
    _, trace = fit(init, gt, FitConfig(iterations=200, step_size=step, record_every=5))
    total = trace.column("total")
    window = len(total) // 4
    assert total[-window:].mean() < total[:window].mean()


def test_euclidean_fit_improves_parallelism(lanes):
    gt, init = lanes
    before = parallelism_residual(init, gt)
    final, _ = fit(init, gt, FitConfig(iterations=300, step_size=4e-6))
    assert parallelism_residual(final, gt) < before
    assert parallelism_residual(gt, gt) < 1e-9


def test_trace_csv_and_order():
    trace = FitTrace()
    trace.record(0, LossBreakdown(total=2.0), 0.5)
    trace.record(3, LossBreakdown(total=1.0), 0.75)
    with pytest.raises(ValueError):
        trace.record(3, LossBreakdown(), 1.0)
    lines = trace.to_csv().splitlines()
    assert lines[0] == ",".join(TRACE_COLUMNS)
    assert lines[2].startswith("3,") and lines[2].endswith(",0.75")


def test_config_validation():
    with pytest.raises(ValidationError):
        FitConfig(iterations=0)
    with pytest.raises(ValidationError):
        FitConfig(step_size=0.0)


def test_numerical_error_carries_trace(lanes, monkeypatch):
    gt, init = lanes
    real = fitting.loss_and_grad
    calls = {"n": 0}

    def flaky(*args, **kwargs):
        calls["n"] += 1
        if calls["n"] > 12:
            raise NumericalError("non-finite gradient at instance 0, point 0")
        return real(*args, **kwargs)

    monkeypatch.setattr(fitting, "loss_and_grad", flaky)
    with pytest.raises(NumericalError) as info:
        fit(init, gt, FitConfig(iterations=50, record_every=5))
    assert info.value.trace.iterations == [0, 5, 10]
    assert "iteration 12" in str(info.value)


def test_central_difference_quadratic():
    x = np.array([[1.0, -2.0], [0.5, 3.0]])
    g = central_difference(lambda y: float(np.sum(y ** 2)), x)
    assert np.allclose(g, 2 * x, rtol=1e-8)


def test_compare_gradients():
    ok, rel, small = compare_gradients(np.array([1.0, 1e-6]), np.array([1.0 + 1e-7, 1e-6 + 1e-9]))
    assert ok.all() and rel == pytest.approx(1e-7, rel=1e-3) and small == pytest.approx(1e-9, rel=1e-3)
    ok, _, _ = compare_gradients(np.array([1.0]), np.array([1.1]))
    assert not ok.any()


@pytest.mark.parametrize("seed", range(4))
def test_gradcheck_report(seed):
    report = gradcheck(seed)
    assert report.passed
    assert report.n_checked + report.n_skipped == 3 * 6 * 2
    assert report.max_rel_error <= 1e-5
