import math

import numpy as np
import pytest

from mfpi.cdf import EstimatorSpec, KernelCdf
from mfpi.conjecture import Decision, NullSpec, acceptance_rate
from mfpi.conjecture import test_conjecture as run_conjecture_test
from mfpi.coverage import draw_future_responses, gen_synthetic, true_model
from mfpi.intervals import MethodSpec, PredictionInterval, qe_interval


def oracle_spec(method="qe", **kw):
    return MethodSpec(method=method,
                      estimator=EstimatorSpec(kind="oracle", oracle=true_model(0.2)),
                      **kw)


def test_null_spec_validation():
    with pytest.raises(ValueError):
        NullSpec("between", 0.0)
    with pytest.raises(ValueError):
        NullSpec("point", math.inf)


def test_point_null_center_always_accepted():
    data = gen_synthetic(50, 0.2, 51)
    d = run_conjecture_test(data, [0.5], 0.05, NullSpec("point", 1.0), oracle_spec())
    itv = d.interval_used
    centre = 0.5 * (itv.lower + itv.upper)
    d2 = run_conjecture_test(data, [0.5], 0.05, NullSpec("point", centre), oracle_spec())
    assert not d2.reject


def test_at_least_rejects_above_bound():
    # hand-built decision logic: c = 2.0, y0 = 3.0 must reject
    itv = PredictionInterval(-math.inf, 2.0, 0.95, "QE")
    assert 3.0 > itv.upper
    data = gen_synthetic(50, 0.2, 52)
    d = run_conjecture_test(data, [0.5], 0.05, NullSpec("at-least", 3.0), oracle_spec())
    assert d.reject  # oracle upper bound at x_f=0.5 is ~1.8


def test_at_least_boundary_is_accepted():
    data = gen_synthetic(50, 0.2, 53)
    d = run_conjecture_test(data, [0.5], 0.05, NullSpec("at-least", 0.0), oracle_spec())
    bound = d.interval_used.upper
    d_eq = run_conjecture_test(data, [0.5], 0.05, NullSpec("at-least", bound), oracle_spec())
    assert not d_eq.reject


def test_at_least_oracle_normal_quantile():
    # predictive law at x_f = 0.5 is 1 + 0.2 sqrt(2) t5; the 95% bound is
    # about 1.58, so y0 = 1.7 must reject while y0 = 1.5 must not
    data = gen_synthetic(400, 0.2, 54)
    assert run_conjecture_test(data, [0.5], 0.05, NullSpec("at-least", 1.7),
                           oracle_spec()).reject
    assert not run_conjecture_test(data, [0.5], 0.05, NullSpec("at-least", 1.5),
                               oracle_spec()).reject


def test_at_most_mirror():
    data = gen_synthetic(100, 0.2, 55)
    d = run_conjecture_test(data, [0.5], 0.05, NullSpec("at-most", 0.2), oracle_spec())
    assert d.reject == (0.2 < d.interval_used.lower)
    assert d.interval_used.upper == math.inf


@pytest.mark.parametrize("method,estimator", [
    ("qe", EstimatorSpec(kind="kernel", h=0.2, h0=0.2)),
    ("cp", EstimatorSpec(kind="kernel", h=0.2, h0=0.2)),
    ("mfb", EstimatorSpec(kind="kernel", h=0.2, h0=0.2)),
])
def test_point_null_duality(method, estimator):
    data = gen_synthetic(40, 0.2, 56)
    spec = MethodSpec(method=method, estimator=estimator, b=150)
    from mfpi.intervals import build_interval

    itv = build_interval(data, [0.5], 0.1, "two", spec, seed=3)
    for y0 in np.linspace(itv.lower - 0.5, itv.upper + 0.5, 9):
        d = run_conjecture_test(data, [0.5], 0.1, NullSpec("point", float(y0)),
                            spec, seed=3)
        assert d.reject == (not itv.contains(float(y0)))


def test_size_control_under_oracle():
    # boundary null at the realised future value: false-rejection rate
    # equals alpha under the exact conditional law
    alpha = 0.05
    data = gen_synthetic(100, 0.2, 57)
    d0 = run_conjecture_test(data, [0.5], alpha, NullSpec("at-least", 0.0), oracle_spec())
    bound = d0.interval_used.upper
    reps = 2000
    y_f = draw_future_responses(reps, 0.2, 0.5, np.random.default_rng(58))
    rejects = np.sum(y_f > bound)
    rate = rejects / reps
    assert abs(rate - alpha) <= 3.0 * math.sqrt(alpha * (1 - alpha) / reps)


def test_acceptance_region_non_degenerate():
    # the point-null acceptance region is the two-sided interval; with a
    # consistent estimator it approaches the oracle width, never collapses
    oracle_itv = qe_interval(true_model(0.2), [0.5], 0.05)
    for n in (100, 1000, 10_000):
        data = gen_synthetic(n, 0.2, 59)
        h = 0.6 * n ** (-0.2)
        model = KernelCdf(data, h, h)
        width = qe_interval(model, [0.5], 0.05).width
        assert width >= 0.5 * oracle_itv.width


def test_acceptance_rate_values():
    itv = PredictionInterval(0.0, 1.0, 0.9, "QE")
    null = NullSpec("point", 0.5)
    mk = lambda rej: Decision(rej, itv, 0.1, "qe", null)
    assert acceptance_rate([mk(False), mk(False), mk(False), mk(True)]) == 0.75
    assert acceptance_rate([mk(True), mk(True)]) == 0.0
    with pytest.raises(ValueError):
        acceptance_rate([])


def test_acceptance_rate_binomial_calibration():
    # 1000 boundary nulls under the truth at alpha = 0.1
    alpha = 0.1
    data = gen_synthetic(60, 0.2, 60)
    d0 = run_conjecture_test(data, [0.5], alpha, NullSpec("at-least", 0.0), oracle_spec())
    bound = d0.interval_used.upper
    y_f = draw_future_responses(1000, 0.2, 0.5, np.random.default_rng(61))
    itv = d0.interval_used
    decisions = [Decision(float(y) > bound, itv, alpha, "qe",
                          NullSpec("at-least", float(y))) for y in y_f]
    assert acceptance_rate(decisions) == pytest.approx(0.90, abs=0.03)
