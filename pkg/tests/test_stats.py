import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mfpi.stats import (
    KernelSpec,
    check_loss,
    empirical_quantile,
    kernel_weight,
    kolmogorov_pvalue,
    ks_uniform_test,
    smooth_cdf,
    t_quantile,
)

EPAN = KernelSpec("epanechnikov", "integrated-epanechnikov")
TGAUSS = KernelSpec("gaussian-truncated", "gaussian-cdf")


def test_kernel_spec_validation():
    with pytest.raises(ValueError):
        KernelSpec(weight_kind="triangular")
    with pytest.raises(ValueError):
        KernelSpec(cdf_kind="logistic")


def test_epanechnikov_values():
    assert kernel_weight(0.0) == pytest.approx(0.75)
    assert kernel_weight(2.0) == 0.0
    assert kernel_weight(0.5) == pytest.approx(0.5625)


@pytest.mark.parametrize("spec", [KernelSpec(), EPAN, TGAUSS])
def test_weight_kernel_unit_mass(spec):
    grid = np.linspace(-4.0, 4.0, 400001)
    mass = np.trapezoid(kernel_weight(grid, spec), grid)
    assert abs(mass - 1.0) < 1e-6


@settings(max_examples=200)
@given(st.floats(min_value=-50, max_value=50))
def test_weight_kernel_symmetry(u):
    for spec in (KernelSpec(), TGAUSS):
        assert kernel_weight(u, spec) == pytest.approx(kernel_weight(-u, spec))
        assert kernel_weight(u, spec) >= 0.0


def test_smooth_cdf_basic():
    assert smooth_cdf(0.0) == pytest.approx(0.5)
    assert smooth_cdf(np.inf) == pytest.approx(1.0)
    assert smooth_cdf(-np.inf) == pytest.approx(0.0)
    assert smooth_cdf(0.0, EPAN) == pytest.approx(0.5)
    assert smooth_cdf(1.5, EPAN) == 1.0
    assert smooth_cdf(-1.5, EPAN) == 0.0


def test_smooth_cdf_gaussian_quantile_vs_quadrature():
    # independent oracle: trapezoid integration of the normal density
    grid = np.linspace(-10.0, 1.6449, 300001)
    dens = np.exp(-0.5 * grid * grid) / math.sqrt(2 * math.pi)
    target = float(np.trapezoid(dens, grid))
    assert abs(smooth_cdf(1.6449) - target) < 1e-6
    assert abs(smooth_cdf(1.6449) - 0.95) < 1e-4


@pytest.mark.parametrize("spec", [KernelSpec(), EPAN])
def test_smooth_cdf_nondecreasing(spec):
    grid = np.linspace(-6.0, 6.0, 10_000)
    vals = smooth_cdf(grid, spec)
    assert np.all(np.diff(vals) >= 0.0)


def test_check_loss_values():
    assert check_loss(2.0, 0.3) == pytest.approx(0.6)
    assert check_loss(-1.0, 0.3) == pytest.approx(0.7)
    assert check_loss(0.0, 0.9) == 0.0


def test_check_loss_domain():
    with pytest.raises(ValueError):
        check_loss(1.0, 0.0)
    with pytest.raises(ValueError):
        check_loss(1.0, 1.2)


@settings(max_examples=200)
@given(
    st.floats(min_value=-100, max_value=100),
    st.floats(min_value=-100, max_value=100),
    st.floats(min_value=0.0, max_value=1.0),
    st.floats(min_value=0.01, max_value=0.99),
)
def test_check_loss_convex(r1, r2, lam, tau):
    mix = check_loss(lam * r1 + (1 - lam) * r2, tau)
    bound = lam * check_loss(r1, tau) + (1 - lam) * check_loss(r2, tau)
    assert mix <= bound + 1e-12


def test_ks_three_points():
    d, _ = ks_uniform_test([0.1, 0.5, 0.9])
    assert d == pytest.approx(7.0 / 30.0)


def test_ks_singleton():
    d, _ = ks_uniform_test([0.5])
    assert d == pytest.approx(0.5)


def test_ks_near_uniform_spacing():
    n = 100
    sample = np.arange(1, n + 1) / (n + 1)
    d, p = ks_uniform_test(sample)
    assert p > 0.99
    # verify against a direct evaluation of the truncated series
    lam = math.sqrt(n) * d
    k = np.arange(1, 101)
    series = 2.0 * np.sum((-1.0) ** (k - 1) * np.exp(-2.0 * (k * lam) ** 2))
    assert p == pytest.approx(min(1.0, max(0.0, series)))


def test_ks_domain_errors():
    with pytest.raises(ValueError):
        ks_uniform_test([])
    with pytest.raises(ValueError):
        ks_uniform_test([0.5, 1.4])
    with pytest.raises(ValueError):
        ks_uniform_test([-0.1, 0.5])


def test_kolmogorov_pvalue_limits():
    assert kolmogorov_pvalue(0.0) == 1.0
    assert kolmogorov_pvalue(5.0) < 1e-10


def test_t_quantile_values():
    assert t_quantile(0.5, 5) == pytest.approx(0.0, abs=1e-12)
    assert t_quantile(0.025, 1) == pytest.approx(math.tan(math.pi * (0.025 - 0.5)), abs=0.01)
    assert abs(t_quantile(0.975, 1000) - 1.962) < 0.005


def test_t_quantile_vs_density_quadrature():
    # integrate the closed-form t density up to the reported quantile
    df = 1000
    q = t_quantile(0.975, df)
    grid = np.linspace(0.0, q, 200001)
    c = math.exp(math.lgamma((df + 1) / 2) - math.lgamma(df / 2)) \
        / math.sqrt(df * math.pi)
    dens = c * (1 + grid * grid / df) ** (-(df + 1) / 2)
    mass = 0.5 + float(np.trapezoid(dens, grid))
    assert abs(mass - 0.975) < 1e-5


@settings(max_examples=100)
@given(st.floats(min_value=0.001, max_value=0.999), st.integers(min_value=1, max_value=200))
def test_t_quantile_antisymmetric(p, df):
    assert t_quantile(p, df) + t_quantile(1 - p, df) == pytest.approx(0.0, abs=1e-9)


def test_t_quantile_domain():
    with pytest.raises(ValueError):
        t_quantile(0.0, 5)
    with pytest.raises(ValueError):
        t_quantile(0.5, 0)


def test_empirical_quantile_values():
    assert empirical_quantile([1, 2, 3, 4], 0.5) == 2
    assert empirical_quantile([7.0], 0.01) == 7.0
    assert empirical_quantile([3, 1, 2], 0.99) == 3


def test_empirical_quantile_domain():
    with pytest.raises(ValueError):
        empirical_quantile([], 0.5)
    with pytest.raises(ValueError):
        empirical_quantile([1.0], 0.0)


@settings(max_examples=200)
@given(
    st.lists(st.floats(min_value=-1e6, max_value=1e6), min_size=1, max_size=40),
    st.floats(min_value=0.001, max_value=0.999),
    st.floats(min_value=0.001, max_value=0.999),
)
def test_empirical_quantile_membership_and_monotone(values, p1, p2):
    q1 = empirical_quantile(values, p1)
    q2 = empirical_quantile(values, p2)
    assert q1 in values
    if p1 <= p2:
        assert q1 <= q2
    else:
        assert q1 >= q2
