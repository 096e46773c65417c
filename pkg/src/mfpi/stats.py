"""Low-level statistical primitives.

Smoothing kernels, the quantile check loss, a Kolmogorov-Smirnov uniformity
test, Student-t quantiles and empirical (order-statistic) quantiles.  All
functions here are pure and safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy import stats as _scipy_stats

WEIGHT_KINDS = ("epanechnikov", "gaussian-truncated")
CDF_KINDS = ("gaussian-cdf", "integrated-epanechnikov")

# Truncation point and contained mass of the truncated-gaussian weight kernel.
_TRUNC = 3.0
_TRUNC_MASS = float(special.ndtr(_TRUNC) - special.ndtr(-_TRUNC))
_SQRT_2PI = math.sqrt(2.0 * math.pi)


@dataclass(frozen=True)
class KernelSpec:
    """Kernel pair used by the conditional CDF smoother.

    ``weight_kind`` selects the covariate weight kernel w (a symmetric
    density integrating to one), ``cdf_kind`` the response smoother K
    (a proper CDF, nondecreasing with limits 0 and 1).
    """

    weight_kind: str = "epanechnikov"
    cdf_kind: str = "gaussian-cdf"

    def __post_init__(self) -> None:
        if self.weight_kind not in WEIGHT_KINDS:
            raise ValueError(f"unknown weight kernel {self.weight_kind!r}")
        if self.cdf_kind not in CDF_KINDS:
            raise ValueError(f"unknown cdf kernel {self.cdf_kind!r}")


DEFAULT_KERNEL = KernelSpec()


def kernel_weight(u, spec: KernelSpec = DEFAULT_KERNEL):
    """Weight-kernel density w(u).

    Vectorised over ``u``; returns 0 outside the kernel support.  The
    epanechnikov kernel is 0.75*(1 - u^2) on [-1, 1]; the truncated
    gaussian is the standard normal density restricted to [-3, 3] and
    renormalised to unit mass.
    """
    u = np.asarray(u, dtype=float)
    if spec.weight_kind == "epanechnikov":
        out = 0.75 * np.clip(1.0 - u * u, 0.0, None)
    else:  # gaussian-truncated
        dens = np.exp(-0.5 * u * u) / (_SQRT_2PI * _TRUNC_MASS)
        out = np.where(np.abs(u) <= _TRUNC, dens, 0.0)
    return out if out.ndim else float(out)


def smooth_cdf(v, spec: KernelSpec = DEFAULT_KERNEL):
    """Response-smoother CDF K(v), nondecreasing with K(0) = 0.5."""
    v = np.asarray(v, dtype=float)
    if spec.cdf_kind == "gaussian-cdf":
        out = special.ndtr(v)
    else:  # integrated-epanechnikov
        t = np.clip(v, -1.0, 1.0)
        out = 0.5 + 0.75 * t - 0.25 * t ** 3
    return out if out.ndim else float(out)


def check_loss(r, tau: float):
    """Quantile check loss rho_tau(r) = r * (tau - 1{r < 0})."""
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tau must be in (0, 1), got {tau}")
    r = np.asarray(r, dtype=float)
    out = r * (tau - (r < 0.0))
    return out if out.ndim else float(out)


def kolmogorov_pvalue(lam: float, terms: int = 100) -> float:
    """Asymptotic Kolmogorov survival probability at sqrt(n)*D = lam.

    Alternating series 2 * sum_k (-1)^(k-1) exp(-2 k^2 lam^2), truncated
    at ``terms`` and clipped to [0, 1].
    """
    if lam <= 0.0:
        return 1.0
    k = np.arange(1, terms + 1, dtype=float)
    s = 2.0 * np.sum((-1.0) ** (k - 1) * np.exp(-2.0 * (k * lam) ** 2))
    return float(min(1.0, max(0.0, s)))


def ks_uniform_test(sample) -> tuple[float, float]:
    """One-sample Kolmogorov-Smirnov test against Unif(0, 1).

    Returns the sup-distance D between the empirical CDF and the uniform
    CDF, and the p-value from the asymptotic Kolmogorov distribution
    evaluated at sqrt(n) * D.
    """
    arr = np.asarray(sample, dtype=float)
    if arr.size == 0:
        raise ValueError("ks_uniform_test requires a nonempty sample")
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("ks_uniform_test sample values must lie in [0, 1]")
    srt = np.sort(arr)
    n = arr.size
    i = np.arange(1, n + 1, dtype=float)
    d_plus = np.max(i / n - srt)
    d_minus = np.max(srt - (i - 1.0) / n)
    d = float(max(d_plus, d_minus))
    return d, kolmogorov_pvalue(math.sqrt(n) * d)


def t_quantile(p, df: int):
    """Student-t quantile; monotone in p, zero at p = 0.5."""
    if df < 1 or int(df) != df:
        raise ValueError(f"df must be a positive integer, got {df}")
    p_arr = np.asarray(p, dtype=float)
    if np.any(p_arr <= 0.0) or np.any(p_arr >= 1.0):
        raise ValueError("t_quantile requires p in (0, 1)")
    out = _scipy_stats.t.ppf(p_arr, int(df))
    return out if out.ndim else float(out)


def empirical_quantile(values, p: float) -> float:
    """Lower empirical quantile: order statistic at index ceil(p * n).

    Deterministic under ties; always returns an element of ``values``.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must be in (0, 1), got {p}")
    arr = np.sort(np.asarray(values, dtype=float))
    if arr.size == 0:
        raise ValueError("empirical_quantile requires nonempty values")
    idx = max(1, math.ceil(p * arr.size))
    return float(arr[idx - 1])
