"""Conditional CDF estimation and inversion.

Two fitted estimators (a product-kernel smoother and a linear
quantile-regression table), a parametric reference law for oracle
experiments, PIT rank computation and KS-driven bandwidth selection.
Fitted models are immutable; callers may share them across threads.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .stats import (
    DEFAULT_KERNEL,
    KernelSpec,
    check_loss,
    kernel_weight,
    ks_uniform_test,
    smooth_cdf,
)

RANK_CLIP = 1e-6
BISECT_REL_TOL = 1e-8
DEFAULT_TAU_GRID = tuple(np.round(np.arange(1, 100) * 0.01, 2))
BANDWIDTH_FACTORS = tuple(np.round(np.arange(1, 11) * 0.05, 2))


class OutOfSupportError(ValueError):
    """A covariate carries zero kernel mass under the fitted model."""


class FitError(RuntimeError):
    """An iterative fit failed to converge."""


class BandwidthSelectionError(RuntimeError):
    """No bandwidth pair on the grid produced a usable fit."""


@dataclass(frozen=True)
class Dataset:
    """Immutable paired sample: covariates x (n, d) and responses y (n,)."""

    x: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        y = np.asarray(self.y, dtype=float).ravel()
        if x.ndim != 2 or x.shape[0] != y.shape[0]:
            raise ValueError("x and y must have equal row counts")
        if x.shape[0] < 1 or x.shape[1] < 1:
            raise ValueError("dataset must have n >= 1 rows and d >= 1 columns")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
            raise ValueError("dataset entries must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def d(self) -> int:
        return self.x.shape[1]

    def drop(self, i: int) -> "Dataset":
        keep = np.arange(self.n) != i
        return Dataset(self.x[keep], self.y[keep])


def load_dataset_csv(path) -> Dataset:
    """Read a dataset CSV with header ``x1,..,xd,y`` ('.' decimal, UTF-8)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[-1].strip() != "y":
            raise ValueError(f"{path}: expected header columns x1..xd,y")
        rows = [[float(cell) for cell in row] for row in reader if row]
    if not rows:
        raise ValueError(f"{path}: no data rows")
    arr = np.asarray(rows, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{path}: NaN or infinite entries are not allowed")
    return Dataset(arr[:, :-1], arr[:, -1])


@dataclass(frozen=True)
class RankVector:
    """PIT ranks of a sample under a fitted conditional CDF."""

    u: np.ndarray
    variant: str  # "plugin" | "delete-one"

    def __post_init__(self) -> None:
        u = np.clip(np.asarray(self.u, dtype=float), RANK_CLIP, 1.0 - RANK_CLIP)
        object.__setattr__(self, "u", u)


def _as_point(x, d: int) -> np.ndarray:
    pt = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    if pt.shape[0] != d:
        raise ValueError(f"covariate has dimension {pt.shape[0]}, expected {d}")
    return pt


def _bisect_mixture(comp: np.ndarray, weights: np.ndarray, ps: np.ndarray,
                    lo: np.ndarray, hi: np.ndarray, h0: float,
                    spec: KernelSpec, full_range: float) -> np.ndarray:
    """Column-wise bisection inverse of a smoothed mixture CDF.

    ``comp`` broadcasts against ``weights`` (k, m); column j defines the
    mixture inverted at level ps[j] on the bracket [lo[j], hi[j]].
    Returns the upper bisection endpoint so the CDF at the result is
    >= p up to the bracket truncation.
    """
    wn = weights / weights.sum(axis=0, keepdims=True)
    tol = BISECT_REL_TOL * max(full_range, 1e-300)
    lo = np.array(lo, dtype=float)
    hi = np.array(hi, dtype=float)
    width = float(np.max(hi - lo)) if ps.size else 0.0
    iters = max(1, math.ceil(math.log2(max(width / tol, 2.0))))
    comp_scaled = np.asarray(comp) / h0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        f = np.einsum("im,im->m", wn,
                      smooth_cdf(mid[None, :] / h0 - comp_scaled, spec))
        ge = f >= ps
        hi = np.where(ge, mid, hi)
        lo = np.where(ge, lo, mid)
    return hi


class KernelCdf:
    """Product-kernel conditional CDF smoother.

    F(y | x) = sum_i W_h(X_i, x) K((y - Y_i) / h0) / sum_i W_h(X_i, x),
    where W_h is the product of per-coordinate weight kernels at scale h
    and K is the response smoother at scale h0.  Quantiles are found by
    bisection on [min(Y) - 3 h0, max(Y) + 3 h0].
    """

    def __init__(self, data: Dataset, h: float, h0: float,
                 spec: KernelSpec = DEFAULT_KERNEL):
        if h <= 0 or h0 <= 0:
            raise ValueError("bandwidths must be positive")
        self.data = data
        self.h = float(h)
        self.h0 = float(h0)
        self.spec = spec
        self.bracket = (float(data.y.min() - 3.0 * h0),
                        float(data.y.max() + 3.0 * h0))
        self._design_w: np.ndarray | None = None
        self._table: tuple[np.ndarray, np.ndarray] | None = None
        self._bands: tuple | None = None

    # -- weights ---------------------------------------------------------

    def raw_weights(self, xs: np.ndarray) -> np.ndarray:
        """Unnormalised kernel weights, shape (n_train, m_eval)."""
        xs = np.asarray(xs, dtype=float)
        if xs.ndim == 1:
            xs = xs[:, None]
        u = (self.data.x[:, None, :] - xs[None, :, :]) / self.h
        return kernel_weight(u, self.spec).prod(axis=2)

    def weights_at(self, x) -> np.ndarray:
        pt = _as_point(x, self.data.d)
        w = self.raw_weights(pt[None, :])[:, 0]
        if w.sum() <= 0.0:
            raise OutOfSupportError(
                f"covariate {pt.tolist()} is outside the kernel support "
                f"(bandwidth h={self.h})")
        return w

    def design_weight_matrix(self) -> np.ndarray:
        if self._design_w is None:
            self._design_w = self.raw_weights(self.data.x)
        return self._design_w

    # -- evaluation ------------------------------------------------------

    def cdf_batch(self, ys, x) -> np.ndarray:
        ys = np.asarray(ys, dtype=float).ravel()
        w = self.weights_at(x)
        k = smooth_cdf((ys[None, :] - self.data.y[:, None]) / self.h0, self.spec)
        return (w @ k) / w.sum()

    def cdf(self, y: float, x) -> float:
        return float(self.cdf_batch(np.array([y]), x)[0])

    def cdf_given_rows(self, ys, xs) -> np.ndarray:
        """Evaluate F(ys[j] | xs[j]) row-wise."""
        ys = np.asarray(ys, dtype=float).ravel()
        w = self.raw_weights(xs)
        den = w.sum(axis=0)
        bad = np.nonzero(den <= 0.0)[0]
        if bad.size:
            pt = np.atleast_2d(np.asarray(xs, dtype=float))[bad[0]]
            raise OutOfSupportError(
                f"covariate {np.ravel(pt).tolist()} is outside the kernel support")
        k = smooth_cdf((ys[None, :] - self.data.y[:, None]) / self.h0, self.spec)
        return (w * k).sum(axis=0) / den

    # -- inversion -------------------------------------------------------

    def _invert(self, weights: np.ndarray, ps: np.ndarray,
                lo: np.ndarray | None = None,
                hi: np.ndarray | None = None) -> np.ndarray:
        ps = np.asarray(ps, dtype=float).ravel()
        glo, ghi = self.bracket
        if lo is None:
            lo = np.full(ps.shape, glo)
            hi = np.full(ps.shape, ghi)
        return _bisect_mixture(self.data.y[:, None], weights, ps, lo, hi,
                               self.h0, self.spec, ghi - glo)

    def quantile(self, p: float, x) -> float:
        if not 0.0 < p < 1.0:
            raise ValueError(f"p must be in (0, 1), got {p}")
        w = self.weights_at(x)
        return float(self._invert(w[:, None], np.array([p]))[0])

    def quantile_many(self, ps, x) -> np.ndarray:
        """Quantiles at several levels, one conditioning point."""
        ps = np.asarray(ps, dtype=float).ravel()
        w = self.weights_at(x)
        return self._invert(np.repeat(w[:, None], ps.size, axis=1), ps)

    def quantile_batch(self, ps, xs, *, weights=None, bracket=None) -> np.ndarray:
        """Row-wise quantiles: level ps[j] at conditioning point xs[j]."""
        ps = np.asarray(ps, dtype=float).ravel()
        if weights is None:
            weights = self.raw_weights(xs)
        den = weights.sum(axis=0)
        bad = np.nonzero(den <= 0.0)[0]
        if bad.size:
            pt = np.atleast_2d(np.asarray(xs, dtype=float))[bad[0]]
            raise OutOfSupportError(
                f"covariate {np.ravel(pt).tolist()} is outside the kernel support")
        lo, hi = bracket if bracket is not None else (None, None)
        return self._invert(weights, ps, lo, hi)

    def cdf_table(self, grid_size: int = 1024) -> tuple[np.ndarray, np.ndarray]:
        """Per-design-point CDF values on a y-grid, cached, shape (n, g).

        Used to pre-bracket bootstrap inversions; the grid spans the
        bisection bracket so any lookup cell contains the true root.
        """
        if self._table is None or self._table[1].shape[1] != grid_size:
            glo, ghi = self.bracket
            grid = np.linspace(glo, ghi, grid_size)
            kmat = smooth_cdf(
                (grid[:, None] - self.data.y[None, :]) / self.h0, self.spec)
            w = self.design_weight_matrix()
            wn = w / w.sum(axis=0, keepdims=True)
            self._table = (grid, np.ascontiguousarray((kmat @ wn).T))
        return self._table

    def bracket_from_table(self, ps, idx) -> tuple[np.ndarray, np.ndarray]:
        grid, table = self.cdf_table()
        g = grid.size
        pos = (table[idx] < np.asarray(ps)[:, None]).sum(axis=1)
        lo = grid[np.clip(pos - 1, 0, g - 1)]
        hi = grid[np.clip(pos, 0, g - 1)]
        return lo, hi

    def _band_cache(self):
        """Sorted-x band structure for d = 1 (bounded-support weights)."""
        if self._bands is None:
            order = np.argsort(self.data.x[:, 0], kind="stable")
            xs = self.data.x[order, 0]
            radius = 1.0 if self.spec.weight_kind == "epanechnikov" else 3.0
            span = radius * self.h
            lo = np.searchsorted(xs, self.data.x[:, 0] - span, side="left")
            hi = np.searchsorted(xs, self.data.x[:, 0] + span, side="right")
            self._bands = (order, xs, self.data.y[order], lo, hi)
        return self._bands

    def draw_inverse_at_design(self, ps, idx) -> np.ndarray:
        """F^{-1}(ps[j] | X[idx[j]]) batched over design-point indices.

        For univariate covariates the bounded weight support restricts
        each column to a contiguous band of x-sorted rows, which cuts the
        bisection cost; otherwise falls back to dense columns.  Brackets
        come from the cached CDF table.
        """
        ps = np.asarray(ps, dtype=float).ravel()
        idx = np.asarray(idx, dtype=int)
        lo_h, hi_h = self.bracket_from_table(ps, idx)
        if self.data.d != 1:
            w = self.design_weight_matrix()[:, idx]
            return self._invert(w, ps, lo_h, hi_h)
        _, xs, ys, band_lo, band_hi = self._band_cache()
        blo = band_lo[idx]
        width = band_hi[idx] - blo
        maxw = int(width.max())
        rel = np.arange(maxw)[:, None]
        rows = np.minimum(blo[None, :] + rel, xs.size - 1)
        w = kernel_weight((xs[rows] - self.data.x[idx, 0][None, :]) / self.h,
                          self.spec)
        w[rel >= width[None, :]] = 0.0
        glo, ghi = self.bracket
        return _bisect_mixture(ys[rows], w, ps, lo_h, hi_h, self.h0,
                               self.spec, ghi - glo)

    # -- ranks and refits --------------------------------------------------

    def plugin_ranks(self) -> RankVector:
        u = self.cdf_given_rows(self.data.y, self.data.x)
        return RankVector(u, "plugin")

    def delete_one_ranks(self) -> RankVector:
        if self.data.n < 2:
            raise ValueError("delete-one ranks require n >= 2")
        w = self.design_weight_matrix().copy()
        np.fill_diagonal(w, 0.0)
        den = w.sum(axis=0)
        bad = np.nonzero(den <= 0.0)[0]
        if bad.size:
            raise OutOfSupportError(
                f"covariate {self.data.x[bad[0]].tolist()} has no neighbours "
                "within the kernel support")
        yt = self.data.y
        k = smooth_cdf((yt[None, :] - yt[:, None]) / self.h0, self.spec)
        u = (w * k).sum(axis=0) / den
        return RankVector(u, "delete-one")

    def refit(self, data: Dataset) -> "KernelCdf":
        return KernelCdf(data, self.h, self.h0, self.spec)


def _lad_style_init(design: np.ndarray, y: np.ndarray) -> np.ndarray:
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    return beta


ANNEAL_DELTAS = (1e-2, 1e-3, 1e-4, 1e-5, 1e-6)


def bounding_line(x: np.ndarray, y: np.ndarray, upper: bool) -> np.ndarray:
    """L1-optimal bounding line: the convex-hull edge spanning mean(x).

    Among lines with no data point strictly beyond them, this one
    minimises the summed distance to the data; it is the limit of the
    check-loss fits as tau approaches 1 (upper) or 0 (lower).
    """
    order = np.argsort(x, kind="stable")
    xs, ys = x[order], y[order]
    sign = 1.0 if upper else -1.0
    hull: list[tuple[float, float]] = []
    for xi, yi in zip(xs, ys):
        while len(hull) >= 2:
            (x1, y1), (x2, y2) = hull[-2], hull[-1]
            if (x2 - x1) * (sign * yi - sign * y1) \
                    - (sign * y2 - sign * y1) * (xi - x1) >= 0:
                hull.pop()
            else:
                break
        # keep only the extreme response at duplicated abscissae
        if hull and hull[-1][0] == xi:
            if sign * yi > sign * hull[-1][1]:
                hull[-1] = (xi, yi)
            continue
        hull.append((xi, yi))
    xbar = float(np.mean(x))
    for (x1, y1), (x2, y2) in zip(hull, hull[1:]):
        if x1 <= xbar <= x2:
            slope = (y2 - y1) / (x2 - x1)
            return np.array([y1 - slope * x1, slope])
    extreme = ys.max() if upper else ys.min()
    return np.array([extreme, 0.0])


def _vertex_polish_p2(design: np.ndarray, y: np.ndarray, taus: np.ndarray,
                      beta: np.ndarray) -> np.ndarray:
    """Vectorised vertex polish for intercept-plus-slope designs.

    Candidates per tau: lines through pairs of the four smallest-residual
    points, plus the two bounding lines (which are the exact optima for
    extreme tau once n * min(tau, 1 - tau) < 1).
    """
    x = design[:, 1]
    r = y[:, None] - design @ beta.T  # (n, G)
    order = np.argsort(np.abs(r), axis=0)[:4]  # (4, G)
    pair_a, pair_b = zip(*((a, b) for a in range(4) for b in range(a + 1, 4)))
    ia = order[list(pair_a)]  # (6, G)
    ib = order[list(pair_b)]
    dx = x[ib] - x[ia]
    with np.errstate(divide="ignore", invalid="ignore"):
        slope = (y[ib] - y[ia]) / dx
    intercept = y[ia] - slope * x[ia]
    bad = ~np.isfinite(slope)
    slope = np.where(bad, 0.0, slope)
    intercept = np.where(bad, 0.0, intercept)
    lo_line = bounding_line(x, y, upper=False)
    hi_line = bounding_line(x, y, upper=True)
    # bounding lines first so argmin ties resolve to the coherent extreme fit
    intercept = np.vstack([np.full((2, taus.size), np.nan), intercept])
    slope = np.vstack([np.full((2, taus.size), np.nan), slope])
    intercept[0], slope[0] = lo_line[0], lo_line[1]
    intercept[1], slope[1] = hi_line[0], hi_line[1]
    bad = np.vstack([np.zeros((2, taus.size), dtype=bool), bad])
    res = y[:, None, None] - intercept[None] - slope[None] * x[:, None, None]
    loss = (res * (taus[None, None, :] - (res < 0.0))).sum(axis=0)  # (8, G)
    loss[bad] = np.inf
    current = (r * (taus[None, :] - (r < 0.0))).sum(axis=0)  # (G,)
    best = np.argmin(loss, axis=0)
    cols = np.arange(taus.size)
    improve = loss[best, cols] < current
    beta[improve, 0] = intercept[best[improve], cols[improve]]
    beta[improve, 1] = slope[best[improve], cols[improve]]
    return beta


def _vertex_polish(design: np.ndarray, y: np.ndarray, taus: np.ndarray,
                   beta: np.ndarray) -> np.ndarray:
    """Snap each tau's solution to the best nearby interpolating vertex.

    A check-loss optimum interpolates p observations, so candidate
    vertices are solved from the points with the smallest residuals and
    kept only when they strictly lower the exact objective.
    """
    from itertools import combinations

    n, p = design.shape
    if n <= p:
        return beta
    if p == 2:
        return _vertex_polish_p2(design, y, taus, beta)
    r = y[:, None] - design @ beta.T  # (n, G)
    order = np.argsort(np.abs(r), axis=0)
    pool_size = min(2 * p, n)
    for g in range(taus.size):
        tau = float(taus[g])
        pool = order[:pool_size, g].tolist()
        best_obj = float(np.sum(check_loss(r[:, g], tau)))
        best_beta = None
        for count, sub in enumerate(combinations(pool, p)):
            if count >= 70:
                break
            rows = list(sub)
            try:
                cand = np.linalg.solve(design[rows], y[rows])
            except np.linalg.LinAlgError:
                continue
            obj = float(np.sum(check_loss(y - design @ cand, tau)))
            if obj < best_obj:
                best_obj = obj
                best_beta = cand
        if best_beta is not None:
            beta[g] = best_beta
    return beta


PAIR_EXACT_MAX_N = 120


def _fit_check_loss_pairs(design: np.ndarray, y: np.ndarray,
                          taus: np.ndarray) -> np.ndarray:
    """Exact check-loss optimum for intercept-plus-slope designs.

    Some optimal line interpolates two observations, so enumerating all
    pair lines solves the LP exactly.  The per-pair loss is affine in
    tau (tau * sum(r) - sum(negative part of r)), so one residual pass
    serves the whole tau grid.
    """
    x = design[:, 1]
    n = x.size
    ia, ib = np.triu_indices(n, k=1)
    keep = x[ib] != x[ia]
    ia, ib = ia[keep], ib[keep]
    if ia.size == 0:
        # all abscissae equal: intercept-only fit, slope irrelevant
        srt = np.sort(y)
        idx = np.minimum(np.ceil(taus * n).astype(int), n) - 1
        return np.column_stack([srt[np.maximum(idx, 0)], np.zeros(taus.size)])
    slope = (y[ib] - y[ia]) / (x[ib] - x[ia])
    intercept = y[ia] - slope * x[ia]
    res = y[:, None] - (intercept[None, :] + slope[None, :] * x[:, None])
    s1 = res.sum(axis=0)
    s2 = (res * (res < 0.0)).sum(axis=0)
    loss = taus[:, None] * s1[None, :] - s2[None, :]  # (G, pairs)
    best = np.argmin(loss, axis=1)
    return np.column_stack([intercept[best], slope[best]])


def fit_check_loss(design: np.ndarray, y: np.ndarray, taus: np.ndarray,
                   max_iter: int = 100, obj_rtol: float = 1e-9) -> np.ndarray:
    """Minimise the check loss for every tau.

    Small univariate problems are solved exactly by pair enumeration.
    Otherwise the loss is smoothed as (tau - 1/2) r + sqrt(r^2 + delta^2)/2
    with delta annealed 1e-2 -> 1e-6 and minimised by iteratively
    reweighted least squares (each step majorises the smoothed objective,
    so stages stop when the improvement stalls), followed by a vertex
    polish that replaces each tau's solution by the best interpolating
    basis found near it.  Returns coefficients of shape (len(taus), p).
    """
    taus = np.asarray(taus, dtype=float).ravel()
    n, p = design.shape
    if p == 2 and n <= PAIR_EXACT_MAX_N:
        return _fit_check_loss_pairs(design, y, taus)
    beta = np.tile(_lad_style_init(design, y), (taus.size, 1))
    col_sum = design.sum(axis=0)
    half = taus - 0.5
    ridge = 1e-12 * np.eye(p)
    for delta in ANNEAL_DELTAS:
        d2 = delta * delta
        prev_obj = None
        for _ in range(max_iter):
            r = y[:, None] - design @ beta.T  # (n, G)
            root = np.sqrt(r * r + d2)
            obj = (half[None, :] * r + 0.5 * root).sum(axis=0)
            if prev_obj is not None and float(np.max(prev_obj - obj)) \
                    <= obj_rtol * (1.0 + float(np.abs(obj).max())):
                break
            prev_obj = obj
            s = 1.0 / root
            a = np.einsum("ip,ig,iq->gpq", design, s, design) + ridge[None]
            b = (design.T @ (s * y[:, None])).T \
                + (2.0 * taus - 1.0)[:, None] * col_sum[None, :]
            beta = np.linalg.solve(a, b[:, :, None])[:, :, 0]
        if not np.all(np.isfinite(beta)):
            raise FitError(
                f"quantile fit diverged (delta={delta}, n={n}, p={p}, "
                f"taus={taus.size})")
    return _vertex_polish(design, y, taus, beta)


class QuantileRegressionCdf:
    """Linear-in-covariates conditional quantile table and implied CDF.

    Per tau on the grid, coefficients minimise the sample check loss; at
    evaluation the per-point quantile curve is monotonised by sorting
    across tau, and the CDF is the discretised occupation measure
    (1/G) * sum_tau 1{q(tau | x) <= y}.  The indicator is evaluated with
    a small tolerance so observations interpolated by a fitted quantile
    count as at-or-below it despite solver round-off.
    """

    CMP_EPS = 1e-9

    def __init__(self, data: Dataset, tau_grid=None):
        taus = np.asarray(tau_grid if tau_grid is not None else DEFAULT_TAU_GRID,
                          dtype=float)
        if taus.ndim != 1 or taus.size < 1 or np.any(np.diff(taus) <= 0):
            raise ValueError("tau grid must be ascending and nonempty")
        if np.any(taus <= 0.0) or np.any(taus >= 1.0):
            raise ValueError("tau grid values must lie in (0, 1)")
        if data.n <= data.d + 1:
            raise ValueError("quantile regression requires n > d + 1")
        self.data = data
        self.taus = taus
        design = np.column_stack([np.ones(data.n), data.x])
        self.beta = fit_check_loss(design, data.y, taus)

    def _thresholds(self, ys: np.ndarray) -> np.ndarray:
        """Comparison thresholds y + eps, passing infinities through."""
        finite = np.isfinite(ys)
        safe = np.where(finite, ys, 0.0)
        return np.where(finite, safe + self.CMP_EPS * (1.0 + np.abs(safe)), ys)

    def objective(self, tau_index: int) -> float:
        design = np.column_stack([np.ones(self.data.n), self.data.x])
        r = self.data.y - design @ self.beta[tau_index]
        return float(np.sum(check_loss(r, float(self.taus[tau_index]))))

    def quantile_table(self, xs) -> np.ndarray:
        xs = np.asarray(xs, dtype=float)
        if xs.ndim == 1:
            xs = xs[:, None]
        design = np.column_stack([np.ones(xs.shape[0]), xs])
        return np.sort(design @ self.beta.T, axis=1)  # (m, G)

    def _table_at(self, x) -> np.ndarray:
        pt = _as_point(x, self.data.d)
        return self.quantile_table(pt[None, :])[0]

    def cdf_batch(self, ys, x) -> np.ndarray:
        ys = np.asarray(ys, dtype=float).ravel()
        tbl = self._table_at(x)
        return (tbl[None, :] <= self._thresholds(ys)[:, None]).mean(axis=1)

    def cdf(self, y: float, x) -> float:
        return float(self.cdf_batch(np.array([y]), x)[0])

    def cdf_given_rows(self, ys, xs) -> np.ndarray:
        ys = np.asarray(ys, dtype=float).ravel()
        tbl = self.quantile_table(xs)
        return (tbl <= self._thresholds(ys)[:, None]).mean(axis=1)

    def quantile(self, p: float, x) -> float:
        if not 0.0 < p < 1.0:
            raise ValueError(f"p must be in (0, 1), got {p}")
        tbl = self._table_at(x)
        idx = max(1, math.ceil(p * tbl.size))
        return float(tbl[idx - 1])

    def quantile_many(self, ps, x) -> np.ndarray:
        ps = np.asarray(ps, dtype=float).ravel()
        tbl = self._table_at(x)
        idx = np.maximum(1, np.ceil(ps * tbl.size).astype(int)) - 1
        return tbl[idx]

    def quantile_batch(self, ps, xs) -> np.ndarray:
        ps = np.asarray(ps, dtype=float).ravel()
        tbl = self.quantile_table(xs)
        idx = np.maximum(1, np.ceil(ps * tbl.shape[1]).astype(int)) - 1
        return np.take_along_axis(tbl, idx[:, None], axis=1)[:, 0]

    def plugin_ranks(self) -> RankVector:
        return RankVector(self.cdf_given_rows(self.data.y, self.data.x), "plugin")

    def delete_one_ranks(self) -> RankVector:
        if self.data.n < 2:
            raise ValueError("delete-one ranks require n >= 2")
        u = np.empty(self.data.n)
        for i in range(self.data.n):
            sub = QuantileRegressionCdf(self.data.drop(i), self.taus)
            u[i] = sub.cdf(self.data.y[i], self.data.x[i])
        return RankVector(u, "delete-one")

    def refit(self, data: Dataset) -> "QuantileRegressionCdf":
        return QuantileRegressionCdf(data, self.taus)


class ParametricConditionalCdf:
    """Known conditional law Y | X = x ~ loc(x) + scale(x) * Z.

    ``loc_fn`` and ``scale_fn`` map an (m, d) covariate matrix to (m,)
    vectors; ``base_cdf`` (and optionally ``base_quantile``) describe Z.
    Without an analytic base quantile, inversion bisects base_cdf on
    [-bracket, bracket].  Refitting is a no-op, which makes this class
    the oracle reference in coverage experiments.
    """

    def __init__(self, loc_fn, scale_fn, base_cdf, base_quantile=None,
                 bracket: float = 50.0):
        self.loc_fn = loc_fn
        self.scale_fn = scale_fn
        self.base_cdf = base_cdf
        self.base_quantile = base_quantile
        self.z_bracket = float(bracket)

    def _loc_scale(self, xs) -> tuple[np.ndarray, np.ndarray]:
        xs = np.asarray(xs, dtype=float)
        if xs.ndim == 1:
            xs = xs[:, None]
        return (np.asarray(self.loc_fn(xs), dtype=float).ravel(),
                np.asarray(self.scale_fn(xs), dtype=float).ravel())

    def cdf_batch(self, ys, x) -> np.ndarray:
        ys = np.asarray(ys, dtype=float).ravel()
        loc, scale = self._loc_scale(np.atleast_1d(np.asarray(x, float))[None, :])
        return np.asarray(self.base_cdf((ys - loc[0]) / scale[0]), dtype=float)

    def cdf(self, y: float, x) -> float:
        return float(self.cdf_batch(np.array([y]), x)[0])

    def cdf_given_rows(self, ys, xs) -> np.ndarray:
        ys = np.asarray(ys, dtype=float).ravel()
        loc, scale = self._loc_scale(xs)
        return np.asarray(self.base_cdf((ys - loc) / scale), dtype=float)

    def _base_ppf(self, ps: np.ndarray) -> np.ndarray:
        if self.base_quantile is not None:
            return np.asarray(self.base_quantile(ps), dtype=float)
        lo = np.full(ps.shape, -self.z_bracket)
        hi = np.full(ps.shape, self.z_bracket)
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            ge = np.asarray(self.base_cdf(mid), dtype=float) >= ps
            hi = np.where(ge, mid, hi)
            lo = np.where(ge, lo, mid)
        return hi

    def quantile(self, p: float, x) -> float:
        if not 0.0 < p < 1.0:
            raise ValueError(f"p must be in (0, 1), got {p}")
        loc, scale = self._loc_scale(np.atleast_1d(np.asarray(x, float))[None, :])
        return float(loc[0] + scale[0] * self._base_ppf(np.array([p]))[0])

    def quantile_many(self, ps, x) -> np.ndarray:
        ps = np.asarray(ps, dtype=float).ravel()
        loc, scale = self._loc_scale(np.atleast_1d(np.asarray(x, float))[None, :])
        return loc[0] + scale[0] * self._base_ppf(ps)

    def quantile_batch(self, ps, xs) -> np.ndarray:
        ps = np.asarray(ps, dtype=float).ravel()
        loc, scale = self._loc_scale(xs)
        return loc + scale * self._base_ppf(ps)

    def refit(self, data: Dataset) -> "ParametricConditionalCdf":
        return self


# -- estimator specs ------------------------------------------------------

@dataclass(frozen=True)
class EstimatorSpec:
    """Recipe for a conditional CDF estimator.

    ``kind`` is one of kernel | qr | oracle.  Kernel bandwidths left as
    None are selected on the training data by the KS uniformity criterion.
    """

    kind: str = "kernel"
    h: float | None = None
    h0: float | None = None
    kernel: KernelSpec = field(default_factory=KernelSpec)
    tau_grid: tuple | None = None
    oracle: object | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("kernel", "qr", "oracle"):
            raise ValueError(f"unknown estimator kind {self.kind!r}")


def default_bandwidth_grids(data: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """Candidate bandwidths: the 0.05..0.5 factor ladder times the ranges."""
    x_range = float(np.max(np.ptp(data.x, axis=0)))
    y_range = float(np.ptp(data.y))
    if x_range <= 0.0 or y_range <= 0.0:
        raise BandwidthSelectionError(
            "degenerate covariate or response range; pass explicit bandwidths")
    factors = np.asarray(BANDWIDTH_FACTORS)
    return factors * x_range, factors * y_range


def select_bandwidths(data: Dataset, h_grid, h0_grid,
                      spec: KernelSpec = DEFAULT_KERNEL) -> tuple[float, float]:
    """Pick (h, h0) maximising the KS uniformity p-value of plugin ranks.

    Ties break toward smaller h, then smaller h0.
    """
    h_grid = np.asarray(h_grid, dtype=float).ravel()
    h0_grid = np.asarray(h0_grid, dtype=float).ravel()
    if h_grid.size == 0 or h0_grid.size == 0:
        raise ValueError("bandwidth grids must be nonempty")
    if np.any(h_grid <= 0) or np.any(h0_grid <= 0):
        raise ValueError("bandwidth grids must be positive")
    y = data.y
    best: tuple[float, float, float] | None = None  # (p, h, h0)
    for h0 in h0_grid:
        kmat = smooth_cdf((y[None, :] - y[:, None]) / h0, spec)
        for h in h_grid:
            model = KernelCdf(data, h, h0, spec)
            w = model.design_weight_matrix()
            den = w.sum(axis=0)
            if np.any(den <= 0.0):
                continue
            u = np.clip((w * kmat).sum(axis=0) / den,
                        RANK_CLIP, 1.0 - RANK_CLIP)
            _, p = ks_uniform_test(u)
            key = (p, float(h), float(h0))
            if best is None or p > best[0] or (
                    p == best[0] and (key[1], key[2]) < (best[1], best[2])):
                best = key
    if best is None:
        raise BandwidthSelectionError(
            "every bandwidth pair leaves some design point out of support")
    return best[1], best[2]


def _degenerate_bandwidths(data: Dataset) -> tuple[float, float]:
    """Usable bandwidths for flat covariates or responses.

    Any h gives equal weights when x is constant; a vanishing h0 makes
    the smoothed CDF a step at the constant response.
    """
    x_range = float(np.max(np.ptp(data.x, axis=0)))
    y_range = float(np.ptp(data.y))
    h = 0.25 * x_range if x_range > 0 else max(
        1e-3, 1e-3 * float(np.abs(data.x).max()))
    h0 = 0.25 * y_range if y_range > 0 else max(
        1e-12, 1e-9 * float(np.abs(data.y).max()))
    return h, h0


def _auto_bandwidths(data: Dataset, spec: KernelSpec) -> tuple[float, float]:
    try:
        h_grid, h0_grid = default_bandwidth_grids(data)
        return select_bandwidths(data, h_grid, h0_grid, spec)
    except BandwidthSelectionError:
        return _degenerate_bandwidths(data)


def fit_estimator(spec: EstimatorSpec, data: Dataset):
    """Fit (or return) the model described by ``spec`` on ``data``."""
    if spec.kind == "kernel":
        if spec.h is None or spec.h0 is None:
            h, h0 = _auto_bandwidths(data, spec.kernel)
        else:
            h, h0 = spec.h, spec.h0
        return KernelCdf(data, h, h0, spec.kernel)
    if spec.kind == "qr":
        return QuantileRegressionCdf(data, spec.tau_grid)
    if spec.oracle is None:
        raise ValueError("oracle estimator spec requires a model instance")
    return spec.oracle


def resolve_estimator(spec: EstimatorSpec, data: Dataset) -> EstimatorSpec:
    """Make bandwidths concrete so later refits reuse the same tuning."""
    if spec.kind == "kernel" and (spec.h is None or spec.h0 is None):
        h, h0 = _auto_bandwidths(data, spec.kernel)
        return EstimatorSpec(kind="kernel", h=h, h0=h0, kernel=spec.kernel)
    return spec


def _ranks_for(model, data: Dataset, variant: str) -> RankVector:
    if variant == "plugin":
        if isinstance(model, (KernelCdf, QuantileRegressionCdf)) \
                and model.data is data:
            return model.plugin_ranks()
        return RankVector(model.cdf_given_rows(data.y, data.x), "plugin")
    if variant != "delete-one":
        raise ValueError(f"unknown rank variant {variant!r}")
    if data.n < 2:
        raise ValueError("delete-one ranks require n >= 2")
    if isinstance(model, (KernelCdf, QuantileRegressionCdf)) \
            and model.data is data:
        return model.delete_one_ranks()
    u = np.empty(data.n)
    for i in range(data.n):
        sub = model.refit(data.drop(i))
        u[i] = sub.cdf(data.y[i], data.x[i])
    return RankVector(u, "delete-one")


def pit_ranks(estimator, data: Dataset, variant: str = "plugin") -> RankVector:
    """PIT ranks U_i = F_hat(Y_i | X_i), plugin or delete-one."""
    model = fit_estimator(estimator, data) if isinstance(estimator, EstimatorSpec) \
        else estimator
    return _ranks_for(model, data, variant)
