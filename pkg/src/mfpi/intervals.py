"""Prediction interval constructions.

Plug-in conditional-quantile intervals, distributional conformal intervals
(two- and one-sided, exact and rank-approximate), bootstrap predictive-root
intervals with random/fixed regressor resampling, and the two classical
Gaussian baselines.  All constructions are pure given (data, seed).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cdf import (
    Dataset,
    EstimatorSpec,
    FitError,
    KernelCdf,
    OutOfSupportError,
    QuantileRegressionCdf,
    _as_point,
    _ranks_for,
    fit_estimator,
)
from .stats import empirical_quantile, kernel_weight, smooth_cdf, t_quantile

SIDES = ("two", "lower", "upper")
MEAN_TAU_POINTS = 512


class ConformalAcceptanceError(RuntimeError):
    """Every candidate on the conformal grid was rejected."""


class BootstrapResamplingError(RuntimeError):
    """Too many bootstrap replicates failed at the future covariate."""


@dataclass(frozen=True)
class PredictionInterval:
    """Closed prediction interval; one-sided versions carry one infinity."""

    lower: float
    upper: float
    level: float
    method: str  # QE | CP | MFB | T_IID | T_LS
    center: float | None = None

    def __post_init__(self) -> None:
        if not 0.0 < self.level < 1.0:
            raise ValueError("level must be in (0, 1)")
        if self.lower > self.upper:
            raise ValueError(f"lower {self.lower} exceeds upper {self.upper}")

    @property
    def width(self) -> float:
        return self.upper - self.lower

    def contains(self, y: float) -> bool:
        return self.lower <= y <= self.upper


@dataclass(frozen=True)
class PredictorSpec:
    """Point-predictor functional applied to a conditional CDF.

    ``median`` is the 0.5 quantile; ``mean`` integrates the quantile
    function over a 512-point midpoint tau grid.
    """

    functional: str = "median"

    def __post_init__(self) -> None:
        if self.functional not in ("median", "mean"):
            raise ValueError(f"unknown predictor functional {self.functional!r}")


@dataclass
class RootSample:
    """Bootstrap predictive-root replicates around a point predictor."""

    center: float
    roots: np.ndarray
    b: int
    scheme: str
    variant: str
    future_draws: np.ndarray | None = None
    boot_centers: np.ndarray | None = None
    redraws: int = 0
    failures: int = 0

    def __post_init__(self) -> None:
        if self.b < 100:
            raise ValueError("bootstrap requires B >= 100 replicates")
        self.roots = np.asarray(self.roots, dtype=float)
        if not np.all(np.isfinite(self.roots)):
            raise ValueError("bootstrap roots must be finite")


def qe_interval(model, x_f, alpha: float, side: str = "two") -> PredictionInterval:
    """Plug-in interval from the estimated conditional quantiles."""
    _check_alpha_side(alpha, side)
    if side == "two":
        lo, hi = model.quantile(alpha / 2.0, x_f), model.quantile(1.0 - alpha / 2.0, x_f)
    elif side == "lower":
        lo, hi = -math.inf, model.quantile(1.0 - alpha, x_f)
    else:
        lo, hi = model.quantile(alpha, x_f), math.inf
    return PredictionInterval(lo, hi, 1.0 - alpha, "QE")


def point_predict(model, x_f, spec: PredictorSpec = PredictorSpec()) -> float:
    """Point predictor: conditional median, or grid-integrated mean."""
    if spec.functional == "median":
        return float(model.quantile(0.5, x_f))
    taus = (np.arange(MEAN_TAU_POINTS) + 0.5) / MEAN_TAU_POINTS
    return float(np.mean(model.quantile_many(taus, x_f)))


def _check_alpha_side(alpha: float, side: str) -> None:
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    if side not in SIDES:
        raise ValueError(f"side must be one of {SIDES}, got {side!r}")


# -- conformal prediction --------------------------------------------------

def conformal_pvalue(data_scores, candidate_score: float) -> float:
    """Share of the n+1 conformity scores at least as large as the candidate's."""
    scores = np.asarray(data_scores, dtype=float)
    return (float(np.sum(scores >= candidate_score)) + 1.0) / (scores.size + 1.0)


def _conformity(u, side: str, half: float = 0.5):
    if side == "two":
        return np.abs(np.asarray(u) - half)
    if side == "lower":  # acceptance region (-inf, c)
        return np.asarray(u)
    return -np.asarray(u)  # upper: acceptance region (c, +inf)


def default_candidate_grid(data: Dataset, count: int = 200) -> np.ndarray:
    rng = float(np.ptp(data.y))
    return np.linspace(data.y.min() - 0.1 * rng, data.y.max() + 0.1 * rng, count)


def effective_cp_mode(estimator_kind: str, n: int,
                      requested: str | None = None) -> str:
    """Conformal mode policy: rank-approximate for quantile-regression
    models (exact refits absorb extreme candidates into the fitted tails)
    and for kernel models from n = 200 up; exact otherwise."""
    if requested is not None:
        if requested not in ("exact", "rank-approx"):
            raise ValueError(f"unknown conformal mode {requested!r}")
        return requested
    if estimator_kind == "qr":
        return "rank-approx"
    if estimator_kind == "kernel" and n >= 200:
        return "rank-approx"
    return "exact"


def _cp_pvalues(data: Dataset, x_f, alpha: float, estimator: EstimatorSpec,
                side: str, mode: str | None, y_grid) -> tuple[np.ndarray, np.ndarray, str]:
    model = fit_estimator(estimator, data)
    if isinstance(model, QuantileRegressionCdf):
        kind = "qr"
    elif isinstance(model, KernelCdf):
        kind = "kernel"
    else:
        kind = "oracle"
    mode = effective_cp_mode(kind, data.n, mode)
    if y_grid is None:
        grid = default_candidate_grid(data)
    else:
        grid = np.asarray(y_grid, dtype=float).ravel()
        if grid.size == 0:
            raise ValueError("candidate grid must be nonempty")
    xf = _as_point(x_f, data.d)

    if mode == "rank-approx":
        if isinstance(model, QuantileRegressionCdf):
            u_data = model.cdf_given_rows(data.y, data.x)[:, None]
        else:
            u_data = _ranks_for(model, data, "plugin").u[:, None]  # (n, 1)
        u_cand = model.cdf_batch(grid, xf)                          # (g,)
    elif isinstance(model, KernelCdf):
        u_data, u_cand = _exact_kernel_ranks(model, data, xf, grid)
    else:
        u_data = np.empty((data.n, grid.size))
        u_cand = np.empty(grid.size)
        x_aug = np.vstack([data.x, xf[None, :]])
        for j, cand in enumerate(grid):
            aug = Dataset(x_aug, np.append(data.y, cand))
            refit = model.refit(aug)
            vals = refit.cdf_given_rows(aug.y, aug.x)
            u_data[:, j] = vals[:-1]
            u_cand[j] = vals[-1]

    if isinstance(model, QuantileRegressionCdf):
        # ranks are multiples of 1/G; compare on the integer count scale
        # so mathematically tied conformity scores tie exactly
        g_taus = model.taus.size
        u_data = np.rint(u_data * g_taus)
        u_cand = np.rint(u_cand * g_taus)
        half = 0.5 * g_taus
    else:
        half = 0.5
    s_data = _conformity(u_data, side, half)
    s_cand = _conformity(u_cand, side, half)
    counts = (s_data >= s_cand[None, :]).sum(axis=0)
    pvals = (counts + 1.0) / (data.n + 1.0)
    return grid, pvals, mode


def _exact_kernel_ranks(model: KernelCdf, data: Dataset, xf: np.ndarray,
                        grid: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Augmented-fit ranks for every candidate, without per-candidate refits.

    Algebraically identical to refitting the kernel CDF on
    data + (x_f, candidate): only the terms involving the appended pair
    depend on the candidate, so they are added to precomputed base sums.
    """
    w = model.design_weight_matrix()
    kmat = smooth_cdf((data.y[None, :] - data.y[:, None]) / model.h0, model.spec)
    base_num = (w * kmat).sum(axis=0)
    base_den = w.sum(axis=0)
    wf = model.raw_weights(xf[None, :])[:, 0]
    w0 = float(kernel_weight(0.0, model.spec)) ** data.d
    # ranks of the n data points under the augmented fit, per candidate
    k_extra = smooth_cdf((data.y[:, None] - grid[None, :]) / model.h0, model.spec)
    u_data = (base_num[:, None] + wf[:, None] * k_extra) / (base_den + wf)[:, None]
    # rank of the candidate itself at x_f
    k_cand = smooth_cdf((grid[None, :] - data.y[:, None]) / model.h0, model.spec)
    den_f = wf.sum() + w0
    if den_f <= 0.0:
        raise OutOfSupportError(
            f"covariate {xf.tolist()} is outside the kernel support")
    u_cand = (wf @ k_cand + 0.5 * w0) / den_f
    return u_data, u_cand


def cp_interval(data: Dataset, x_f, alpha: float, estimator: EstimatorSpec,
                side: str = "two", mode: str | None = None,
                y_grid=None) -> PredictionInterval:
    """Distributional conformal interval: hull of accepted candidates.

    Exact mode refits the estimator on data + (x_f, y) per candidate y;
    rank-approx reuses the base-fit ranks.  One-sided intervals use the
    signed-rank conformity score and replace the unconstrained endpoint
    with an infinity.
    """
    _check_alpha_side(alpha, side)
    grid, pvals, _ = _cp_pvalues(data, x_f, alpha, estimator, side, mode, y_grid)
    accepted = grid[pvals > alpha]
    if accepted.size == 0:
        raise ConformalAcceptanceError("CP acceptance region empty; enlarge grid")
    lo, hi = float(accepted.min()), float(accepted.max())
    if side == "lower":
        lo = -math.inf
    elif side == "upper":
        hi = math.inf
    return PredictionInterval(lo, hi, 1.0 - alpha, "CP")


# -- model-free bootstrap ----------------------------------------------------

def _replicate_streams(seed: int, rep: int, attempt: int):
    """Independent generators for (regressor, rank, future) draws.

    Splitting the streams keeps the future-response uniform independent
    of the rank resample and makes replicate draws comparable across
    resampling schemes under a shared seed.
    """
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(rep, attempt))
    c_idx, c_rank, c_fut = ss.spawn(3)
    return (np.random.default_rng(c_idx), np.random.default_rng(c_rank),
            np.random.default_rng(c_fut))


def mfb_interval(data: Dataset, x_f, alpha: float, estimator: EstimatorSpec,
                 predictor: PredictorSpec = PredictorSpec(),
                 scheme: str = "random-regressor", variant: str = "standard",
                 b: int = 1000, side: str = "two",
                 seed: int = 0) -> tuple[PredictionInterval, RootSample]:
    """Bootstrap predictive-root interval.

    Fits the conditional CDF, uniformises the responses through their
    estimated ranks, resamples (covariates and ranks, or fresh uniforms
    for the limit variant), rebuilds responses by inverse CDF, refits,
    and centers the interval at the point predictor plus empirical root
    quantiles.  Replicate b draws its randomness from a deterministic
    function of (seed, b), so results do not depend on scheduling.
    """
    _check_alpha_side(alpha, side)
    if scheme not in ("random-regressor", "fixed-regressor"):
        raise ValueError(f"unknown scheme {scheme!r}")
    if variant not in ("standard", "limit", "predictive"):
        raise ValueError(f"unknown variant {variant!r}")
    if data.n < 2:
        raise ValueError("bootstrap requires n >= 2")
    if b < 100:
        raise ValueError("bootstrap requires B >= 100 replicates")

    model = fit_estimator(estimator, data)
    xf = _as_point(x_f, data.d)
    center = point_predict(model, xf, predictor)
    if variant == "standard":
        ranks = _ranks_for(model, data, "plugin").u
    elif variant == "predictive":
        ranks = _ranks_for(model, data, "delete-one").u
    else:
        ranks = None

    if isinstance(model, KernelCdf) and predictor.functional == "median":
        fut, boot_centers, ok, redraws, fail_info = _mfb_replicates_kernel_median(
            model, data, xf, scheme, ranks, b, seed)
    else:
        fut, boot_centers, ok, redraws, fail_info = _mfb_replicates_generic(
            model, data, xf, predictor, scheme, ranks, b, seed)
    roots = fut - boot_centers

    failures = int(b - ok.sum())
    if failures > 0.05 * b:
        raise BootstrapResamplingError(
            f"{failures}/{b} bootstrap replicates failed at the future "
            f"covariate; first failures: {fail_info[:3]}")

    good = roots[ok]
    sample = RootSample(center=center, roots=good, b=b, scheme=scheme,
                        variant=variant, future_draws=fut[ok],
                        boot_centers=boot_centers[ok], redraws=redraws,
                        failures=failures)
    interval = mfb_interval_from_roots(sample, alpha, side)
    return interval, sample


def _mfb_replicates_generic(model, data: Dataset, xf: np.ndarray,
                            predictor: PredictorSpec, scheme: str, ranks,
                            b: int, seed: int):
    """Reference bootstrap loop: per-replicate inversion and refit."""
    n = data.n
    fut = np.zeros(b)
    boot_centers = np.zeros(b)
    ok = np.zeros(b, dtype=bool)
    redraws = 0
    fail_info: list[str] = []
    for rep in range(b):
        for attempt in range(10):
            rng_idx, rng_rank, rng_fut = _replicate_streams(seed, rep, attempt)
            idx = rng_idx.integers(0, n, n) if scheme == "random-regressor" \
                else np.arange(n)
            us = ranks[rng_rank.integers(0, n, n)] if ranks is not None \
                else rng_rank.uniform(size=n)
            uf = rng_fut.uniform()
            try:
                if isinstance(model, KernelCdf):
                    ystar = model.draw_inverse_at_design(us, idx)
                else:
                    ystar = model.quantile_batch(us, data.x[idx])
                yf_star = model.quantile(uf, xf)
                star = model.refit(Dataset(data.x[idx], ystar))
                boot_center = point_predict(star, xf, predictor)
            except (OutOfSupportError, FitError) as exc:
                redraws += 1
                if attempt == 9:
                    fail_info.append(f"replicate {rep}: {exc}")
                continue
            fut[rep] = yf_star
            boot_centers[rep] = boot_center
            ok[rep] = True
            break
    return fut, boot_centers, ok, redraws, fail_info


def _mfb_replicates_kernel_median(model: KernelCdf, data: Dataset,
                                  xf: np.ndarray, scheme: str, ranks,
                                  b: int, seed: int):
    """Kernel fast path: same per-replicate draws, batched inversions.

    Replicate randomness is drawn exactly as in the generic loop; the
    response rebuild, future draw and refit-median inversions then run
    as three batched bisections across replicates.
    """
    from .cdf import _bisect_mixture

    n = data.n
    xf_w = model.weights_at(xf)
    idx_mat = np.empty((n, b), dtype=int)
    us_mat = np.empty((n, b))
    ufs = np.empty(b)
    ok = np.zeros(b, dtype=bool)
    redraws = 0
    fail_info: list[str] = []
    for rep in range(b):
        for attempt in range(10):
            rng_idx, rng_rank, rng_fut = _replicate_streams(seed, rep, attempt)
            idx = rng_idx.integers(0, n, n) if scheme == "random-regressor" \
                else np.arange(n)
            us = ranks[rng_rank.integers(0, n, n)] if ranks is not None \
                else rng_rank.uniform(size=n)
            uf = rng_fut.uniform()
            if xf_w[idx].sum() <= 0.0:  # refit would lose x_f support
                redraws += 1
                if attempt == 9:
                    fail_info.append(
                        f"replicate {rep}: resample left {xf.tolist()} "
                        "outside the kernel support")
                continue
            idx_mat[:, rep] = idx
            us_mat[:, rep] = us
            ufs[rep] = uf
            ok[rep] = True
            break

    live = np.nonzero(ok)[0]
    fut = np.zeros(b)
    boot_centers = np.zeros(b)
    if live.size == 0:
        return fut, boot_centers, ok, redraws, fail_info
    glo, ghi = model.bracket
    full_lo = np.full(live.size, glo)
    full_hi = np.full(live.size, ghi)
    # future response draws from the base fit at x_f
    fut[live] = _bisect_mixture(
        data.y[:, None], np.broadcast_to(xf_w[:, None], (n, live.size)),
        ufs[live], full_lo, full_hi, model.h0, model.spec, ghi - glo)
    # resampled responses, chunked to bound the band working set
    ystar = np.empty((n, live.size))
    chunk = max(1, 4096 // n)
    for start in range(0, live.size, chunk):
        sel = live[start:start + chunk]
        flat_idx = idx_mat[:, sel].ravel(order="F")
        flat_us = us_mat[:, sel].ravel(order="F")
        vals = model.draw_inverse_at_design(flat_us, flat_idx)
        ystar[:, start:start + chunk] = vals.reshape(n, sel.size, order="F")
    # refit medians at x_f: mixture of resampled responses with gathered weights
    boot_centers[live] = _bisect_mixture(
        ystar, xf_w[idx_mat[:, live]], np.full(live.size, 0.5),
        full_lo, full_hi, model.h0, model.spec, ghi - glo)
    return fut, boot_centers, ok, redraws, fail_info


def mfb_interval_from_roots(sample: RootSample, alpha: float,
                            side: str = "two") -> PredictionInterval:
    """Interval endpoints from an existing root sample (roots are alpha-free)."""
    _check_alpha_side(alpha, side)
    c = sample.center
    if side == "two":
        lo = c + empirical_quantile(sample.roots, alpha / 2.0)
        hi = c + empirical_quantile(sample.roots, 1.0 - alpha / 2.0)
    elif side == "lower":
        lo, hi = -math.inf, c + empirical_quantile(sample.roots, 1.0 - alpha)
    else:
        lo, hi = c + empirical_quantile(sample.roots, alpha), math.inf
    return PredictionInterval(lo, hi, 1.0 - alpha, "MFB", center=c)


# -- classical Gaussian baselines -------------------------------------------

def baseline_t_interval(y_sample, alpha: float) -> PredictionInterval:
    """I.i.d. Gaussian baseline: mean +- t_{n-1} * sd * sqrt(1 + 1/n)."""
    y = np.asarray(y_sample, dtype=float).ravel()
    if y.size < 2:
        raise ValueError("baseline_t_interval requires n >= 2")
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    n = y.size
    mu = float(np.mean(y))
    sd = float(np.std(y, ddof=1))
    tq = t_quantile(alpha / 2.0, n - 1)  # negative lower quantile
    half = tq * sd * math.sqrt(1.0 + 1.0 / n)
    return PredictionInterval(mu + half, mu - half, 1.0 - alpha, "T_IID",
                              center=mu)


def baseline_ls_interval(data: Dataset, x_f, alpha: float,
                         intercept: bool = True) -> PredictionInterval:
    """Gaussian linear-regression baseline with the exact leverage term."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    xf = _as_point(x_f, data.d)
    if intercept:
        design = np.column_stack([np.ones(data.n), data.x])
        xa = np.concatenate([[1.0], xf])
    else:
        design = data.x
        xa = xf
    p = design.shape[1]
    if data.n <= p:
        raise ValueError(f"least-squares baseline requires n > {p}")
    gram = design.T @ design
    if np.linalg.cond(gram) >= 1e12:
        raise ValueError("singular design matrix (condition number >= 1e12)")
    beta = np.linalg.solve(gram, design.T @ data.y)
    resid = data.y - design @ beta
    dof = data.n - p
    sigma = math.sqrt(float(resid @ resid) / dof)
    leverage = float(xa @ np.linalg.solve(gram, xa))
    tq = t_quantile(alpha / 2.0, dof)
    center = float(beta @ xa)
    half = tq * sigma * math.sqrt(1.0 + leverage)
    return PredictionInterval(center + half, center - half, 1.0 - alpha,
                              "T_LS", center=center)


# -- shared method dispatch ---------------------------------------------------

@dataclass(frozen=True)
class MethodSpec:
    """Bundle describing how to build an interval for one method."""

    method: str  # qe | cp | mfb
    estimator: EstimatorSpec = field(default_factory=EstimatorSpec)
    predictor: PredictorSpec = field(default_factory=PredictorSpec)
    scheme: str = "random-regressor"
    variant: str = "standard"
    b: int = 1000
    cp_mode: str | None = None
    y_grid: object = None

    def __post_init__(self) -> None:
        if self.method not in ("qe", "cp", "mfb"):
            raise ValueError(f"unknown method {self.method!r}")


def build_interval(data: Dataset, x_f, alpha: float, side: str,
                   spec: MethodSpec, seed: int = 0) -> PredictionInterval:
    if spec.method == "qe":
        model = fit_estimator(spec.estimator, data)
        return qe_interval(model, x_f, alpha, side)
    if spec.method == "cp":
        return cp_interval(data, x_f, alpha, spec.estimator, side,
                           spec.cp_mode, spec.y_grid)
    interval, _ = mfb_interval(data, x_f, alpha, spec.estimator,
                               spec.predictor, spec.scheme, spec.variant,
                               spec.b, side, seed)
    return interval
