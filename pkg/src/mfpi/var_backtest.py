"""Rolling value-at-risk backtest on intraday-style return series.

Pairs a trailing realized volatility with the worst forward cumulative
return on non-overlapping blocks, predicts the lower return bound at each
rolling step with the chosen interval method, and scores the one-sided
conjecture against the realized statistic.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as _scipy_stats

from .cdf import (
    Dataset,
    EstimatorSpec,
    KernelCdf,
    OutOfSupportError,
    _auto_bandwidths,
)
from .intervals import PredictorSpec, _cp_pvalues, mfb_interval
from .stats import DEFAULT_KERNEL, empirical_quantile

SESSION_TRIM_BARS = 5
BACKTEST_METHODS = ("qe", "mfb-l1", "mfb-l2", "cp")


@dataclass(frozen=True)
class ReturnsSeries:
    """Log-return series with optional per-bar session labels."""

    returns: np.ndarray
    timestamps: tuple | None = None
    sessions: tuple | None = None
    symbol: str = ""
    bar_interval: str = ""

    def __post_init__(self) -> None:
        r = np.asarray(self.returns, dtype=float).ravel()
        if not np.all(np.isfinite(r)):
            raise ValueError("returns must be finite")
        object.__setattr__(self, "returns", r)
        if self.timestamps is not None:
            ts = tuple(self.timestamps)
            if len(ts) != r.size:
                raise ValueError("timestamps and returns length mismatch")
            if any(a >= b for a, b in zip(ts, ts[1:])):
                raise ValueError("timestamps must be strictly increasing")
            object.__setattr__(self, "timestamps", ts)
        if self.sessions is not None:
            ss = tuple(self.sessions)
            if len(ss) != r.size:
                raise ValueError("sessions and returns length mismatch")
            object.__setattr__(self, "sessions", ss)

    def __len__(self) -> int:
        return self.returns.size


def load_returns_csv(path) -> ReturnsSeries:
    """Read ``timestamp,price`` or ``timestamp,log_return`` CSV.

    Prices are converted to log-returns; the ISO-8601 date part of each
    timestamp becomes the session label.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or len(header) < 2 or header[0].strip() != "timestamp":
            raise ValueError(f"{path}: expected header timestamp,price|log_return")
        kind = header[1].strip()
        if kind not in ("price", "log_return"):
            raise ValueError(f"{path}: second column must be price or log_return")
        stamps, vals = [], []
        for row in reader:
            if not row:
                continue
            stamps.append(row[0].strip())
            vals.append(float(row[1]))
    arr = np.asarray(vals, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{path}: NaN or infinite entries are not allowed")
    if kind == "price":
        if arr.size < 2:
            raise ValueError(f"{path}: need at least two prices")
        if np.any(arr <= 0.0):
            raise ValueError(f"{path}: prices must be positive")
        returns = np.diff(np.log(arr))
        stamps = stamps[1:]
    else:
        returns = arr
    sessions = tuple(s[:10] for s in stamps)
    return ReturnsSeries(returns, tuple(stamps), sessions)


def realized_volatility(window) -> float:
    """Trailing realized volatility: sum of squared returns."""
    w = np.asarray(window, dtype=float)
    return float(np.sum(w * w))


def worst_cumulative_return(window) -> float:
    """Minimum over j of the cumulative return of the first j bars."""
    w = np.asarray(window, dtype=float)
    return float(np.min(np.cumsum(w)))


@dataclass(frozen=True)
class VarPair:
    v: float  # trailing realized volatility
    t: float  # worst forward m-period cumulative return
    k: int    # block index on the non-overlapping grid

    def __post_init__(self) -> None:
        if self.v < 0.0:
            raise ValueError("realized volatility must be nonnegative")


def trim_sessions(series: ReturnsSeries, bars: int = SESSION_TRIM_BARS) -> ReturnsSeries:
    """Drop the first and last ``bars`` returns of every session."""
    if series.sessions is None:
        return series
    labels = np.asarray(series.sessions)
    keep = np.ones(len(series), dtype=bool)
    for label in dict.fromkeys(series.sessions):
        idx = np.nonzero(labels == label)[0]
        keep[idx[:bars]] = False
        keep[idx[len(idx) - bars:]] = False
    ts = tuple(np.asarray(series.timestamps, dtype=object)[keep]) \
        if series.timestamps is not None else None
    return ReturnsSeries(series.returns[keep], ts,
                         tuple(labels[keep]), series.symbol, series.bar_interval)


def build_var_pairs(series: ReturnsSeries, m: int) -> list[VarPair]:
    """Volatility/return pairs anchored at t = (2k + 1) m, zero-based.

    Pair k takes V from returns t-m+1..t and T as the worst cumulative
    return over t+1..t+m, so consecutive pairs use disjoint blocks.
    When session labels exist the series is trimmed first.
    """
    if m < 2:
        raise ValueError("block length m must be at least 2")
    trimmed = trim_sessions(series)
    x = trimmed.returns
    min_len = 4 * m
    if x.size < min_len:
        raise ValueError(
            f"series too short: need at least {min_len} returns after "
            f"trimming, got {x.size}")
    pairs = []
    k = 0
    while True:
        t = (2 * k + 1) * m
        if t + m > x.size - 1:
            break
        pairs.append(VarPair(
            v=realized_volatility(x[t - m + 1: t + 1]),
            t=worst_cumulative_return(x[t + 1: t + m + 1]),
            k=k))
        k += 1
    return pairs


def gen_hetero_returns(length: int, seed: int, scale: float = 0.004,
                       amplitude: float = 0.6, period: float = 600.0) -> ReturnsSeries:
    """Synthetic heteroscedastic returns: slow sinusoidal volatility times
    i.i.d. Student-t(5) shocks.  No session labels, so trimming is skipped."""
    if length < 1:
        raise ValueError("length must be positive")
    rng = np.random.default_rng(seed)
    t = np.arange(length)
    vol = scale * (1.0 + amplitude * np.sin(2.0 * math.pi * t / period))
    shocks = _scipy_stats.t.ppf(rng.uniform(size=length), 5)
    return ReturnsSeries(vol * shocks)


def hetero_vol_schedule(length: int, scale: float = 0.004,
                        amplitude: float = 0.6, period: float = 600.0) -> np.ndarray:
    """Deterministic volatility path of ``gen_hetero_returns`` (oracle use)."""
    t = np.arange(length)
    return scale * (1.0 + amplitude * np.sin(2.0 * math.pi * t / period))


@dataclass
class BacktestReport:
    """Acceptance-rate table for a rolling one-sided VaR backtest."""

    rows: list
    config: dict
    skipped: int
    trimmed: bool
    n_pairs: int


def _fit_window_model(train: Dataset) -> KernelCdf:
    h, h0 = _auto_bandwidths(train, DEFAULT_KERNEL)
    return KernelCdf(train, h, h0)


def backtest_pairs(pairs, alpha_list, window: int, methods,
                   seed: int = 0, b_boot: int = 500,
                   oracle_bound=None) -> tuple[list, int]:
    """Rolling backtest over prepared pairs.

    At each step t >= window the model trains on the trailing ``window``
    pairs, predicts the alpha-lower bound of the forward statistic given
    the current volatility, and accepts when the realized value stays at
    or above the bound.  ``oracle_bound`` is a callable (pair_index,
    alpha) -> bound used by the method name "oracle".  Returns the rate
    rows and the number of skipped steps (test covariate out of support).
    """
    pairs = list(pairs)
    alpha_list = [float(a) for a in alpha_list]
    methods = list(methods)
    q = len(pairs)
    if window < 2:
        raise ValueError("window must be at least 2")
    if q < window + 1:
        raise ValueError(
            f"need at least {window + 1} pairs for a window of {window}, got {q}")
    for meth in methods:
        if meth not in BACKTEST_METHODS + ("oracle",):
            raise ValueError(f"unknown backtest method {meth!r}")
    if "oracle" in methods and oracle_bound is None:
        raise ValueError("oracle method requires an oracle_bound callable")

    v = np.array([p.v for p in pairs])
    t_stat = np.array([p.t for p in pairs])
    accepts = {(a, m): 0 for a in alpha_list for m in methods}
    tested = 0
    skipped = 0
    fitted_methods = [m for m in methods if m != "oracle"]
    for ti in range(window, q):
        train = Dataset(v[ti - window: ti, None], t_stat[ti - window: ti])
        bounds: dict[tuple[float, str], float] = {}
        try:
            if fitted_methods:
                model = _fit_window_model(train)
                model.weights_at([v[ti]])  # shared support check
                spec = EstimatorSpec(kind="kernel", h=model.h, h0=model.h0)
                for meth in fitted_methods:
                    if meth == "qe":
                        for a in alpha_list:
                            bounds[(a, meth)] = model.quantile(a, [v[ti]])
                    elif meth in ("mfb-l1", "mfb-l2"):
                        pred = PredictorSpec(
                            "median" if meth == "mfb-l1" else "mean")
                        ss = np.random.SeedSequence(
                            entropy=seed, spawn_key=(ti, 0 if meth == "mfb-l1" else 1))
                        _, roots = mfb_interval(
                            train, [v[ti]], alpha_list[0], spec, pred,
                            b=b_boot, side="upper",
                            seed=int(ss.generate_state(1)[0]))
                        for a in alpha_list:
                            bounds[(a, meth)] = roots.center + \
                                empirical_quantile(roots.roots, a)
                    else:  # one-sided conformal
                        grid, pvals, _ = _cp_pvalues(
                            train, [v[ti]], alpha_list[0], spec,
                            side="upper", mode=None, y_grid=None)
                        for a in alpha_list:
                            accepted = grid[pvals > a]
                            if accepted.size == 0:
                                raise OutOfSupportError(
                                    "conformal acceptance region empty")
                            bounds[(a, meth)] = float(accepted.min())
        except OutOfSupportError:
            skipped += 1
            continue
        if "oracle" in methods:
            for a in alpha_list:
                bounds[(a, "oracle")] = float(oracle_bound(ti, a))
        tested += 1
        for (a, meth), c in bounds.items():
            if t_stat[ti] >= c:  # boundary ties accept
                accepts[(a, meth)] += 1
    rows = [{
        "alpha": a,
        "method": meth,
        "acceptance_rate": accepts[(a, meth)] / tested if tested else math.nan,
        "n_tests": tested,
        "n_accepts": accepts[(a, meth)],
    } for a in alpha_list for meth in methods]
    return rows, skipped


def var_backtest(series: ReturnsSeries, m: int, alpha_list, window: int,
                 methods=BACKTEST_METHODS, seed: int = 0,
                 b_boot: int = 500) -> BacktestReport:
    """Full pipeline: pair construction plus the rolling backtest."""
    if window not in (34, 68):
        raise ValueError("window |I| must be 34 or 68")
    pairs = build_var_pairs(series, m)
    rows, skipped = backtest_pairs(pairs, alpha_list, window, methods,
                                   seed=seed, b_boot=b_boot)
    trimmed = series.sessions is not None
    config = {
        "m": int(m),
        "window": int(window),
        "alphas": [float(a) for a in alpha_list],
        "methods": list(methods),
        "seed": int(seed),
        "b_boot": int(b_boot),
        "estimator": "kernel",
        "session_trimming": trimmed,
        "symbol": series.symbol,
    }
    return BacktestReport(rows=rows, config=config, skipped=skipped,
                          trimmed=trimmed, n_pairs=len(pairs))
