"""Synthetic coverage study.

Simulates the heteroscedastic sine model, builds prediction intervals per
replication with each requested method, and estimates conditional coverage
(CVP) by Monte Carlo draws of the future response at a fixed covariate.
Replications are independent tasks keyed by derived seeds, so results are
bit-identical for any worker count.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, replace

import numpy as np
from scipy import stats as _scipy_stats

from . import __version__
from .cdf import (
    BandwidthSelectionError,
    Dataset,
    EstimatorSpec,
    FitError,
    OutOfSupportError,
    ParametricConditionalCdf,
    fit_estimator,
    resolve_estimator,
)
from .intervals import (
    BootstrapResamplingError,
    ConformalAcceptanceError,
    PredictorSpec,
    cp_interval,
    effective_cp_mode,
    mfb_interval,
    qe_interval,
)

PROFILES = {
    "paper": {"k_reps": 200, "m_future": 3000, "b_boot": 1000},
    "desk": {"k_reps": 100, "m_future": 1000, "b_boot": 500},
}
T_DF = 5


@dataclass(frozen=True)
class SyntheticConfig:
    """Configuration of one coverage run (defaults follow the paper profile)."""

    n: int
    sigma: float = 0.2
    alpha: float = 0.05
    k_reps: int = 200
    m_future: int = 3000
    b_boot: int = 1000
    x_f: float = 0.5
    estimator: str = "kernel"  # kernel | qr | oracle
    methods: tuple = ("qe", "cp", "mfb")
    seed: int = 0
    profile: str = "paper"
    predictor: str = "median"
    scheme: str = "random-regressor"
    variant: str = "standard"
    cp_mode: str | None = None

    def __post_init__(self) -> None:
        if self.n < 1 or self.k_reps < 1 or self.m_future < 1 or self.b_boot < 1:
            raise ValueError("n, K, M and B must be positive")
        if not 0.0 < self.x_f < 1.0:
            raise ValueError("x_f must lie in (0, 1)")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.sigma <= 0.0:
            raise ValueError("sigma must be positive")
        if self.estimator not in ("kernel", "qr", "oracle"):
            raise ValueError(f"unknown estimator {self.estimator!r}")
        bad = [m for m in self.methods if m not in ("qe", "cp", "mfb")]
        if bad or not self.methods:
            raise ValueError(f"unknown methods {bad}")


def config_for_profile(n: int, profile: str = "paper", **overrides) -> SyntheticConfig:
    if profile not in PROFILES:
        raise ValueError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
    kwargs = dict(PROFILES[profile])
    kwargs.update(overrides)
    return SyntheticConfig(n=n, profile=profile, **kwargs)


def _loc_sine(xs: np.ndarray) -> np.ndarray:
    return np.sin(math.pi * xs[:, 0])


def _scale_het(xs: np.ndarray, sigma: float) -> np.ndarray:
    return sigma * np.sqrt(1.0 + 2.0 * xs[:, 0])


def _t_cdf(z):
    return _scipy_stats.t.cdf(z, T_DF)


def _t_ppf(p):
    return _scipy_stats.t.ppf(p, T_DF)


def true_model(sigma: float) -> ParametricConditionalCdf:
    """Exact conditional law of the synthetic generator (oracle estimator)."""
    from functools import partial

    return ParametricConditionalCdf(_loc_sine, partial(_scale_het, sigma=sigma),
                                    _t_cdf, _t_ppf)


def gen_synthetic(n: int, sigma: float, seed) -> Dataset:
    """Draw n pairs: X ~ Unif(0,1), Y = sin(pi X) + sigma sqrt(1+2X) eps.

    eps is Student-t(5) sampled by inverse CDF from a single uniform
    stream, so datasets are reproducible from the seed alone.
    """
    if n < 1:
        raise ValueError("n must be positive")
    rng = seed if isinstance(seed, np.random.Generator) \
        else np.random.default_rng(seed)
    x = rng.uniform(size=n)
    eps = _t_ppf(rng.uniform(size=n))
    y = np.sin(math.pi * x) + sigma * np.sqrt(1.0 + 2.0 * x) * eps
    return Dataset(x[:, None], y)


def draw_future_responses(m: int, sigma: float, x_f: float, rng) -> np.ndarray:
    eps = _t_ppf(rng.uniform(size=m))
    return np.sin(math.pi * x_f) + sigma * math.sqrt(1.0 + 2.0 * x_f) * eps


@dataclass
class CoverageReport:
    """Per-method CVP vectors plus aggregate statistics and a config echo."""

    config: dict
    methods: list
    profile: str
    seed: int
    runtime_s: float
    version: str = __version__
    redraws: int = 0


def _estimator_spec_for(cfg: SyntheticConfig, data: Dataset) -> EstimatorSpec:
    if cfg.estimator == "kernel":
        return resolve_estimator(EstimatorSpec(kind="kernel"), data)
    if cfg.estimator == "qr":
        return EstimatorSpec(kind="qr")
    return EstimatorSpec(kind="oracle", oracle=true_model(cfg.sigma))


_REPLICATION_FAILURES = (OutOfSupportError, FitError, ConformalAcceptanceError,
                         BootstrapResamplingError, BandwidthSelectionError)


def _run_replication(cfg: SyntheticConfig, k: int) -> dict:
    """One replication: fresh data, intervals per method, MC coverage."""
    for attempt in range(3):
        ss = np.random.SeedSequence(entropy=cfg.seed, spawn_key=(k, attempt))
        c_data, c_future, c_boot = ss.spawn(3)
        data = gen_synthetic(cfg.n, cfg.sigma, np.random.default_rng(c_data))
        try:
            spec = _estimator_spec_for(cfg, data)
            model = fit_estimator(spec, data)
            intervals = {}
            cp_mode_used = None
            for meth in cfg.methods:
                if meth == "qe":
                    intervals[meth] = qe_interval(model, [cfg.x_f], cfg.alpha)
                elif meth == "cp":
                    intervals[meth] = cp_interval(
                        data, [cfg.x_f], cfg.alpha, spec, mode=cfg.cp_mode)
                    cp_mode_used = effective_cp_mode(cfg.estimator, cfg.n,
                                                     cfg.cp_mode)
                else:
                    boot_seed = int(c_boot.generate_state(1)[0])
                    intervals[meth], _ = mfb_interval(
                        data, [cfg.x_f], cfg.alpha, spec,
                        PredictorSpec(cfg.predictor), cfg.scheme, cfg.variant,
                        cfg.b_boot, "two", boot_seed)
        except _REPLICATION_FAILURES:
            continue
        y_future = draw_future_responses(cfg.m_future, cfg.sigma, cfg.x_f,
                                         np.random.default_rng(c_future))
        out = {"k": k, "attempts": attempt, "cvp": {}, "length": {},
               "cp_mode": cp_mode_used}
        for meth, itv in intervals.items():
            out["cvp"][meth] = float(
                np.mean((y_future >= itv.lower) & (y_future <= itv.upper)))
            out["length"][meth] = float(itv.width)
        return out
    raise RuntimeError(f"replication {k} failed after 3 attempts")


def estimate_cvp(cfg: SyntheticConfig, threads: int = 1) -> CoverageReport:
    """Run the coverage study described by ``cfg``.

    Returns per-method CVP vectors of length K with their mean, sample
    variance and mean two-sided interval length.
    """
    start = time.perf_counter()
    ks = list(range(cfg.k_reps))
    if threads <= 1:
        results = [_run_replication(cfg, k) for k in ks]
    else:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_run_replication, [cfg] * len(ks), ks,
                                    chunksize=max(1, len(ks) // (4 * threads))))
    redraws = int(sum(r["attempts"] for r in results))
    methods = []
    for meth in cfg.methods:
        cvp = np.array([r["cvp"][meth] for r in results])
        length = np.array([r["length"][meth] for r in results])
        entry = {
            "name": meth,
            "cvp_mean": float(cvp.mean()),
            "cvp_var": float(cvp.var(ddof=1)) if cvp.size > 1 else 0.0,
            "mean_length": float(length.mean()),
            "cvp_values": [float(v) for v in cvp],
        }
        if meth == "cp":
            entry["mode"] = results[0]["cp_mode"]
        if meth == "mfb":
            entry["predictor"] = cfg.predictor
            entry["scheme"] = cfg.scheme
            entry["variant"] = cfg.variant
            entry["b"] = cfg.b_boot
        methods.append(entry)
    cfg_echo = asdict(cfg)
    cfg_echo["methods"] = list(cfg.methods)
    return CoverageReport(config=cfg_echo, methods=methods, profile=cfg.profile,
                          seed=cfg.seed, runtime_s=time.perf_counter() - start,
                          redraws=redraws)


VAR_SCALE = 1000.0  # presentation scaling for CVP variances in sweep tables


def sweep_sample_sizes(base_cfg: SyntheticConfig,
                       n_list=(50, 100, 150, 200, 250, 300, 350, 400),
                       estimators=None, threads: int = 1) -> list:
    """Coverage table rows over sample sizes (and optionally estimators).

    Rows have the plot-ready shape: n, estimator, method, coverage_mean,
    coverage_var_scaled, mean_length.
    """
    n_list = list(n_list)
    if not n_list:
        raise ValueError("n_list must be nonempty")
    estimators = list(estimators) if estimators else [base_cfg.estimator]
    rows = []
    for est in estimators:
        for n in n_list:
            cfg = replace(base_cfg, n=int(n), estimator=est)
            report = estimate_cvp(cfg, threads=threads)
            for entry in report.methods:
                rows.append({
                    "n": int(n),
                    "estimator": est,
                    "method": entry["name"],
                    "coverage_mean": entry["cvp_mean"],
                    "coverage_var_scaled": entry["cvp_var"] * VAR_SCALE,
                    "mean_length": entry["mean_length"],
                })
    return rows
