"""Command-line entry point.

Subcommands: predict, conjecture, simulate-coverage, sweep, var-backtest.
Exit codes: 0 success, 1 runtime failure, 2 usage error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from dataclasses import dataclass

from . import __version__
from .cdf import EstimatorSpec, load_dataset_csv
from .conjecture import NullSpec, test_conjecture
from .coverage import (
    PROFILES,
    SyntheticConfig,
    config_for_profile,
    estimate_cvp,
    sweep_sample_sizes,
)
from .intervals import MethodSpec, PredictorSpec, build_interval
from .reports import (
    atomic_write_text,
    backtest_report_to_json,
    coverage_report_to_json,
    sweep_rows_to_csv,
)
from .var_backtest import load_returns_csv, var_backtest


@dataclass
class RunConfig:
    command: str
    options: argparse.Namespace


def _alpha_arg(value: str) -> float:
    a = float(value)
    if not 0.0 < a < 1.0:
        raise argparse.ArgumentTypeError("alpha must be in (0,1)")
    return a


def _positive_int(value: str) -> int:
    v = int(value)
    if v < 1:
        raise argparse.ArgumentTypeError("value must be a positive integer")
    return v


def _csv_floats(value: str) -> list[float]:
    return [float(v) for v in value.split(",") if v.strip()]


def _csv_ints(value: str) -> list[int]:
    return [int(v) for v in value.split(",") if v.strip()]


def _csv_names(value: str) -> list[str]:
    return [v.strip() for v in value.split(",") if v.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mfpi",
        description="Prediction intervals, conjecture tests and coverage "
                    "experiments for model-free regression.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=_positive_int, default=1,
                        help="parallel worker cap")
    common.add_argument("--out", default=None, help="output report path")

    p = sub.add_parser("predict", parents=[common],
                       help="prediction interval at a future covariate")
    p.add_argument("--data", required=True, help="dataset CSV (x1..xd,y)")
    p.add_argument("--xf", required=True, help="future covariate (comma-separated)")
    p.add_argument("--alpha", type=_alpha_arg, default=0.05)
    p.add_argument("--method", choices=("qe", "cp", "mfb"), default="mfb")
    p.add_argument("--estimator", choices=("kernel", "qr"), default="kernel")
    p.add_argument("--side", choices=("two", "lower", "upper"), default="two")
    p.add_argument("--predictor", choices=("median", "mean"), default="median")
    p.add_argument("--scheme", choices=("random-regressor", "fixed-regressor"),
                   default="random-regressor")
    p.add_argument("--variant", choices=("standard", "limit", "predictive"),
                   default="standard")
    p.add_argument("--b", type=_positive_int, default=1000,
                   help="bootstrap replicates")
    p.add_argument("--cp-mode", choices=("exact", "rank-approx"), default=None)

    c = sub.add_parser("conjecture", parents=[common],
                       help="test a conjecture about the future response")
    c.add_argument("--data", required=True)
    c.add_argument("--xf", required=True)
    c.add_argument("--alpha", type=_alpha_arg, default=0.05)
    c.add_argument("--null", choices=("point", "at-least", "at-most"),
                   required=True)
    c.add_argument("--y0", type=float, required=True)
    c.add_argument("--method", choices=("qe", "cp", "mfb"), default="mfb")
    c.add_argument("--estimator", choices=("kernel", "qr"), default="kernel")
    c.add_argument("--predictor", choices=("median", "mean"), default="median")
    c.add_argument("--b", type=_positive_int, default=1000)

    s = sub.add_parser("simulate-coverage", parents=[common],
                       help="synthetic conditional-coverage study")
    s.add_argument("--n", type=_positive_int, default=400)
    s.add_argument("--sigma", type=float, default=0.2)
    s.add_argument("--alpha", type=_alpha_arg, default=0.05)
    s.add_argument("--profile", choices=tuple(PROFILES), default="desk")
    s.add_argument("--estimator", choices=("kernel", "qr", "oracle"),
                   default="kernel")
    s.add_argument("--methods", type=_csv_names, default=["qe", "cp", "mfb"])
    s.add_argument("--k", type=_positive_int, default=None, help="override K")
    s.add_argument("--m", type=_positive_int, default=None, help="override M")
    s.add_argument("--b", type=_positive_int, default=None, help="override B")
    s.add_argument("--xf", type=float, default=0.5)

    w = sub.add_parser("sweep", parents=[common],
                       help="coverage table over sample sizes")
    w.add_argument("--n-list", type=_csv_ints,
                   default=[50, 100, 150, 200, 250, 300, 350, 400])
    w.add_argument("--sigma", type=float, default=0.2)
    w.add_argument("--alpha", type=_alpha_arg, default=0.05)
    w.add_argument("--profile", choices=tuple(PROFILES), default="desk")
    w.add_argument("--estimators", type=_csv_names, default=["kernel"])
    w.add_argument("--methods", type=_csv_names, default=["qe", "cp", "mfb"])

    v = sub.add_parser("var-backtest", parents=[common],
                       help="rolling one-sided VaR backtest")
    v.add_argument("--data", required=True,
                   help="returns CSV (timestamp,price|log_return)")
    v.add_argument("--m", type=_positive_int, required=True,
                   help="aggregation block length")
    v.add_argument("--window", type=int, choices=(34, 68), default=34)
    v.add_argument("--alphas", type=_csv_floats, default=[0.01, 0.05, 0.1])
    v.add_argument("--methods", type=_csv_names,
                   default=["qe", "mfb-l1", "mfb-l2", "cp"])
    v.add_argument("--b", type=_positive_int, default=500)
    return parser


def parse_args(argv) -> RunConfig:
    parser = build_parser()
    ns = parser.parse_args(argv)
    for attr in ("data",):
        path = getattr(ns, attr, None)
        if path is not None and not os.path.exists(path):
            parser.error(f"input file does not exist: {path}")
    if getattr(ns, "alphas", None):
        for a in ns.alphas:
            if not 0.0 < a < 1.0:
                parser.error("alpha must be in (0,1)")
    return RunConfig(command=ns.command, options=ns)


def _parse_xf(raw: str) -> list[float]:
    return [float(v) for v in str(raw).split(",")]


def _fmt_bound(v: float) -> str:
    if math.isinf(v):
        return "-inf" if v < 0 else "+inf"
    return f"{v:.6g}"


def _method_spec(ns) -> MethodSpec:
    return MethodSpec(
        method=ns.method,
        estimator=EstimatorSpec(kind=ns.estimator),
        predictor=PredictorSpec(getattr(ns, "predictor", "median")),
        scheme=getattr(ns, "scheme", "random-regressor"),
        variant=getattr(ns, "variant", "standard"),
        b=getattr(ns, "b", 1000),
        cp_mode=getattr(ns, "cp_mode", None),
    )


def _cmd_predict(ns) -> int:
    data = load_dataset_csv(ns.data)
    interval = build_interval(data, _parse_xf(ns.xf), ns.alpha, ns.side,
                              _method_spec(ns), seed=ns.seed)
    print(f"[{_fmt_bound(interval.lower)}, {_fmt_bound(interval.upper)}]")
    return 0


def _cmd_conjecture(ns) -> int:
    data = load_dataset_csv(ns.data)
    decision = test_conjecture(data, _parse_xf(ns.xf), ns.alpha,
                               NullSpec(ns.null, ns.y0), _method_spec(ns),
                               seed=ns.seed)
    itv = decision.interval_used
    verdict = "reject" if decision.reject else "accept"
    print(f"{verdict} null={ns.null} y0={ns.y0:.6g} "
          f"interval=[{_fmt_bound(itv.lower)}, {_fmt_bound(itv.upper)}] "
          f"alpha={ns.alpha}")
    return 0


def _coverage_config(ns) -> SyntheticConfig:
    overrides = {}
    if ns.k is not None:
        overrides["k_reps"] = ns.k
    if ns.m is not None:
        overrides["m_future"] = ns.m
    if ns.b is not None:
        overrides["b_boot"] = ns.b
    return config_for_profile(
        ns.n, ns.profile, sigma=ns.sigma, alpha=ns.alpha, x_f=ns.xf,
        estimator=ns.estimator, methods=tuple(ns.methods), seed=ns.seed,
        **overrides)


def _cmd_simulate(ns) -> int:
    report = estimate_cvp(_coverage_config(ns), threads=ns.threads)
    text = coverage_report_to_json(report)
    summary = " ".join(
        f"{m['name']}={m['cvp_mean']:.4f}" for m in report.methods)
    if ns.out:
        atomic_write_text(ns.out, text)
        print(f"wrote {ns.out} ({summary})")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_sweep(ns) -> int:
    base = config_for_profile(
        max(ns.n_list), ns.profile, sigma=ns.sigma, alpha=ns.alpha,
        methods=tuple(ns.methods), seed=ns.seed)
    rows = sweep_sample_sizes(base, ns.n_list, estimators=ns.estimators,
                              threads=ns.threads)
    text = sweep_rows_to_csv(rows)
    if ns.out:
        atomic_write_text(ns.out, text)
        print(f"wrote {ns.out} ({len(rows)} rows)")
    else:
        sys.stdout.write(text)
    return 0


def _cmd_var_backtest(ns) -> int:
    start = time.perf_counter()
    series = load_returns_csv(ns.data)
    report = var_backtest(series, ns.m, ns.alphas, ns.window,
                          methods=ns.methods, seed=ns.seed, b_boot=ns.b)
    text = backtest_report_to_json(report, time.perf_counter() - start,
                                   __version__, ns.seed)
    summary = " ".join(
        f"{r['method']}@{r['alpha']:g}={r['acceptance_rate']:.3f}"
        for r in report.rows)
    if ns.out:
        atomic_write_text(ns.out, text)
        print(f"wrote {ns.out} ({summary})")
    else:
        sys.stdout.write(text)
    return 0


_COMMANDS = {
    "predict": _cmd_predict,
    "conjecture": _cmd_conjecture,
    "simulate-coverage": _cmd_simulate,
    "sweep": _cmd_sweep,
    "var-backtest": _cmd_var_backtest,
}


def run(cfg: RunConfig) -> int:
    try:
        return _COMMANDS[cfg.command](cfg.options)
    except Exception as exc:  # runtime failures map to exit 1
        print(f"error: {exc}", file=sys.stderr)
        return 1


def main(argv=None) -> int:
    cfg = parse_args(sys.argv[1:] if argv is None else argv)
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
