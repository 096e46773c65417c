#!/usr/bin/env python3
"""Rolling VaR backtest demo on a synthetic heteroscedastic series."""

import argparse
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from mfpi.cli import main  # noqa: E402
from mfpi.var_backtest import gen_hetero_returns  # noqa: E402


def run() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--data", default=None,
                        help="returns CSV; synthesised when omitted")
    parser.add_argument("--m", type=int, default=30)
    parser.add_argument("--window", type=int, choices=(34, 68), default=34)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out-dir", default="results")
    args = parser.parse_args()

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    data_path = args.data
    if data_path is None:
        series = gen_hetero_returns(2 * args.m * 80 + args.m + 1, args.seed)
        data_path = out / "synthetic_returns.csv"
        lines = ["timestamp,log_return"] + [
            f"2021-04-12T{9 + i // 3600:02d}:{(i // 60) % 60:02d}:{i % 60:02d},{float(v)!r}"
            for i, v in enumerate(series.returns)]
        pathlib.Path(data_path).write_text("\n".join(lines) + "\n",
                                           encoding="utf-8")
    return main([
        "var-backtest", "--data", str(data_path), "--m", str(args.m),
        "--window", str(args.window), "--seed", str(args.seed),
        "--out", str(out / f"var_backtest_w{args.window}.json"),
    ])


if __name__ == "__main__":
    sys.exit(run())
