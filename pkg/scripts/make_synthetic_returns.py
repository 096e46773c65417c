#!/usr/bin/env python3
"""Write a synthetic heteroscedastic log-return CSV for backtest demos."""

import argparse
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from mfpi.var_backtest import gen_hetero_returns  # noqa: E402


def run() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--length", type=int, default=4000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="results/synthetic_returns.csv")
    args = parser.parse_args()

    series = gen_hetero_returns(args.length, args.seed)
    out = pathlib.Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    lines = ["timestamp,log_return"]
    for i, value in enumerate(series.returns):
        minute = i % 390
        day = i // 390
        stamp = (f"2021-{4 + (day + 11) // 30:02d}-{(day + 11) % 30 + 1:02d}"
                 f"T{9 + (minute + 30) // 60:02d}:{(minute + 30) % 60:02d}:00")
        lines.append(f"{stamp},{float(value)!r}")
    out.write_text("\n".join(lines) + "\n", encoding="utf-8")
    print(f"wrote {out} ({args.length} bars)")
    return 0


if __name__ == "__main__":
    sys.exit(run())
