#!/usr/bin/env python3
"""Run the synthetic coverage sweep and write the plot-ready table.

Desk profile by default; pass --profile paper for the full-scale grid
(hours). Emits one CSV for the sweep plus a JSON report for the largest
sample size.
"""

import argparse
import pathlib
import sys

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from mfpi.cli import main  # noqa: E402


def run() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--profile", choices=("desk", "paper"), default="desk")
    parser.add_argument("--threads", type=int, default=2)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--estimators", default="kernel,qr")
    parser.add_argument("--out-dir", default="results")
    args = parser.parse_args()

    out = pathlib.Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    code = main([
        "sweep", "--profile", args.profile, "--threads", str(args.threads),
        "--seed", str(args.seed), "--estimators", args.estimators,
        "--out", str(out / f"coverage_sweep_{args.profile}.csv"),
    ])
    if code:
        return code
    return main([
        "simulate-coverage", "--n", "400", "--profile", args.profile,
        "--threads", str(args.threads), "--seed", str(args.seed),
        "--out", str(out / f"coverage_n400_{args.profile}.json"),
    ])


if __name__ == "__main__":
    sys.exit(run())
