"""Report serialisation: canonical JSON/CSV emission with atomic writes."""

from __future__ import annotations

import io
import json
import os
import tempfile

from .coverage import CoverageReport
from .var_backtest import BacktestReport

SWEEP_COLUMNS = ("n", "estimator", "method", "coverage_mean",
                 "coverage_var_scaled", "mean_length")


def atomic_write_text(path, text: str) -> None:
    """Write via a temp file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def coverage_report_to_json(report: CoverageReport) -> str:
    payload = {
        "config": report.config,
        "methods": report.methods,
        "profile": report.profile,
        "seed": report.seed,
        "runtime_s": report.runtime_s,
        "version": report.version,
        "redraws": report.redraws,
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def sweep_rows_to_csv(rows) -> str:
    buf = io.StringIO()
    buf.write(",".join(SWEEP_COLUMNS) + "\n")
    for row in rows:
        buf.write(",".join(repr(row[c]) if isinstance(row[c], float)
                           else str(row[c]) for c in SWEEP_COLUMNS) + "\n")
    return buf.getvalue()


def backtest_report_to_json(report: BacktestReport, runtime_s: float,
                            version: str, seed: int) -> str:
    payload = {
        "config": report.config,
        "rows": report.rows,
        "skipped": report.skipped,
        "session_trimming": report.trimmed,
        "n_pairs": report.n_pairs,
        "runtime_s": runtime_s,
        "version": version,
        "seed": seed,
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"
