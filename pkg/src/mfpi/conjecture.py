"""Conjecture tests: accept/reject statements about the unobserved future
response by duality with prediction intervals.

A point null {y0} is tested against the two-sided interval; the one-sided
nulls [y0, inf) and (-inf, y0] are tested against the matching one-sided
interval.  A y0 equal to an interval endpoint is accepted (closed
acceptance region).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cdf import Dataset
from .intervals import MethodSpec, PredictionInterval, build_interval

NULL_KINDS = ("point", "at-least", "at-most")


@dataclass(frozen=True)
class NullSpec:
    """Null conjecture about Y_f: {y0}, [y0, inf) or (-inf, y0]."""

    kind: str
    y0: float

    def __post_init__(self) -> None:
        if self.kind not in NULL_KINDS:
            raise ValueError(f"unknown null kind {self.kind!r}")
        if not np.isfinite(self.y0):
            raise ValueError("y0 must be finite")


@dataclass(frozen=True)
class Decision:
    reject: bool
    interval_used: PredictionInterval
    alpha: float
    method: str
    null: NullSpec


def test_conjecture(data: Dataset, x_f, alpha: float, null: NullSpec,
                    method_spec: MethodSpec, seed: int = 0) -> Decision:
    """Decide the null conjecture at level alpha via interval duality.

    point      -> two-sided interval, reject iff y0 falls outside;
    at-least   -> upper-bounded interval (-inf, c], reject iff y0 > c;
    at-most    -> lower-bounded interval [c, inf), reject iff y0 < c.
    """
    if null.kind == "point":
        side = "two"
    elif null.kind == "at-least":
        side = "lower"
    else:
        side = "upper"
    interval = build_interval(data, x_f, alpha, side, method_spec, seed)
    if null.kind == "point":
        reject = not interval.contains(null.y0)
    elif null.kind == "at-least":
        reject = null.y0 > interval.upper
    else:
        reject = null.y0 < interval.lower
    return Decision(reject=reject, interval_used=interval, alpha=alpha,
                    method=method_spec.method, null=null)


def acceptance_rate(decisions) -> float:
    """Fraction of decisions that accepted the null."""
    decisions = list(decisions)
    if not decisions:
        raise ValueError("acceptance_rate requires a nonempty decision list")
    return float(np.mean([not d.reject for d in decisions]))
