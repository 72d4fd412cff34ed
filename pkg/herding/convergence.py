# herding/convergence.py
"""
Convergence diagnostics for reconstruction-error traces.

The error trace holds squared distances; the O(1/M) rate applies to the
distance itself. Herding traces oscillate, so the slope is fitted on a
windowed-max envelope: for M = start, 2*start, ... the maximum distance over
iterations [M, 2M).
"""
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.stats import linregress

from herding.dynamics import HypothesisSet
from herding.moments import MomentSpec, attractor_residual
from utils.validation import ValidationError


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    stderr: float
    points: int


@dataclass(frozen=True)
class ConvergenceReport:
    error_trace: Tuple[float, ...]
    envelope: Tuple[Tuple[int, float], ...]
    fit: Optional[SlopeFit]
    residual: float

    def to_dict(self) -> Dict:
        return {
            "trace": [{"M": m + 1, "error": e} for m, e in enumerate(self.error_trace)],
            "envelope": [{"M": m, "distance": d} for m, d in self.envelope],
            "fit": None if self.fit is None else {
                "slope": self.fit.slope,
                "intercept": self.fit.intercept,
                "stderr": self.fit.stderr,
                "points": self.fit.points,
            },
            "attractor_residual": self.residual,
        }


def error_distances(error_trace: Sequence[float]) -> np.ndarray:
    return np.sqrt(np.maximum(np.asarray(error_trace, dtype=float), 0.0))


def windowed_envelope(values: Sequence[float], start: int = 16) -> List[Tuple[int, float]]:
    """(M, max of values at iterations M..2M-1) for M = start, 2*start, ... while the window fits"""
    if start < 1:
        raise ValidationError(f"Envelope start must be positive, got {start}")
    values = np.asarray(values, dtype=float)
    points = []
    m = start
    while 2 * m - 1 <= len(values):
        points.append((m, float(np.max(values[m - 1:2 * m - 1]))))
        m *= 2
    return points


def fit_loglog_slope(ms: Sequence[float], values: Sequence[float]) -> SlopeFit:
    """
    Least-squares slope of log(value) against log(M); nonpositive values are dropped.

    Raises:
        ValidationError: If fewer than two usable points remain
    """
    ms = np.asarray(ms, dtype=float)
    values = np.asarray(values, dtype=float)
    keep = (values > 0) & (ms > 0)
    if np.count_nonzero(keep) < 2:
        raise ValidationError("At least two positive points are needed for a log-log fit")
    fit = linregress(np.log(ms[keep]), np.log(values[keep]))
    return SlopeFit(float(fit.slope), float(fit.intercept), float(fit.stderr), int(np.count_nonzero(keep)))


def analyze_convergence(hypotheses: HypothesisSet, spec: MomentSpec, start: int = 16) -> ConvergenceReport:
    """Envelope fit of the distance trace; the fit is None when too few points survive"""
    envelope = windowed_envelope(error_distances(hypotheses.error_trace), start)
    fit = None
    if envelope:
        try:
            fit = fit_loglog_slope([m for m, _ in envelope], [d for _, d in envelope])
        except ValidationError:
            fit = None
    return ConvergenceReport(tuple(hypotheses.error_trace), tuple(envelope), fit, attractor_residual(spec))


def first_exact_hit(error_trace: Sequence[float], tol: float = 1e-9) -> Optional[int]:
    """Smallest M whose error is below tol, or None"""
    for index, value in enumerate(error_trace):
        if value < tol:
            return index + 1
    return None


def plateau_gap(error_trace: Sequence[float], residual: float, tail: int = 50) -> float:
    """|mean error over the last `tail` iterations - residual|"""
    if not error_trace:
        raise ValidationError("Empty error trace")
    window = list(error_trace)[-tail:]
    return abs(float(np.mean(window)) - residual)

