"""Posterior recursions for the single, scanning and refinement stages.

All updates are carried out in log space with max subtraction and snap to a
simplex vertex when within ``SNAP_TOL`` of it, so vertices are absorbing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .models import ModelPair

SNAP_TOL = 1e-12
SUM_TOL = 1e-12


def _log(p: float) -> float:
    return math.log(p) if p > 0.0 else -math.inf


def _normalise(log_weights):
    """Normalise log weights into a probability vector with vertex snapping."""
    top = max(log_weights)
    if top == -math.inf:
        raise ValueError("all hypotheses have zero posterior weight")
    w = [math.exp(lw - top) if lw > -math.inf else 0.0 for lw in log_weights]
    total = math.fsum(w)
    p = [x / total for x in w]
    return _snap(p)


def _snap(p):
    for i, x in enumerate(p):
        if x >= 1.0 - SNAP_TOL:
            return [1.0 if j == i else 0.0 for j in range(len(p))]
    if any(0.0 < x < SNAP_TOL for x in p):
        p = [0.0 if x < SNAP_TOL else x for x in p]
        total = math.fsum(p)
        p = [x / total for x in p]
    return p


def _check_simplex(values, name):
    for v in values:
        if not (0.0 <= v <= 1.0):
            raise ValueError(f"{name} components must lie in [0, 1], got {values}")
    if abs(math.fsum(values) - 1.0) > SUM_TOL:
        raise ValueError(f"{name} components must sum to 1, got {math.fsum(values)}")


@dataclass(frozen=True)
class SingleBelief:
    """Posterior that the observed sequence is generated by f1."""

    pi: float

    def __post_init__(self):
        if not 0.0 <= self.pi <= 1.0:
            raise ValueError(f"pi must lie in [0, 1], got {self.pi}")


@dataclass(frozen=True)
class ScanBelief:
    """Posterior over (both H1, exactly one H1, both H0) for the observed pair."""

    p11: float
    pmix: float
    p00: float

    def __post_init__(self):
        _check_simplex((self.p11, self.pmix, self.p00), "ScanBelief")

    @classmethod
    def prior(cls, pi0: float) -> "ScanBelief":
        if not 0.0 <= pi0 <= 1.0:
            raise ValueError("pi0 must lie in [0, 1]")
        return cls(pi0 * pi0, 2.0 * pi0 * (1.0 - pi0), (1.0 - pi0) ** 2)

    def as_tuple(self):
        return (self.p11, self.pmix, self.p00)


@dataclass(frozen=True)
class RefineBelief:
    """Posterior over the joint states (s1, s2) in {11, 10, 01, 00}."""

    r11: float
    r10: float
    r01: float
    r00: float

    def __post_init__(self):
        _check_simplex((self.r11, self.r10, self.r01, self.r00), "RefineBelief")

    @classmethod
    def from_scan(cls, p: ScanBelief) -> "RefineBelief":
        """Refinement start: the mixed mass is split evenly over 10 and 01."""
        half = 0.5 * p.pmix
        return cls(p.p11, half, half, p.p00)

    def as_tuple(self):
        return (self.r11, self.r10, self.r01, self.r00)


@dataclass(frozen=True)
class QStats:
    """Marginal posteriors that s1 (q1) and s2 (q2) are generated by f1."""

    q1: float
    q2: float


def update_single(belief: SingleBelief, pi0: float, z: float, switched: bool,
                  model: ModelPair) -> SingleBelief:
    """Bayes update of pi after observing ``z``; restarts from pi0 after a switch."""
    base = pi0 if switched else belief.pi
    t = float(model.log_ratio(1, z))
    p = _normalise([_log(base) + t, _log(1.0 - base)])
    return SingleBelief(p[0])


def scan_log_likelihoods(model: ModelPair, z: float):
    """(log g2, log g1, log g0) at ``z``."""
    return (float(model.logpdf(2, 2, z)), float(model.logpdf(2, 1, z)),
            float(model.logpdf(2, 0, z)))


def update_scan(belief: ScanBelief, prior: ScanBelief, z: float, switched: bool,
                model: ModelPair) -> ScanBelief:
    """Bayes update of the scanning triple; a switch restarts from ``prior``."""
    base = prior if switched else belief
    lg2, lg1, lg0 = scan_log_likelihoods(model, z)
    p = _normalise([_log(base.p11) + lg2, _log(base.pmix) + lg1, _log(base.p00) + lg0])
    return ScanBelief(*p)


def update_refine(belief: RefineBelief, x: float, model: ModelPair) -> RefineBelief:
    """Bayes update after observing ``x`` from the first candidate s1."""
    lf1 = float(model.logpdf(1, 1, x))
    lf0 = float(model.logpdf(1, 0, x))
    r = _normalise([_log(belief.r11) + lf1, _log(belief.r10) + lf1,
                    _log(belief.r01) + lf0, _log(belief.r00) + lf0])
    return RefineBelief(*r)


def q_stats(belief: RefineBelief) -> QStats:
    return QStats(belief.r11 + belief.r10, belief.r11 + belief.r01)


def refine_lr(q1_0: float, q1_j: float) -> float:
    """Likelihood ratio accumulated from q1_0 to q1_j via the odds mapping."""
    if not (0.0 < q1_0 < 1.0) or not (0.0 <= q1_j < 1.0):
        raise ValueError("refine_lr needs q1_0 in (0, 1) and q1_j in [0, 1)")
    return (q1_j / (1.0 - q1_j)) * ((1.0 - q1_0) / q1_0)


def update_q1(q1: float, x: float, model: ModelPair) -> float:
    """Scalar Bayes update of q1 with the ratio f1/f0."""
    return _normalise([_log(q1) + float(model.log_ratio(1, x)), _log(1.0 - q1)])[0]
