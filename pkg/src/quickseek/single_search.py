"""Single-observation CUSUM search.

The observer samples one sequence at a time and runs the LLR walk
``W_k = W_{k-1} + log f1(Y_k)/f0(Y_k)`` started at 0.  The sequence is abandoned
when ``W_k < 0`` (lower threshold A = 1) and claimed when ``W_k > log B``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .models import ModelPair, ObservationStream
from .records import DEFAULT_MAX_SAMPLES, TrialRecord


@dataclass(frozen=True)
class SingleConfig:
    """Prior ``pi0``, upper threshold ``B`` and (informational) FIP budget."""

    pi0: float
    B: float
    zeta: Optional[float] = None

    def __post_init__(self):
        if not 0.0 < self.pi0 <= 1.0:
            raise ValueError(f"pi0 must lie in (0, 1], got {self.pi0}")
        if not self.B > 1.0:
            raise ValueError(f"B must exceed A = 1, got {self.B}")
        if self.zeta is not None and not 0.0 < self.zeta < 1.0:
            raise ValueError(f"zeta must lie in (0, 1), got {self.zeta}")

    @property
    def A(self) -> float:
        return 1.0


@dataclass(frozen=True)
class RenewalStats:
    """Exit probabilities and mean dwell times of one CUSUM renewal.

    ``alpha`` is the upper-exit probability under the null component and
    ``beta`` the lower-exit probability under the alternative.  For the
    scanning walk the null is g0, the alternative g1, and ``gamma`` /
    ``e2_eta`` describe the both-active component g2.
    """

    alpha: float
    beta: float
    e0_eta: float
    e1_eta: float
    alpha_se: float
    beta_se: float
    e0_eta_se: float
    e1_eta_se: float
    n_trials: int
    gamma: Optional[float] = None
    gamma_se: Optional[float] = None
    e2_eta: Optional[float] = None
    e2_eta_se: Optional[float] = None
    overshoot_factor: Optional[float] = None

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0 and 0.0 <= self.beta <= 1.0):
            raise ValueError("alpha and beta must lie in [0, 1]")
        if self.e0_eta < 1.0 or self.e1_eta < 1.0:
            raise ValueError("dwell times are at least one sample")


def design_threshold_single(pi0: float, zeta: float) -> SingleConfig:
    """Threshold with ``1/B = zeta/(1-zeta) * pi0/(1-pi0)``."""
    if not 0.0 < pi0 < 1.0:
        raise ValueError(f"pi0 must lie in (0, 1), got {pi0}")
    if not 0.0 < zeta < 1.0:
        raise ValueError(f"zeta must lie in (0, 1), got {zeta}")
    B = 1.0 / ((zeta / (1.0 - zeta)) * (pi0 / (1.0 - pi0)))
    if not B > 1.0:
        raise ValueError(f"budget zeta={zeta} with pi0={pi0} gives B={B} <= A = 1")
    return SingleConfig(pi0=pi0, B=B, zeta=zeta)


def cusum_dwell(stream: ObservationStream, n_mixed: int, n_active: int,
                step: Callable[[float], float], log_b: float, budget: int):
    """One renewal of a CUSUM walk on a fresh sequence (or group).

    Returns ``(eta, W_eta, exited_up)``; ``exited_up`` is None when the
    sample budget ran out first.
    """
    w = 0.0
    eta = 0
    draw = stream.draw
    while eta < budget:
        w += step(draw(n_mixed, n_active))
        eta += 1
        if w < 0.0:
            return eta, w, False
        if w > log_b:
            return eta, w, True
    return eta, w, None


def run_single_trial(model: ModelPair, cfg: SingleConfig, rng,
                     max_samples: int = DEFAULT_MAX_SAMPLES) -> TrialRecord:
    """Search until a sequence is claimed."""
    stream = ObservationStream(model, rng)
    step = model.log_ratio_fn(1)
    log_b = math.log(cfg.B)
    used = 0
    switches = 0
    while True:
        active = stream.bernoulli(cfg.pi0)
        eta, _, up = cusum_dwell(stream, 1, int(active), step, log_b, max_samples - used)
        used += eta
        if up is None:
            return TrialRecord("single", used, 0, switches, False, truncated=True)
        if up:
            return TrialRecord("single", used, 0, switches, bool(active))
        switches += 1


def _mean_se(values):
    values = np.asarray(values, dtype=float)
    if values.size < 2:
        return float(values.mean()), 0.0
    return float(values.mean()), float(values.std(ddof=1) / math.sqrt(values.size))


def sample_dwells(model: ModelPair, n_mixed: int, n_active: int, log_b: float,
                  n_trials: int, rng, max_samples: int = DEFAULT_MAX_SAMPLES):
    """Arrays (eta, W_eta, exited_up) over ``n_trials`` independent renewals
    of the walk on ``log g(n, 1)/g(n, 0)`` with data from ``(n_mixed, n_active)``."""
    stream = ObservationStream(model, rng)
    step = model.log_ratio_fn(n_mixed)
    eta = np.empty(n_trials)
    w = np.empty(n_trials)
    up = np.empty(n_trials, dtype=bool)
    for i in range(n_trials):
        e, wi, u = cusum_dwell(stream, n_mixed, n_active, step, log_b, max_samples)
        if u is None:
            raise RuntimeError("renewal exceeded the sample cap")
        eta[i], w[i], up[i] = e, wi, u
    return eta, w, up


def renewal_from_dwells(n_mixed: int, log_b: float, dwells: dict) -> RenewalStats:
    """Summarise dwell samples keyed by n_active."""
    eta0, _, up0 = dwells[0]
    eta1, w1, up1 = dwells[1]
    alpha, alpha_se = _mean_se(up0)
    beta, beta_se = _mean_se(~up1)
    e0, e0_se = _mean_se(eta0)
    e1, e1_se = _mean_se(eta1)
    overshoot = float(np.mean(np.exp(-(w1[up1] - log_b)))) if up1.any() else None
    extra = {}
    if n_mixed == 2 and 2 in dwells:
        eta2, _, up2 = dwells[2]
        extra["gamma"], extra["gamma_se"] = _mean_se(~up2)
        extra["e2_eta"], extra["e2_eta_se"] = _mean_se(eta2)
    return RenewalStats(alpha, beta, e0, e1, alpha_se, beta_se, e0_se, e1_se,
                        n_trials=len(eta0), overshoot_factor=overshoot, **extra)


def estimate_renewal(model: ModelPair, cfg: SingleConfig, n_trials: int, rng,
                     max_samples: int = DEFAULT_MAX_SAMPLES) -> RenewalStats:
    """Monte Carlo estimates of alpha, beta, E0[eta], E1[eta]."""
    log_b = math.log(cfg.B)
    dwells = {h: sample_dwells(model, 1, h, log_b, n_trials, rng, max_samples) for h in (0, 1)}
    return renewal_from_dwells(1, log_b, dwells)


def asd_fip_from_renewal(stats: RenewalStats, pi0: float):
    """ASD and FIP of the single strategy from its renewal quantities."""
    den = pi0 * (1.0 - stats.beta) + (1.0 - pi0) * stats.alpha
    if den <= 0.0:
        raise ZeroDivisionError("no renewal ever ends in a claim")
    asd = (pi0 * stats.e1_eta + (1.0 - pi0) * stats.e0_eta) / den
    fip = (1.0 - pi0) * stats.alpha / den
    return asd, fip


def asymptotic_asd_single(pi0: float, regime: str, stats: RenewalStats) -> float:
    """Leading-order ASD as pi0 -> 0 with rho = alpha/pi0 (rho = 0 for RIE)."""
    if regime == "FIE":
        rho = stats.alpha / pi0
    elif regime == "RIE":
        rho = 0.0
    else:
        raise ValueError("regime must be 'FIE' or 'RIE'")
    return (1.0 - pi0) / (rho * (1.0 - pi0) + (1.0 - stats.beta)) * stats.e0_eta / pi0
